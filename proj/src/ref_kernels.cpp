#include "cdgc/ref_kernels.hpp"

#include <cmath>

#include "cdgc/common.hpp"

namespace cdgc::ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimError("ref matmul: " + a.shape_str() + " x " + b.shape_str());
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    return out;
}

FeatureMap batchnorm_forward(const FeatureMap& x, std::span<const double> gamma,
                             std::span<const double> beta, double eps) {
    const std::size_t N = x.batch(), C = x.channels(), T = x.frames(), V = x.vertices();
    if (gamma.size() != C || beta.size() != C)
        throw DimError("ref batchnorm: gamma/beta length mismatch");
    FeatureMap out(N, C, T, V);
    const double count = double(N) * double(T) * double(V);
    for (std::size_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t v = 0; v < V; ++v) mean += x(n, c, t, v);
        mean /= count;
        double var = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t v = 0; v < V; ++v) {
                    double d = x(n, c, t, v) - mean;
                    var += d * d;
                }
        var /= count;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t v = 0; v < V; ++v)
                    out(n, c, t, v) = gamma[c] * ((x(n, c, t, v) - mean) * inv) + beta[c];
    }
    return out;
}

}  // namespace cdgc::ref
