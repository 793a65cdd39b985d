#include "cdgc/tensor.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace cdgc {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Matrix::shape_str() const { return fmt::format("({}x{})", rows_, cols_); }

std::string FeatureMap::shape_str() const {
    return fmt::format("({},{},{},{})", n_, c_, t_, v_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw DimError(fmt::format("matmul: inner dimensions differ, {} vs {}", a.shape_str(),
                                   b.shape_str()));
    Matrix out(a.rows(), b.cols());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    // i-k-j order keeps both b and out rows contiguous in the inner loop.
    // Each output row is owned by one thread, so the summation order (and
    // therefore the result) does not depend on the thread count.
#pragma omp parallel for schedule(static) num_threads(get_num_threads()) if (get_num_threads() > 1 && m > 1)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        double* out_row = out.row(i);
        const double* a_row = a.row(i);
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = a_row[kk];
            const double* b_row = b.row(kk);
            for (std::size_t j = 0; j < n; ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Matrix frame_matrix(const FeatureMap& x, std::size_t n, std::size_t t) {
    Matrix m(x.vertices(), x.channels());
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const double* row = x.vertex_row(n, c, t);
        for (std::size_t v = 0; v < x.vertices(); ++v) m(v, c) = row[v];
    }
    return m;
}

void store_frame(FeatureMap& out, std::size_t n, std::size_t t, const Matrix& m) {
    for (std::size_t c = 0; c < out.channels(); ++c) {
        double* row = out.vertex_row(n, c, t);
        for (std::size_t v = 0; v < out.vertices(); ++v) row[v] = m(v, c);
    }
}

void add_frame(FeatureMap& out, std::size_t n, std::size_t t, const Matrix& m) {
    for (std::size_t c = 0; c < out.channels(); ++c) {
        double* row = out.vertex_row(n, c, t);
        for (std::size_t v = 0; v < out.vertices(); ++v) row[v] += m(v, c);
    }
}

void add_into(Matrix& acc, const Matrix& m) {
    if (!acc.same_shape(m))
        throw DimError(fmt::format("add_into: shapes differ, {} vs {}", acc.shape_str(),
                                   m.shape_str()));
    for (std::size_t i = 0; i < acc.size(); ++i) acc.data()[i] += m.data()[i];
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols());
    if (a.same_shape(b)) {
        for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    } else if (b.rows() == a.rows() && b.cols() == 1) {
        for (std::size_t r = 0; r < a.rows(); ++r) {
            const double s = b(r, 0);
            for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) * s;
        }
    } else if (b.rows() == 1 && b.cols() == 1) {
        const double s = b(0, 0);
        for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * s;
    } else {
        throw DimError(fmt::format("hadamard: {} not broadcastable to {}", b.shape_str(),
                                   a.shape_str()));
    }
    return out;
}

FeatureMap hadamard(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b))
        throw DimError(fmt::format("hadamard: shapes differ, {} vs {}", a.shape_str(),
                                   b.shape_str()));
    FeatureMap out(a.batch(), a.channels(), a.frames(), a.vertices());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

Matrix broadcast_rowsum(const Matrix& v, std::size_t channels) {
    if (v.cols() != 1)
        throw DimError(fmt::format("broadcast_rowsum: expected column vector, got {}",
                                   v.shape_str()));
    if (channels < 1) throw ArgError("broadcast_rowsum: channel count must be >= 1");
    Matrix out(v.rows(), channels);
    for (std::size_t r = 0; r < v.rows(); ++r) {
        const double s = v(r, 0);
        for (std::size_t c = 0; c < channels; ++c) out(r, c) = s;
    }
    return out;
}

FeatureMap relu(const FeatureMap& x) {
    FeatureMap out(x.batch(), x.channels(), x.frames(), x.vertices());
    for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    return out;
}

FeatureMap batchnorm_forward(const FeatureMap& x, std::span<const double> gamma,
                             std::span<const double> beta, double eps, BatchNormStats* stats) {
    if (eps <= 0.0) throw ArgError(fmt::format("batchnorm: eps must be > 0, got {}", eps));
    const std::size_t C = x.channels();
    if (gamma.size() != C || beta.size() != C)
        throw DimError(fmt::format("batchnorm: gamma/beta sizes ({}, {}) do not match {} channels",
                                   gamma.size(), beta.size(), C));
    const std::size_t m = x.batch() * x.frames() * x.vertices();
    std::vector<double> mean(C, 0.0), var(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* row = x.vertex_row(n, c, t);
                for (std::size_t v = 0; v < x.vertices(); ++v) s += row[v];
            }
        mean[c] = s / static_cast<double>(m);
        double sq = 0.0;
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* row = x.vertex_row(n, c, t);
                for (std::size_t v = 0; v < x.vertices(); ++v) {
                    const double d = row[v] - mean[c];
                    sq += d * d;
                }
            }
        var[c] = sq / static_cast<double>(m);
    }
    FeatureMap out(x.batch(), x.channels(), x.frames(), x.vertices());
    for (std::size_t c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(var[c] + eps);
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t v = 0; v < x.vertices(); ++v)
                    dst[v] = gamma[c] * (src[v] - mean[c]) * inv + beta[c];
            }
    }
    if (stats) {
        stats->mean = std::move(mean);
        stats->var = std::move(var);
    }
    return out;
}

FeatureMap batchnorm_location_forward(const FeatureMap& x, std::span<const double> gamma,
                                      std::span<const double> beta, double eps,
                                      BatchNormStats* stats) {
    if (eps <= 0.0) throw ArgError(fmt::format("batchnorm: eps must be > 0, got {}", eps));
    const std::size_t C = x.channels(), V = x.vertices();
    if (gamma.size() != C * V || beta.size() != C * V)
        throw DimError(fmt::format("batchnorm: gamma/beta sizes ({}, {}) do not match {} locations",
                                   gamma.size(), beta.size(), C * V));
    const std::size_t m = x.batch() * x.frames();
    std::vector<double> mean(C * V, 0.0), var(C * V, 0.0);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* row = x.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) mean[c * V + v] += row[v];
            }
    for (double& s : mean) s /= static_cast<double>(m);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* row = x.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) {
                    const double d = row[v] - mean[c * V + v];
                    var[c * V + v] += d * d;
                }
            }
    for (double& s : var) s /= static_cast<double>(m);
    FeatureMap out(x.batch(), C, x.frames(), V);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) {
                    const std::size_t l = c * V + v;
                    dst[v] = gamma[l] * (src[v] - mean[l]) / std::sqrt(var[l] + eps) + beta[l];
                }
            }
    if (stats) {
        stats->mean = std::move(mean);
        stats->var = std::move(var);
    }
    return out;
}

FeatureMap batchnorm_eval(const FeatureMap& x, std::span<const double> gamma,
                          std::span<const double> beta, const BatchNormStats& stats,
                          double eps) {
    const std::size_t C = x.channels();
    if (gamma.size() != C || stats.mean.size() != C || stats.var.size() != C)
        throw DimError("batchnorm eval: parameter sizes do not match channel count");
    FeatureMap out(x.batch(), C, x.frames(), x.vertices());
    for (std::size_t c = 0; c < C; ++c) {
        const double inv = 1.0 / std::sqrt(stats.var[c] + eps);
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t v = 0; v < x.vertices(); ++v)
                    dst[v] = gamma[c] * (src[v] - stats.mean[c]) * inv + beta[c];
            }
    }
    return out;
}

FeatureMap batchnorm_location_eval(const FeatureMap& x, std::span<const double> gamma,
                                   std::span<const double> beta, const BatchNormStats& stats,
                                   double eps) {
    const std::size_t C = x.channels(), V = x.vertices();
    if (gamma.size() != C * V || stats.mean.size() != C * V || stats.var.size() != C * V)
        throw DimError("batchnorm eval: parameter sizes do not match location count");
    FeatureMap out(x.batch(), C, x.frames(), V);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < x.batch(); ++n)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) {
                    const std::size_t l = c * V + v;
                    dst[v] = gamma[l] * (src[v] - stats.mean[l]) / std::sqrt(stats.var[l] + eps) +
                             beta[l];
                }
            }
    return out;
}

bool all_finite(const FeatureMap& x) {
    return std::all_of(x.data(), x.data() + x.size(), [](double d) { return std::isfinite(d); });
}

bool all_finite(const Matrix& m) {
    return std::all_of(m.data(), m.data() + m.size(), [](double d) { return std::isfinite(d); });
}

namespace {
double max_rel_deviation_impl(const double* a, const double* b, std::size_t n) {
    double max_abs = 0.0, max_diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        max_abs = std::max({max_abs, std::abs(a[i]), std::abs(b[i])});
        max_diff = std::max(max_diff, std::abs(a[i] - b[i]));
    }
    return max_diff / std::max(max_abs, 1e-12);
}
}  // namespace

double max_rel_deviation(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b))
        throw DimError(fmt::format("max_rel_deviation: shapes differ, {} vs {}", a.shape_str(),
                                   b.shape_str()));
    return max_rel_deviation_impl(a.data(), b.data(), a.size());
}

double max_rel_deviation(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b))
        throw DimError(fmt::format("max_rel_deviation: shapes differ, {} vs {}", a.shape_str(),
                                   b.shape_str()));
    return max_rel_deviation_impl(a.data(), b.data(), a.size());
}

}  // namespace cdgc
