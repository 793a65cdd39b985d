#include "cdgc/gconv.hpp"

#include <fmt/format.h>

namespace cdgc {

namespace {

void check_partitioned(const FeatureMap& x, const PartitionedAdjacency& adj,
                       const CdgcLayerParams& params) {
    if (int(x.vertices()) != adj.num_vertices())
        throw DimError(fmt::format("gconv: input has {} vertices, adjacency has {}",
                                   x.vertices(), adj.num_vertices()));
    if (int(params.weights.size()) != adj.num_subsets())
        throw DimError(fmt::format("gconv: {} weight matrices for {} subsets",
                                   params.weights.size(), adj.num_subsets()));
    for (const Matrix& w : params.weights)
        if (!w.same_shape(params.weights[0]))
            throw DimError("gconv: subset weight shapes differ");
    if (params.c_in() != int(x.channels()))
        throw DimError(fmt::format("gconv: weights expect {} channels, input has {}",
                                   params.c_in(), x.channels()));
}

}  // namespace

CdgcLayerParams random_layer_params(Rng& rng, int num_subsets, int c_in, int c_out,
                                    double alpha, int mask_vertices) {
    CdgcLayerParams p;
    p.alpha = alpha;
    for (int k = 0; k < num_subsets; ++k) {
        Matrix w(c_in, c_out);
        for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
        p.weights.push_back(std::move(w));
    }
    if (mask_vertices > 0) {
        p.mask = Matrix(mask_vertices, c_in);
        for (std::size_t i = 0; i < p.mask.size(); ++i) p.mask.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return p;
}

FeatureMap vanilla_gconv(const FeatureMap& x, const PartitionedAdjacency& adj,
                         const CdgcLayerParams& params) {
    check_partitioned(x, adj, params);
    const std::size_t N = x.batch(), T = x.frames(), V = x.vertices();
    FeatureMap out(N, params.c_out(), T, V);
    const std::ptrdiff_t slices = std::ptrdiff_t(N * T);
#pragma omp parallel for schedule(static) num_threads(get_num_threads()) if (get_num_threads() > 1 && slices > 1)
    for (std::ptrdiff_t s = 0; s < slices; ++s) {
        const std::size_t n = std::size_t(s) / T, t = std::size_t(s) % T;
        const Matrix X = frame_matrix(x, n, t);
        Matrix y(V, params.c_out());
        for (std::size_t k = 0; k < params.weights.size(); ++k)
            add_into(y, matmul(matmul(adj.subsets[k], X), params.weights[k]));
        store_frame(out, n, t, y);
    }
    return out;
}

FeatureMap cdgc_naive(const FeatureMap& x, const SkeletonGraph& g,
                      const PartitionLabeling& labeling, const CdgcLayerParams& params) {
    const int V = g.num_vertices;
    if (int(x.vertices()) != V || labeling.num_vertices != V)
        throw DimError("cdgc_naive: vertex count mismatch");
    if (int(params.weights.size()) != kNumSubsets)
        throw DimError("cdgc_naive: expected one weight matrix per subset");
    if (params.c_in() != int(x.channels()))
        throw DimError("cdgc_naive: channel mismatch");

    const int C_in = params.c_in(), C_out = params.c_out();
    const std::size_t N = x.batch(), T = x.frames();
    const double alpha = params.alpha;

    // subset member counts per receptive field, the 1/Z normalizer
    std::vector<int> members(size_t(V) * kNumSubsets, 0);
    for (int i = 0; i < V; ++i)
        for (int j = 0; j < V; ++j) {
            int k = labeling.at(i, j);
            if (k >= 0) ++members[size_t(i) * kNumSubsets + k];
        }

    FeatureMap out(N, C_out, T, V);
    std::vector<double> diff_acc(C_out), agg_acc(C_out);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t t = 0; t < T; ++t)
            for (int i = 0; i < V; ++i) {
                std::fill(diff_acc.begin(), diff_acc.end(), 0.0);
                std::fill(agg_acc.begin(), agg_acc.end(), 0.0);
                for (int k = 0; k < kNumSubsets; ++k) {
                    if (members[size_t(i) * kNumSubsets + k] == 0) continue;
                    const Matrix& w = params.weights[k];
                    const double z = 1.0 / members[size_t(i) * kNumSubsets + k];
                    for (int j = 0; j < V; ++j) {
                        if (labeling.at(i, j) != k) continue;
                        for (int co = 0; co < C_out; ++co) {
                            double d = 0.0, a = 0.0;
                            for (int ci = 0; ci < C_in; ++ci) {
                                const double xj = x(n, ci, t, j);
                                d += (xj - x(n, ci, t, i)) * w(ci, co);
                                a += xj * w(ci, co);
                            }
                            diff_acc[co] += z * d;
                            agg_acc[co] += z * a;
                        }
                    }
                }
                for (int co = 0; co < C_out; ++co)
                    out(n, co, t, i) = alpha * diff_acc[co] + (1.0 - alpha) * agg_acc[co];
            }
    return out;
}

FeatureMap cdgc_matrix(const FeatureMap& x, const PartitionedAdjacency& adj,
                       const CdgcLayerParams& params) {
    check_partitioned(x, adj, params);
    const std::size_t N = x.batch(), C = x.channels(), T = x.frames(), V = x.vertices();
    const double alpha = params.alpha;

    std::vector<Matrix> ahat;  // row sums replicated across channels
    if (alpha != 0.0)
        for (const Matrix& rs : adj.rowsums) ahat.push_back(broadcast_rowsum(rs, C));

    FeatureMap out(N, params.c_out(), T, V);
    const std::ptrdiff_t slices = std::ptrdiff_t(N * T);
#pragma omp parallel for schedule(static) num_threads(get_num_threads()) if (get_num_threads() > 1 && slices > 1)
    for (std::ptrdiff_t s = 0; s < slices; ++s) {
        const std::size_t n = std::size_t(s) / T, t = std::size_t(s) % T;
        const Matrix X = frame_matrix(x, n, t);
        Matrix y(V, params.c_out());
        for (std::size_t k = 0; k < params.weights.size(); ++k) {
            Matrix d = matmul(adj.subsets[k], X);
            if (alpha != 0.0) {
                const Matrix sub = hadamard(X, ahat[k]);
                for (std::size_t i = 0; i < d.size(); ++i)
                    d.data()[i] -= alpha * sub.data()[i];
            }
            add_into(y, matmul(d, params.weights[k]));
        }
        store_frame(out, n, t, y);
    }
    return out;
}

FeatureMap spatial_shift(const FeatureMap& x) {
    const std::size_t V = x.vertices();
    FeatureMap out(x.batch(), x.channels(), x.frames(), V);
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const std::size_t off = c % V;
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t i = 0; i < V; ++i) dst[i] = src[(i + off) % V];
            }
        }
    return out;
}

FeatureMap spatial_unshift(const FeatureMap& x) {
    const std::size_t V = x.vertices();
    FeatureMap out(x.batch(), x.channels(), x.frames(), V);
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const std::size_t off = c % V;
            for (std::size_t t = 0; t < x.frames(); ++t) {
                const double* src = x.vertex_row(n, c, t);
                double* dst = out.vertex_row(n, c, t);
                for (std::size_t i = 0; i < V; ++i) dst[(i + off) % V] = src[i];
            }
        }
    return out;
}

FeatureMap accelerated_cdgc(const FeatureMap& x0, const CdgcLayerParams& params) {
    if (params.weights.size() != 1)
        throw DimError(fmt::format("accelerated op: expected a single weight matrix, got {}",
                                   params.weights.size()));
    const std::size_t N = x0.batch(), C = x0.channels(), T = x0.frames(), V = x0.vertices();
    if (params.mask.rows() != V || params.mask.cols() != C)
        throw DimError(fmt::format("accelerated op: mask {} does not match (V={}, C={})",
                                   params.mask.shape_str(), V, C));
    if (params.c_in() != int(C))
        throw DimError(fmt::format("accelerated op: weights expect {} channels, input has {}",
                                   params.c_in(), C));

    const Matrix& W = params.weights[0];
    const Matrix& M = params.mask;
    const double alpha = params.alpha;
    FeatureMap out(N, params.c_out(), T, V);
    const std::ptrdiff_t slices = std::ptrdiff_t(N * T);
#pragma omp parallel for schedule(static) num_threads(get_num_threads()) if (get_num_threads() > 1 && slices > 1)
    for (std::ptrdiff_t s = 0; s < slices; ++s) {
        const std::size_t n = std::size_t(s) / T, t = std::size_t(s) % T;
        // masked shifted-minus-original differences, assembled in one pass
        Matrix d(V, C);
        for (std::size_t c = 0; c < C; ++c) {
            const double* src = x0.vertex_row(n, c, t);
            const std::size_t off = c % V;
            for (std::size_t i = 0; i < V; ++i) {
                double val = src[(i + off) % V];
                if (alpha != 0.0) val -= alpha * src[i];
                d(i, c) = val * M(i, c);
            }
        }
        store_frame(out, n, t, matmul(d, W));
    }
    return out;
}

FeatureMap temporal_shift3(const FeatureMap& x) {
    const std::size_t N = x.batch(), C = x.channels(), T = x.frames(), V = x.vertices();
    FeatureMap out(N, C, T, V);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const int delta = int(3 * c / C) - 1;  // -1, 0, +1 across channel thirds
            for (std::size_t t = 0; t < T; ++t) {
                const std::ptrdiff_t src_t = std::ptrdiff_t(t) - delta;
                double* dst = out.vertex_row(n, c, t);
                if (src_t < 0 || src_t >= std::ptrdiff_t(T)) continue;  // stays zero
                const double* src = x.vertex_row(n, c, std::size_t(src_t));
                std::copy(src, src + V, dst);
            }
        }
    return out;
}

std::size_t strided_frames(std::size_t frames, int stride) {
    return (frames - 1) / std::size_t(stride) + 1;
}

FeatureMap temporal_conv(const FeatureMap& x, const Matrix& w, int stride) {
    const std::size_t N = x.batch(), C = x.channels(), T = x.frames(), V = x.vertices();
    if (stride < 1) throw ArgError(fmt::format("temporal conv: stride must be >= 1, got {}", stride));
    if (C == 0 || w.rows() % C != 0)
        throw DimError(fmt::format("temporal conv: weight rows {} not a multiple of {} channels",
                                   w.rows(), C));
    const std::size_t taps = w.rows() / C;
    if (taps % 2 == 0) throw ArgError(fmt::format("temporal conv: taps must be odd, got {}", taps));
    const std::size_t C_out = w.cols();
    const std::ptrdiff_t pad = std::ptrdiff_t(taps / 2);
    const std::size_t T_out = strided_frames(T, stride);
    FeatureMap out(N, C_out, T_out, V);
    const std::ptrdiff_t slices = std::ptrdiff_t(N * T_out);
#pragma omp parallel for schedule(static) num_threads(get_num_threads()) if (get_num_threads() > 1 && slices > 1)
    for (std::ptrdiff_t s = 0; s < slices; ++s) {
        const std::size_t n = std::size_t(s) / T_out, to = std::size_t(s) % T_out;
        Matrix acc(C_out, V);
        for (std::size_t tap = 0; tap < taps; ++tap) {
            const std::ptrdiff_t ti = std::ptrdiff_t(to) * stride + std::ptrdiff_t(tap) - pad;
            if (ti < 0 || ti >= std::ptrdiff_t(T)) continue;
            for (std::size_t ci = 0; ci < C; ++ci) {
                const double* xr = x.vertex_row(n, ci, std::size_t(ti));
                const double* wr = w.row(tap * C + ci);
                for (std::size_t co = 0; co < C_out; ++co) {
                    const double wv = wr[co];
                    double* ar = acc.row(co);
                    for (std::size_t v = 0; v < V; ++v) ar[v] += wv * xr[v];
                }
            }
        }
        for (std::size_t co = 0; co < C_out; ++co) {
            const double* ar = acc.row(co);
            double* dst = out.vertex_row(n, co, to);
            std::copy(ar, ar + V, dst);
        }
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> gradient_antisymmetry_probe(
    const FeatureMap& x, const SkeletonGraph& g, int i, int j) {
    if (i < 0 || i >= g.num_vertices || j < 0 || j >= g.num_vertices)
        throw ArgError(fmt::format("probe: vertex pair ({}, {}) out of range", i, j));
    if (!g.adjacent(i, j))
        throw ArgError(fmt::format("probe: vertices {} and {} are not adjacent", i, j));
    std::vector<double> at_i, at_j;
    at_i.reserve(x.batch() * x.channels() * x.frames());
    at_j.reserve(at_i.capacity());
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c)
            for (std::size_t t = 0; t < x.frames(); ++t) {
                at_i.push_back(x(n, c, t, j) - x(n, c, t, i));
                at_j.push_back(x(n, c, t, i) - x(n, c, t, j));
            }
    return {std::move(at_i), std::move(at_j)};
}

}  // namespace cdgc
