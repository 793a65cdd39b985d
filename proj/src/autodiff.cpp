#include "cdgc/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace cdgc::ad {

namespace {

void ensure_grad(MapSlot& s) {
    if (s.grad.empty() && !s.value.empty())
        s.grad = FeatureMap(s.value.batch(), s.value.channels(), s.value.frames(),
                            s.value.vertices());
}
void ensure_grad(MatSlot& s) {
    if (s.grad.empty() && !s.value.empty()) s.grad = Matrix(s.value.rows(), s.value.cols());
}
void ensure_grad(VecSlot& s) {
    if (s.grad.size() != s.value.size()) s.grad.assign(s.value.size(), 0.0);
}

}  // namespace

Map Tape::input(FeatureMap v, bool needs_grad) {
    auto slot = std::make_shared<MapSlot>();
    slot->value = std::move(v);
    slot->needs_grad = needs_grad;
    ensure_grad(*slot);
    return slot;
}

Mat Tape::mat(Matrix v, bool needs_grad) {
    auto slot = std::make_shared<MatSlot>();
    slot->value = std::move(v);
    slot->needs_grad = needs_grad;
    ensure_grad(*slot);
    return slot;
}

Vec Tape::vec(std::vector<double> v, bool needs_grad) {
    auto slot = std::make_shared<VecSlot>();
    slot->value = std::move(v);
    slot->needs_grad = needs_grad;
    ensure_grad(*slot);
    return slot;
}

Scalar Tape::scalar(double v, bool needs_grad) {
    auto slot = std::make_shared<ScalarSlot>();
    slot->value = v;
    slot->needs_grad = needs_grad;
    return slot;
}

Map Tape::partitioned_gconv(const Map& x, const PartitionedAdjacency& adj,
                            const std::vector<Mat>& weights, const Scalar& alpha) {
    CdgcLayerParams p;
    p.alpha = alpha ? alpha->value : 0.0;
    for (const Mat& w : weights) p.weights.push_back(w->value);

    auto out = std::make_shared<MapSlot>();
    out->value = cdgc_matrix(x->value, adj, p);
    out->needs_grad = x->needs_grad || alpha != nullptr ||
                      std::any_of(weights.begin(), weights.end(),
                                  [](const Mat& w) { return w->needs_grad; });

    ops_.push_back([x, &adj, weights, alpha, out] {
        if (out->grad.empty()) return;
        const FeatureMap& dy = out->grad;
        const FeatureMap& xv = x->value;
        const std::size_t N = xv.batch(), C_in = xv.channels(), T = xv.frames();
        const double a = alpha ? alpha->value : 0.0;
        const bool want_alpha = alpha && alpha->needs_grad;
        const bool want_x = x->needs_grad;
        const std::size_t K = weights.size();

        std::vector<Matrix> a_t, w_t, ahat;
        for (std::size_t k = 0; k < K; ++k) {
            if (want_x) a_t.push_back(transpose(adj.subsets[k]));
            w_t.push_back(transpose(weights[k]->value));
            if (a != 0.0 || want_alpha) ahat.push_back(broadcast_rowsum(adj.rowsums[k], C_in));
        }
        if (want_x) ensure_grad(*x);
        for (const Mat& w : weights)
            if (w->needs_grad) ensure_grad(*w);

        double da = 0.0;
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t) {
                const Matrix X = frame_matrix(xv, n, t);
                const Matrix dY = frame_matrix(dy, n, t);
                Matrix dX(X.rows(), X.cols());
                for (std::size_t k = 0; k < K; ++k) {
                    if (weights[k]->needs_grad) {
                        // rebuild the pre-weight intermediate A_k X - a * Ahat_k (.) X
                        Matrix d = matmul(adj.subsets[k], X);
                        if (a != 0.0) {
                            const Matrix sub = hadamard(X, ahat[k]);
                            for (std::size_t i = 0; i < d.size(); ++i)
                                d.data()[i] -= a * sub.data()[i];
                        }
                        add_into(weights[k]->grad, matmul(transpose(d), dY));
                    }
                    if (!want_x && !want_alpha) continue;
                    const Matrix g = matmul(dY, w_t[k]);  // dY W_k^T, (V x C_in)
                    if (want_x) {
                        add_into(dX, matmul(a_t[k], g));
                        if (a != 0.0) {
                            const Matrix sub = hadamard(g, ahat[k]);
                            for (std::size_t i = 0; i < dX.size(); ++i)
                                dX.data()[i] -= a * sub.data()[i];
                        }
                    }
                    if (want_alpha) {
                        const Matrix sub = hadamard(X, ahat[k]);
                        for (std::size_t i = 0; i < sub.size(); ++i)
                            da -= sub.data()[i] * g.data()[i];
                    }
                }
                if (want_x) add_frame(x->grad, n, t, dX);
            }
        if (want_alpha) alpha->grad += da;
    });
    return out;
}

Map Tape::shift_gconv(const Map& x0, const Mat& w, const Mat& mask, const Scalar& alpha) {
    CdgcLayerParams p;
    p.alpha = alpha ? alpha->value : 0.0;
    p.weights.push_back(w->value);
    p.mask = mask->value;

    auto out = std::make_shared<MapSlot>();
    out->value = accelerated_cdgc(x0->value, p);
    out->needs_grad = x0->needs_grad || w->needs_grad || mask->needs_grad || alpha != nullptr;

    ops_.push_back([x0, w, mask, alpha, out] {
        if (out->grad.empty()) return;
        const FeatureMap& dy = out->grad;
        const FeatureMap& xv = x0->value;
        const std::size_t N = xv.batch(), C = xv.channels(), T = xv.frames(), V = xv.vertices();
        const double a = alpha ? alpha->value : 0.0;
        const bool want_alpha = alpha && alpha->needs_grad;
        const Matrix w_t = transpose(w->value);
        const Matrix& M = mask->value;

        if (x0->needs_grad) ensure_grad(*x0);
        if (w->needs_grad) ensure_grad(*w);
        if (mask->needs_grad) ensure_grad(*mask);

        double da = 0.0;
        Matrix base(V, C), dd(V, C);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t t = 0; t < T; ++t) {
                const Matrix dY = frame_matrix(dy, n, t);
                const Matrix g = matmul(dY, w_t);  // (V x C)
                for (std::size_t c = 0; c < C; ++c) {
                    const double* src = xv.vertex_row(n, c, t);
                    const std::size_t off = c % V;
                    for (std::size_t i = 0; i < V; ++i) {
                        double val = src[(i + off) % V];
                        if (a != 0.0) val -= a * src[i];
                        base(i, c) = val;
                        dd(i, c) = g(i, c) * M(i, c);
                    }
                }
                if (w->needs_grad) {
                    const Matrix d = hadamard(base, M);
                    add_into(w->grad, matmul(transpose(d), dY));
                }
                if (mask->needs_grad) add_into(mask->grad, hadamard(base, g));
                if (want_alpha)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* src = xv.vertex_row(n, c, t);
                        for (std::size_t i = 0; i < V; ++i) da -= src[i] * dd(i, c);
                    }
                if (x0->needs_grad)
                    for (std::size_t c = 0; c < C; ++c) {
                        double* dst = x0->grad.vertex_row(n, c, t);
                        const std::size_t off = c % V;
                        for (std::size_t v = 0; v < V; ++v) {
                            dst[v] += dd((v + V - off) % V, c);
                            if (a != 0.0) dst[v] -= a * dd(v, c);
                        }
                    }
            }
        if (want_alpha) alpha->grad += da;
    });
    return out;
}

Map Tape::temporal_shift3(const Map& x) {
    auto out = std::make_shared<MapSlot>();
    out->value = cdgc::temporal_shift3(x->value);
    out->needs_grad = x->needs_grad;

    ops_.push_back([x, out] {
        if (out->grad.empty() || !x->needs_grad) return;
        ensure_grad(*x);
        const FeatureMap& dy = out->grad;
        const std::size_t N = dy.batch(), C = dy.channels(), T = dy.frames(), V = dy.vertices();
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t c = 0; c < C; ++c) {
                const int delta = int(3 * c / C) - 1;
                for (std::size_t t = 0; t < T; ++t) {
                    const std::ptrdiff_t src_t = std::ptrdiff_t(t) - delta;
                    if (src_t < 0 || src_t >= std::ptrdiff_t(T)) continue;
                    const double* g = dy.vertex_row(n, c, t);
                    double* dst = x->grad.vertex_row(n, c, std::size_t(src_t));
                    for (std::size_t v = 0; v < V; ++v) dst[v] += g[v];
                }
            }
    });
    return out;
}

Map Tape::temporal_conv(const Map& x, const Mat& w, int stride) {
    auto out = std::make_shared<MapSlot>();
    out->value = cdgc::temporal_conv(x->value, w->value, stride);
    out->needs_grad = x->needs_grad || w->needs_grad;

    ops_.push_back([x, w, stride, out] {
        if (out->grad.empty()) return;
        const FeatureMap& dy = out->grad;
        const FeatureMap& xv = x->value;
        const std::size_t N = xv.batch(), C = xv.channels(), T = xv.frames(), V = xv.vertices();
        const std::size_t taps = w->value.rows() / C, C_out = w->value.cols();
        const std::ptrdiff_t pad = std::ptrdiff_t(taps / 2);
        const std::size_t T_out = dy.frames();
        if (x->needs_grad) ensure_grad(*x);
        if (w->needs_grad) ensure_grad(*w);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t to = 0; to < T_out; ++to)
                for (std::size_t tap = 0; tap < taps; ++tap) {
                    const std::ptrdiff_t ti =
                        std::ptrdiff_t(to) * stride + std::ptrdiff_t(tap) - pad;
                    if (ti < 0 || ti >= std::ptrdiff_t(T)) continue;
                    for (std::size_t ci = 0; ci < C; ++ci) {
                        const double* xr = xv.vertex_row(n, ci, std::size_t(ti));
                        const double* wr = w->value.row(tap * C + ci);
                        double* dxr =
                            x->needs_grad ? x->grad.vertex_row(n, ci, std::size_t(ti)) : nullptr;
                        double* dwr = w->needs_grad ? w->grad.row(tap * C + ci) : nullptr;
                        for (std::size_t co = 0; co < C_out; ++co) {
                            const double* dyr = dy.vertex_row(n, co, to);
                            if (dwr) {
                                double acc = 0.0;
                                for (std::size_t v = 0; v < V; ++v) acc += xr[v] * dyr[v];
                                dwr[co] += acc;
                            }
                            if (dxr) {
                                const double wv = wr[co];
                                for (std::size_t v = 0; v < V; ++v) dxr[v] += wv * dyr[v];
                            }
                        }
                    }
                }
    });
    return out;
}

Map Tape::batchnorm_channel(const Map& x, const Vec& gamma, const Vec& beta, double eps,
                            BatchNormStats* stats) {
    auto saved = std::make_shared<BatchNormStats>();
    auto out = std::make_shared<MapSlot>();
    out->value = batchnorm_forward(x->value, gamma->value, beta->value, eps, saved.get());
    out->needs_grad = x->needs_grad || gamma->needs_grad || beta->needs_grad;
    if (stats) *stats = *saved;

    ops_.push_back([x, gamma, beta, eps, saved, out] {
        if (out->grad.empty()) return;
        const FeatureMap& dy = out->grad;
        const FeatureMap& xv = x->value;
        const std::size_t N = xv.batch(), C = xv.channels(), T = xv.frames(), V = xv.vertices();
        const double m = double(N) * double(T) * double(V);
        if (x->needs_grad) ensure_grad(*x);
        if (gamma->needs_grad) ensure_grad(*gamma);
        if (beta->needs_grad) ensure_grad(*beta);
        for (std::size_t c = 0; c < C; ++c) {
            const double mu = saved->mean[c];
            const double inv = 1.0 / std::sqrt(saved->var[c] + eps);
            double s1 = 0.0, s2 = 0.0;  // sum dy, sum dy * xhat
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t) {
                    const double* g = dy.vertex_row(n, c, t);
                    const double* xr = xv.vertex_row(n, c, t);
                    for (std::size_t v = 0; v < V; ++v) {
                        s1 += g[v];
                        s2 += g[v] * (xr[v] - mu) * inv;
                    }
                }
            if (beta->needs_grad) beta->grad[c] += s1;
            if (gamma->needs_grad) gamma->grad[c] += s2;
            if (!x->needs_grad) continue;
            const double gscale = gamma->value[c] * inv;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t) {
                    const double* g = dy.vertex_row(n, c, t);
                    const double* xr = xv.vertex_row(n, c, t);
                    double* dst = x->grad.vertex_row(n, c, t);
                    for (std::size_t v = 0; v < V; ++v) {
                        const double xhat = (xr[v] - mu) * inv;
                        dst[v] += gscale * (g[v] - s1 / m - xhat * s2 / m);
                    }
                }
        }
    });
    return out;
}

Map Tape::batchnorm_location(const Map& x, const Vec& gamma, const Vec& beta, double eps,
                             BatchNormStats* stats) {
    auto saved = std::make_shared<BatchNormStats>();
    auto out = std::make_shared<MapSlot>();
    out->value = batchnorm_location_forward(x->value, gamma->value, beta->value, eps, saved.get());
    out->needs_grad = x->needs_grad || gamma->needs_grad || beta->needs_grad;
    if (stats) *stats = *saved;

    ops_.push_back([x, gamma, beta, eps, saved, out] {
        if (out->grad.empty()) return;
        const FeatureMap& dy = out->grad;
        const FeatureMap& xv = x->value;
        const std::size_t N = xv.batch(), C = xv.channels(), T = xv.frames(), V = xv.vertices();
        const double m = double(N) * double(T);
        if (x->needs_grad) ensure_grad(*x);
        if (gamma->needs_grad) ensure_grad(*gamma);
        if (beta->needs_grad) ensure_grad(*beta);
        std::vector<double> s1(V), s2(V);
        for (std::size_t c = 0; c < C; ++c) {
            std::fill(s1.begin(), s1.end(), 0.0);
            std::fill(s2.begin(), s2.end(), 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t) {
                    const double* g = dy.vertex_row(n, c, t);
                    const double* xr = xv.vertex_row(n, c, t);
                    for (std::size_t v = 0; v < V; ++v) {
                        const std::size_t l = c * V + v;
                        s1[v] += g[v];
                        s2[v] += g[v] * (xr[v] - saved->mean[l]) / std::sqrt(saved->var[l] + eps);
                    }
                }
            for (std::size_t v = 0; v < V; ++v) {
                const std::size_t l = c * V + v;
                if (beta->needs_grad) beta->grad[l] += s1[v];
                if (gamma->needs_grad) gamma->grad[l] += s2[v];
            }
            if (!x->needs_grad) continue;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t t = 0; t < T; ++t) {
                    const double* g = dy.vertex_row(n, c, t);
                    const double* xr = xv.vertex_row(n, c, t);
                    double* dst = x->grad.vertex_row(n, c, t);
                    for (std::size_t v = 0; v < V; ++v) {
                        const std::size_t l = c * V + v;
                        const double inv = 1.0 / std::sqrt(saved->var[l] + eps);
                        const double xhat = (xr[v] - saved->mean[l]) * inv;
                        dst[v] += gamma->value[l] * inv * (g[v] - s1[v] / m - xhat * s2[v] / m);
                    }
                }
        }
    });
    return out;
}

Map Tape::relu(const Map& x) {
    auto out = std::make_shared<MapSlot>();
    out->value = cdgc::relu(x->value);
    out->needs_grad = x->needs_grad;

    ops_.push_back([x, out] {
        if (out->grad.empty() || !x->needs_grad) return;
        ensure_grad(*x);
        const double* xv = x->value.data();
        const double* g = out->grad.data();
        double* dst = x->grad.data();
        // subgradient at exactly 0 is 0
        for (std::size_t i = 0; i < x->value.size(); ++i)
            if (xv[i] > 0.0) dst[i] += g[i];
    });
    return out;
}

Map Tape::add(const Map& a, const Map& b) {
    if (!a->value.same_shape(b->value))
        throw DimError(fmt::format("add: shapes differ, {} vs {}", a->value.shape_str(),
                                   b->value.shape_str()));
    auto out = std::make_shared<MapSlot>();
    out->value = a->value;
    const double* bd = b->value.data();
    for (std::size_t i = 0; i < out->value.size(); ++i) out->value.data()[i] += bd[i];
    out->needs_grad = a->needs_grad || b->needs_grad;

    ops_.push_back([a, b, out] {
        if (out->grad.empty()) return;
        const double* g = out->grad.data();
        if (a->needs_grad) {
            ensure_grad(*a);
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad.data()[i] += g[i];
        }
        if (b->needs_grad) {
            ensure_grad(*b);
            for (std::size_t i = 0; i < b->grad.size(); ++i) b->grad.data()[i] += g[i];
        }
    });
    return out;
}

Mat Tape::global_avg_pool(const Map& x) {
    const std::size_t N = x->value.batch(), C = x->value.channels();
    const std::size_t T = x->value.frames(), V = x->value.vertices();
    auto out = std::make_shared<MatSlot>();
    out->value = Matrix(N, C);
    const double scale = 1.0 / (double(T) * double(V));
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                const double* row = x->value.vertex_row(n, c, t);
                for (std::size_t v = 0; v < V; ++v) s += row[v];
            }
            out->value(n, c) = s * scale;
        }
    out->needs_grad = x->needs_grad;

    ops_.push_back([x, out, T, V, scale] {
        if (out->grad.empty() || !x->needs_grad) return;
        ensure_grad(*x);
        for (std::size_t n = 0; n < x->value.batch(); ++n)
            for (std::size_t c = 0; c < x->value.channels(); ++c) {
                const double g = out->grad(n, c) * scale;
                for (std::size_t t = 0; t < T; ++t) {
                    double* dst = x->grad.vertex_row(n, c, t);
                    for (std::size_t v = 0; v < V; ++v) dst[v] += g;
                }
            }
    });
    return out;
}

Mat Tape::linear(const Mat& h, const Mat& w, const Vec& bias) {
    if (bias->value.size() != w->value.cols())
        throw DimError(fmt::format("linear: bias length {} vs {} output columns",
                                   bias->value.size(), w->value.cols()));
    auto out = std::make_shared<MatSlot>();
    out->value = matmul(h->value, w->value);
    for (std::size_t n = 0; n < out->value.rows(); ++n)
        for (std::size_t j = 0; j < out->value.cols(); ++j) out->value(n, j) += bias->value[j];
    out->needs_grad = h->needs_grad || w->needs_grad || bias->needs_grad;

    ops_.push_back([h, w, bias, out] {
        if (out->grad.empty()) return;
        const Matrix& g = out->grad;
        if (h->needs_grad) {
            ensure_grad(*h);
            add_into(h->grad, matmul(g, transpose(w->value)));
        }
        if (w->needs_grad) {
            ensure_grad(*w);
            add_into(w->grad, matmul(transpose(h->value), g));
        }
        if (bias->needs_grad) {
            ensure_grad(*bias);
            for (std::size_t n = 0; n < g.rows(); ++n)
                for (std::size_t j = 0; j < g.cols(); ++j) bias->grad[j] += g(n, j);
        }
    });
    return out;
}

Scalar Tape::softmax_cross_entropy(const Mat& logits, const std::vector<int>& labels,
                                   Matrix* probs) {
    const std::size_t N = logits->value.rows(), K = logits->value.cols();
    if (labels.size() != N)
        throw DimError(fmt::format("cross entropy: {} labels for {} rows", labels.size(), N));
    for (std::size_t n = 0; n < N; ++n)
        if (labels[n] < 0 || std::size_t(labels[n]) >= K)
            throw ArgError(fmt::format("cross entropy: label {} out of range [0, {})",
                                       labels[n], K));

    auto p = std::make_shared<Matrix>(N, K);
    double loss = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const double* z = logits->value.row(n);
        const double zmax = *std::max_element(z, z + K);
        double denom = 0.0;
        for (std::size_t j = 0; j < K; ++j) denom += std::exp(z[j] - zmax);
        const double log_denom = std::log(denom);
        for (std::size_t j = 0; j < K; ++j) (*p)(n, j) = std::exp(z[j] - zmax) / denom;
        loss += log_denom - (z[labels[n]] - zmax);
    }
    loss /= double(N);
    if (probs) *probs = *p;

    auto out = std::make_shared<ScalarSlot>();
    out->value = loss;
    out->needs_grad = logits->needs_grad;

    ops_.push_back([logits, labels, p, out] {
        if (out->grad == 0.0 || !logits->needs_grad) return;
        ensure_grad(*logits);
        const std::size_t N = p->rows(), K = p->cols();
        const double scale = out->grad / double(N);
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < K; ++j) {
                double g = (*p)(n, j);
                if (std::size_t(labels[n]) == j) g -= 1.0;
                logits->grad(n, j) += scale * g;
            }
    });
    return out;
}

Scalar Tape::sum(const Map& x) {
    auto out = std::make_shared<ScalarSlot>();
    out->value = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i) out->value += x->value.data()[i];
    out->needs_grad = x->needs_grad;

    ops_.push_back([x, out] {
        if (out->grad == 0.0 || !x->needs_grad) return;
        ensure_grad(*x);
        for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad.data()[i] += out->grad;
    });
    return out;
}

Scalar Tape::weighted_sum(const Map& x, const FeatureMap& coeffs) {
    if (!x->value.same_shape(coeffs))
        throw DimError(fmt::format("weighted_sum: coefficients {} do not match features {}",
                                   coeffs.shape_str(), x->value.shape_str()));
    auto out = std::make_shared<ScalarSlot>();
    out->value = 0.0;
    for (std::size_t i = 0; i < x->value.size(); ++i)
        out->value += coeffs.data()[i] * x->value.data()[i];
    out->needs_grad = x->needs_grad;

    ops_.push_back([x, out, coeffs] {
        if (out->grad == 0.0 || !x->needs_grad) return;
        ensure_grad(*x);
        for (std::size_t i = 0; i < x->grad.size(); ++i)
            x->grad.data()[i] += out->grad * coeffs.data()[i];
    });
    return out;
}

Scalar Tape::add(const Scalar& a, const Scalar& b) {
    auto out = std::make_shared<ScalarSlot>();
    out->value = a->value + b->value;
    out->needs_grad = a->needs_grad || b->needs_grad;

    ops_.push_back([a, b, out] {
        if (a->needs_grad) a->grad += out->grad;
        if (b->needs_grad) b->grad += out->grad;
    });
    return out;
}

void Tape::backward(const Scalar& loss) {
    if (!loss) throw ArgError("backward: null loss");
    loss->grad += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();  // single-use
}

FdReport finite_difference_check(const std::function<double()>& f,
                                 const std::vector<FdParam>& params, double h) {
    if (h <= 0.0) throw ArgError("finite differences: h must be > 0");
    FdReport report;
    for (const FdParam& p : params) {
        for (std::size_t i = 0; i < p.len; ++i) {
            const double saved = p.data[i];
            p.data[i] = saved + h;
            const double f_plus = f();
            p.data[i] = saved - h;
            const double f_minus = f();
            p.data[i] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError(fmt::format(
                    "finite differences: non-finite loss perturbing {}[{}]", p.name, i));
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double analytic = p.analytic[i];
            // the denominator floor keeps cancellation noise on true-zero
            // gradients (~eps*|f|/h, about 1e-11 for an O(1) loss) from
            // registering; in effect: absolute tolerance floor * rel bar
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p.name;
                report.worst_index = i;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace cdgc::ad
