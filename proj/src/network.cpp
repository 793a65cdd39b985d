#include "cdgc/network.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "cdgc/common.hpp"

namespace cdgc {

namespace {

double kaiming_bound(std::size_t fan_in) { return std::sqrt(6.0 / double(fan_in)); }

Matrix draw_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
}

bool needs_projection(const BlockConfig& b) {
    return b.in_channels != b.out_channels || b.temporal_stride != 1;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* in = logits.row(r);
        double* p = out.row(r);
        double hi = in[0];
        for (std::size_t c = 1; c < logits.cols(); ++c) hi = std::max(hi, in[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < logits.cols(); ++c) {
            p[c] = std::exp(in[c] - hi);
            z += p[c];
        }
        for (std::size_t c = 0; c < logits.cols(); ++c) p[c] /= z;
    }
    return out;
}

FeatureMap add_maps(const FeatureMap& a, const FeatureMap& b) {
    if (!a.same_shape(b))
        throw DimError(fmt::format("residual shape {} does not match block output {}",
                                   b.shape_str(), a.shape_str()));
    FeatureMap out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

}  // namespace

// ---- config -----------------------------------------------------------------

const char* spatial_op_name(SpatialOp op) {
    switch (op) {
        case SpatialOp::vanilla: return "vanilla";
        case SpatialOp::cdgc_matrix: return "cdgc_matrix";
        case SpatialOp::accelerated_cdgc: return "accelerated_cdgc";
    }
    throw ArgError("unknown spatial op value");
}

SpatialOp parse_spatial_op(const std::string& name) {
    if (name == "vanilla") return SpatialOp::vanilla;
    if (name == "cdgc_matrix" || name == "matrix" || name == "cdgc") return SpatialOp::cdgc_matrix;
    if (name == "accelerated_cdgc" || name == "accelerated" || name == "shift")
        return SpatialOp::accelerated_cdgc;
    throw ArgError(fmt::format(
        "unknown variant '{}' (expected vanilla, cdgc_matrix or accelerated_cdgc)", name));
}

void BackboneConfig::validate() const {
    if (blocks.empty()) throw ConfigError("backbone needs at least one block");
    if (in_channels < 1) throw ConfigError("in_channels must be positive");
    if (num_classes < 2) throw ConfigError("need at least two classes");
    if (!std::isfinite(alpha) || alpha < 0.0 || alpha > 1.0)
        throw ConfigError(fmt::format("alpha {} outside [0, 1]", alpha));
    int prev = in_channels;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const BlockConfig& b = blocks[i];
        if (b.in_channels != prev)
            throw ConfigError(fmt::format("block {} expects {} input channels but the previous stage emits {}",
                                          i, b.in_channels, prev));
        if (b.out_channels < 1)
            throw ConfigError(fmt::format("block {}: out_channels must be positive", i));
        if (b.temporal_stride < 1)
            throw ConfigError(fmt::format("block {}: temporal stride must be >= 1", i));
        prev = b.out_channels;
    }
}

std::string BackboneConfig::canonical_text() const {
    std::string out;
    out += fmt::format("op {}\n", spatial_op_name(spatial_op));
    out += fmt::format("alpha_mode {}\n", alpha_mode == AlphaMode::learnable ? "learnable" : "fixed");
    out += fmt::format("alpha {:.17g}\n", alpha);
    out += fmt::format("in_channels {}\n", in_channels);
    out += fmt::format("classes {}\n", num_classes);
    for (const BlockConfig& b : blocks)
        out += fmt::format("block {} {} {} {}\n", b.in_channels, b.out_channels, b.temporal_stride,
                           int(b.residual));
    return out;
}

BackboneConfig BackboneConfig::parse_canonical_text(const std::string& text) {
    BackboneConfig cfg;
    cfg.blocks.clear();
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "op") {
            std::string v;
            ls >> v;
            try {
                cfg.spatial_op = parse_spatial_op(v);
            } catch (const ArgError& e) {
                throw ParseError(fmt::format("config line {}: {}", lineno, e.what()));
            }
        } else if (key == "alpha_mode") {
            std::string v;
            ls >> v;
            if (v == "fixed")
                cfg.alpha_mode = AlphaMode::fixed;
            else if (v == "learnable")
                cfg.alpha_mode = AlphaMode::learnable;
            else
                throw ParseError(fmt::format("config line {}: unknown alpha_mode '{}'", lineno, v));
        } else if (key == "alpha") {
            ls >> cfg.alpha;
        } else if (key == "in_channels") {
            ls >> cfg.in_channels;
        } else if (key == "classes") {
            ls >> cfg.num_classes;
        } else if (key == "block") {
            BlockConfig b;
            int res = 0;
            ls >> b.in_channels >> b.out_channels >> b.temporal_stride >> res;
            b.residual = res != 0;
            if (!ls.fail()) cfg.blocks.push_back(b);
        } else {
            throw ParseError(fmt::format("config line {}: unknown key '{}'", lineno, key));
        }
        if (ls.fail())
            throw ParseError(fmt::format("config line {}: malformed value for '{}'", lineno, key));
        std::string extra;
        if (ls >> extra)
            throw ParseError(fmt::format("config line {}: trailing token '{}'", lineno, extra));
    }
    cfg.validate();
    return cfg;
}

BackboneConfig BackboneConfig::paper_scale(SpatialOp op, int num_classes) {
    static const int widths[10] = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
    BackboneConfig cfg;
    cfg.spatial_op = op;
    cfg.in_channels = 3;
    cfg.num_classes = num_classes;
    int prev = cfg.in_channels;
    for (int i = 0; i < 10; ++i) {
        BlockConfig b;
        b.in_channels = prev;
        b.out_channels = widths[i];
        b.temporal_stride = (i > 0 && widths[i] != widths[i - 1]) ? 2 : 1;
        b.residual = i > 0;  // the input block has no skip path
        cfg.blocks.push_back(b);
        prev = widths[i];
    }
    return cfg;
}

BackboneConfig BackboneConfig::desk_scale(SpatialOp op, int num_classes, int width) {
    if (width < 1) throw ConfigError("desk_scale width must be positive");
    const int widths[6] = {width, width, 2 * width, 2 * width, 4 * width, 4 * width};
    BackboneConfig cfg;
    cfg.spatial_op = op;
    cfg.in_channels = 3;
    cfg.num_classes = num_classes;
    int prev = cfg.in_channels;
    for (int i = 0; i < 6; ++i) {
        BlockConfig b;
        b.in_channels = prev;
        b.out_channels = widths[i];
        b.temporal_stride = (i > 0 && widths[i] != widths[i - 1]) ? 2 : 1;
        b.residual = i > 0;
        cfg.blocks.push_back(b);
        prev = widths[i];
    }
    return cfg;
}

// ---- model ------------------------------------------------------------------

Model::Model(BackboneConfig cfg, SkeletonGraph graph, std::uint64_t seed)
    : cfg_(std::move(cfg)), graph_(std::move(graph)) {
    cfg_.validate();
    if (graph_.num_vertices <= 0) throw ConfigError("model graph is empty");
    if (cfg_.spatial_op != SpatialOp::accelerated_cdgc) adj_ = normalized_adjacency(graph_);
    const std::size_t V = std::size_t(graph_.num_vertices);

    auto init_bn = [](BnParams& bn, std::size_t n, bool per_loc) {
        bn.per_location = per_loc;
        bn.gamma.assign(n, 1.0);
        bn.beta.assign(n, 0.0);
        bn.run.mean.assign(n, 0.0);
        bn.run.var.assign(n, 1.0);
    };

    Rng rng(seed);
    init_bn(data_bn_, std::size_t(cfg_.in_channels) * V, true);

    for (const BlockConfig& bc : cfg_.blocks) {
        Block b;
        const std::size_t cin = std::size_t(bc.in_channels);
        const std::size_t cout = std::size_t(bc.out_channels);
        const bool accel = cfg_.spatial_op == SpatialOp::accelerated_cdgc;
        if (accel) {
            b.spatial_w.push_back(draw_matrix(rng, cin, cout, kaiming_bound(cin)));
            b.mask = Matrix(V, cin, 1.0);
        } else {
            for (int k = 0; k < kNumSubsets; ++k)
                b.spatial_w.push_back(draw_matrix(rng, cin, cout, kaiming_bound(cin)));
        }
        b.alpha = cfg_.alpha;
        // After the vertex shift, joint identity lives in the vertex/channel
        // pairing, so that stage is normalized per location; everywhere else
        // plain per-channel statistics.
        init_bn(b.bn1, accel ? cout * V : cout, accel);
        const std::size_t taps = accel ? 1 : std::size_t(kTemporalTaps);
        b.temporal_w = draw_matrix(rng, taps * cout, cout, kaiming_bound(taps * cout));
        init_bn(b.bn2, cout, false);
        if (bc.residual && needs_projection(bc)) {
            b.res_w = draw_matrix(rng, cin, cout, kaiming_bound(cin));
            init_bn(b.res_bn, cout, false);
        }
        blocks_.push_back(std::move(b));
    }
    const std::size_t last = std::size_t(cfg_.blocks.back().out_channels);
    fc_w_ = draw_matrix(rng, last, std::size_t(cfg_.num_classes), kaiming_bound(last));
    fc_b_.assign(std::size_t(cfg_.num_classes), 0.0);
}

std::vector<Model::ParamRef> Model::param_refs() {
    std::vector<ParamRef> refs;
    auto push = [&](std::string name, double* p, std::size_t len, bool trainable) {
        refs.push_back({std::move(name), p, len, trainable});
    };
    auto push_bn = [&](const std::string& prefix, BnParams& bn) {
        push(prefix + ".gamma", bn.gamma.data(), bn.gamma.size(), true);
        push(prefix + ".beta", bn.beta.data(), bn.beta.size(), true);
        push(prefix + ".run_mean", bn.run.mean.data(), bn.run.mean.size(), false);
        push(prefix + ".run_var", bn.run.var.data(), bn.run.var.size(), false);
    };
    push_bn("data_bn", data_bn_);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& b = blocks_[i];
        const std::string p = fmt::format("block{}", i);
        for (std::size_t k = 0; k < b.spatial_w.size(); ++k)
            push(fmt::format("{}.spatial.w{}", p, k), b.spatial_w[k].data(), b.spatial_w[k].size(),
                 true);
        if (!b.mask.empty()) push(p + ".spatial.mask", b.mask.data(), b.mask.size(), true);
        if (cfg_.spatial_op != SpatialOp::vanilla)
            push(p + ".alpha", &b.alpha, 1, cfg_.alpha_mode == AlphaMode::learnable);
        push_bn(p + ".bn1", b.bn1);
        push(p + ".temporal.w", b.temporal_w.data(), b.temporal_w.size(), true);
        push_bn(p + ".bn2", b.bn2);
        if (!b.res_w.empty()) {
            push(p + ".res.w", b.res_w.data(), b.res_w.size(), true);
            push_bn(p + ".res_bn", b.res_bn);
        }
    }
    push("fc.w", fc_w_.data(), fc_w_.size(), true);
    push("fc.b", fc_b_.data(), fc_b_.size(), true);
    return refs;
}

std::vector<Model::ParamRef> Model::param_refs() const {
    return const_cast<Model*>(this)->param_refs();
}

std::int64_t Model::param_count() const {
    std::int64_t total = 0;
    for (const ParamRef& r : param_refs())
        if (r.trainable) total += std::int64_t(r.len);
    return total;
}

std::vector<double> Model::alphas() const {
    std::vector<double> out;
    if (cfg_.spatial_op == SpatialOp::vanilla) return out;
    for (const Block& b : blocks_) out.push_back(b.alpha);
    return out;
}

void Model::check_batch(const FeatureMap& batch) const {
    if (batch.batch() == 0 || batch.frames() == 0) throw DimError("empty batch");
    if (int(batch.channels()) != cfg_.in_channels || int(batch.vertices()) != graph_.num_vertices)
        throw DimError(fmt::format("batch shape {} does not match the model ({} channels, {} vertices)",
                                   batch.shape_str(), cfg_.in_channels, graph_.num_vertices));
    // a NaN that sneaks past here would be silently zeroed by the first relu,
    // so reject bad inputs at the boundary where the cause is still visible
    if (!all_finite(batch)) throw NumericError("non-finite values in input batch");
}

Matrix Model::forward(const FeatureMap& batch) const {
    check_batch(batch);
    FeatureMap h =
        batchnorm_location_eval(batch, data_bn_.gamma, data_bn_.beta, data_bn_.run, kBnEps);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Block& b = blocks_[i];
        const BlockConfig& bc = cfg_.blocks[i];
        FeatureMap res;
        if (bc.residual) {
            if (!b.res_w.empty()) {
                res = temporal_conv(h, b.res_w, bc.temporal_stride);
                res = batchnorm_eval(res, b.res_bn.gamma, b.res_bn.beta, b.res_bn.run, kBnEps);
            } else {
                res = h;
            }
        }
        CdgcLayerParams lp;
        lp.weights = b.spatial_w;
        lp.alpha = b.alpha;
        lp.mask = b.mask;
        FeatureMap s;
        switch (cfg_.spatial_op) {
            case SpatialOp::vanilla: s = vanilla_gconv(h, adj_, lp); break;
            case SpatialOp::cdgc_matrix: s = cdgc_matrix(h, adj_, lp); break;
            case SpatialOp::accelerated_cdgc: s = accelerated_cdgc(h, lp); break;
        }
        s = b.bn1.per_location
                ? batchnorm_location_eval(s, b.bn1.gamma, b.bn1.beta, b.bn1.run, kBnEps)
                : batchnorm_eval(s, b.bn1.gamma, b.bn1.beta, b.bn1.run, kBnEps);
        s = relu(s);
        if (cfg_.spatial_op == SpatialOp::accelerated_cdgc) s = temporal_shift3(s);
        s = temporal_conv(s, b.temporal_w, bc.temporal_stride);
        s = batchnorm_eval(s, b.bn2.gamma, b.bn2.beta, b.bn2.run, kBnEps);
        if (!res.empty()) s = add_maps(s, res);
        h = relu(s);
    }
    // mean over frames and vertices, then the classifier head
    Matrix pooled(h.batch(), h.channels());
    const double scale = 1.0 / double(h.frames() * h.vertices());
    for (std::size_t n = 0; n < h.batch(); ++n)
        for (std::size_t c = 0; c < h.channels(); ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < h.frames(); ++t) {
                const double* row = h.vertex_row(n, c, t);
                for (std::size_t v = 0; v < h.vertices(); ++v) acc += row[v];
            }
            pooled(n, c) = acc * scale;
        }
    Matrix logits = matmul(pooled, fc_w_);
    for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 0; c < logits.cols(); ++c) logits(r, c) += fc_b_[c];
    return softmax_rows(logits);
}

ad::Scalar Model::build_training_graph(ad::Tape& tape, const FeatureMap& batch,
                                       const std::vector<int>& labels, std::vector<Bound>* bound,
                                       std::vector<StatUpdate>* stats, Matrix* probs) {
    check_batch(batch);
    if (labels.size() != batch.batch())
        throw DimError(
            fmt::format("batch of {} clips with {} labels", batch.batch(), labels.size()));

    // Binding order must mirror the trainable entries of param_refs(); the
    // flattened gradient readback and the momentum buffers rely on it.
    auto bind_mat = [&](Matrix& master, const ad::Mat& slot) {
        if (bound) bound->push_back({master.data(), slot->grad.data(), master.size(), slot});
    };
    auto bind_vec = [&](std::vector<double>& master, const ad::Vec& slot) {
        if (bound) bound->push_back({master.data(), slot->grad.data(), master.size(), slot});
    };
    auto bind_scalar = [&](double& master, const ad::Scalar& slot) {
        if (bound) bound->push_back({&master, &slot->grad, 1, slot});
    };
    auto record_stats = [&](BatchNormStats&& bs, BnParams& bn, double count) {
        if (stats) stats->push_back({std::move(bs), &bn.run, count});
    };

    const double frames_in = double(batch.frames());
    const double bn_count_loc = double(batch.batch()) * frames_in;

    ad::Map h = tape.input(batch, false);
    {
        ad::Vec g = tape.vec(data_bn_.gamma), be = tape.vec(data_bn_.beta);
        bind_vec(data_bn_.gamma, g);
        bind_vec(data_bn_.beta, be);
        BatchNormStats bs;
        h = tape.batchnorm_location(h, g, be, kBnEps, stats ? &bs : nullptr);
        record_stats(std::move(bs), data_bn_, bn_count_loc);
    }
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        Block& b = blocks_[i];
        const BlockConfig& bc = cfg_.blocks[i];
        const bool accel = cfg_.spatial_op == SpatialOp::accelerated_cdgc;

        // parameter slots first, in checkpoint order
        std::vector<ad::Mat> ws;
        for (Matrix& w : b.spatial_w) {
            ws.push_back(tape.mat(w));
            bind_mat(w, ws.back());
        }
        ad::Mat mask;
        if (accel) {
            mask = tape.mat(b.mask);
            bind_mat(b.mask, mask);
        }
        ad::Scalar alpha;
        if (cfg_.spatial_op != SpatialOp::vanilla) {
            alpha = tape.scalar(b.alpha, cfg_.alpha_mode == AlphaMode::learnable);
            if (cfg_.alpha_mode == AlphaMode::learnable) bind_scalar(b.alpha, alpha);
        }
        ad::Vec g1 = tape.vec(b.bn1.gamma), be1 = tape.vec(b.bn1.beta);
        bind_vec(b.bn1.gamma, g1);
        bind_vec(b.bn1.beta, be1);
        ad::Mat tw = tape.mat(b.temporal_w);
        bind_mat(b.temporal_w, tw);
        ad::Vec g2 = tape.vec(b.bn2.gamma), be2 = tape.vec(b.bn2.beta);
        bind_vec(b.bn2.gamma, g2);
        bind_vec(b.bn2.beta, be2);
        ad::Mat rw;
        ad::Vec gr, ber;
        if (!b.res_w.empty()) {
            rw = tape.mat(b.res_w);
            bind_mat(b.res_w, rw);
            gr = tape.vec(b.res_bn.gamma);
            ber = tape.vec(b.res_bn.beta);
            bind_vec(b.res_bn.gamma, gr);
            bind_vec(b.res_bn.beta, ber);
        }

        ad::Map res;
        if (bc.residual) {
            if (!b.res_w.empty()) {
                res = tape.temporal_conv(h, rw, bc.temporal_stride);
                BatchNormStats rs;
                res = tape.batchnorm_channel(res, gr, ber, kBnEps, stats ? &rs : nullptr);
                record_stats(std::move(rs), b.res_bn, double(res->value.size()) /
                                                          double(res->value.channels()));
            } else {
                res = h;
            }
        }
        ad::Map s = accel ? tape.shift_gconv(h, ws[0], mask, alpha)
                          : tape.partitioned_gconv(h, adj_, ws, alpha);
        BatchNormStats s1;
        s = b.bn1.per_location ? tape.batchnorm_location(s, g1, be1, kBnEps, stats ? &s1 : nullptr)
                               : tape.batchnorm_channel(s, g1, be1, kBnEps, stats ? &s1 : nullptr);
        record_stats(std::move(s1), b.bn1,
                     b.bn1.per_location ? double(s->value.batch() * s->value.frames())
                                        : double(s->value.size()) / double(s->value.channels()));
        s = tape.relu(s);
        if (accel) s = tape.temporal_shift3(s);
        s = tape.temporal_conv(s, tw, bc.temporal_stride);
        BatchNormStats s2;
        s = tape.batchnorm_channel(s, g2, be2, kBnEps, stats ? &s2 : nullptr);
        record_stats(std::move(s2), b.bn2,
                     double(s->value.size()) / double(s->value.channels()));
        if (res) s = tape.add(s, res);
        h = tape.relu(s);
    }
    ad::Mat pooled = tape.global_avg_pool(h);
    ad::Mat fw = tape.mat(fc_w_);
    bind_mat(fc_w_, fw);
    ad::Vec fb = tape.vec(fc_b_);
    bind_vec(fc_b_, fb);
    ad::Mat logits = tape.linear(pooled, fw, fb);
    return tape.softmax_cross_entropy(logits, labels, probs);
}

double Model::training_loss(const FeatureMap& batch, const std::vector<int>& labels) const {
    ad::Tape tape;
    ad::Scalar loss = const_cast<Model*>(this)->build_training_graph(tape, batch, labels, nullptr,
                                                                     nullptr, nullptr);
    return loss->value;
}

std::vector<double> Model::training_gradients(const FeatureMap& batch,
                                              const std::vector<int>& labels) const {
    ad::Tape tape;
    std::vector<Bound> bound;
    ad::Scalar loss =
        const_cast<Model*>(this)->build_training_graph(tape, batch, labels, &bound, nullptr, nullptr);
    tape.backward(loss);
    std::vector<double> out;
    for (const Bound& bd : bound) out.insert(out.end(), bd.grad, bd.grad + bd.len);
    return out;
}

Model::StepStats Model::train_step(const FeatureMap& batch, const std::vector<int>& labels,
                                   double lr, double momentum) {
    ad::Tape tape;
    std::vector<Bound> bound;
    std::vector<StatUpdate> stats;
    Matrix probs;
    ad::Scalar loss = build_training_graph(tape, batch, labels, &bound, &stats, &probs);
    if (!std::isfinite(loss->value)) throw NumericError("non-finite training loss");
    tape.backward(loss);

    std::size_t total = 0;
    for (const Bound& bd : bound) total += bd.len;
    if (velocity_.size() != total) velocity_.assign(total, 0.0);

    // Nesterov momentum: v = mu v + g, p -= lr (g + mu v)
    std::size_t off = 0;
    for (const Bound& bd : bound) {
        for (std::size_t j = 0; j < bd.len; ++j) {
            const double g = bd.grad[j];
            double& v = velocity_[off + j];
            v = momentum * v + g;
            bd.master[j] -= lr * (g + momentum * v);
        }
        off += bd.len;
    }
    if (cfg_.spatial_op != SpatialOp::vanilla && cfg_.alpha_mode == AlphaMode::learnable)
        for (Block& b : blocks_) b.alpha = std::clamp(b.alpha, 0.0, 1.0);

    // fold batch statistics into the running ones (variance unbiased, the
    // usual inference convention)
    for (const StatUpdate& su : stats) {
        const double corr = su.count > 1.5 ? su.count / (su.count - 1.0) : 1.0;
        for (std::size_t i = 0; i < su.batch.mean.size(); ++i) {
            su.target->mean[i] =
                (1.0 - kBnMomentum) * su.target->mean[i] + kBnMomentum * su.batch.mean[i];
            su.target->var[i] =
                (1.0 - kBnMomentum) * su.target->var[i] + kBnMomentum * su.batch.var[i] * corr;
        }
    }

    StepStats st;
    st.loss = loss->value;
    const std::vector<int> preds = predict(probs);
    for (std::size_t r = 0; r < preds.size(); ++r)
        if (preds[r] == labels[r]) ++st.correct;
    return st;
}

void Model::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ArgError(fmt::format("cannot open '{}' for writing", path));
    f << "cdgcnet 1\n";
    f << "vertices " << graph_.num_vertices << "\n";
    f << cfg_.canonical_text();
    const auto refs = param_refs();
    f << "tensors " << refs.size() << "\n";
    for (const ParamRef& r : refs) f << "tensor " << r.name << ' ' << r.len << '\n';
    f << "data\n";
    for (const ParamRef& r : refs)
        f.write(reinterpret_cast<const char*>(r.data), std::streamsize(r.len * sizeof(double)));
    if (!f) throw ArgError(fmt::format("write to '{}' failed", path));
}

Model Model::load(const std::string& path, const SkeletonGraph& graph) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError(fmt::format("cannot open '{}'", path));
    std::string line;
    if (!std::getline(f, line) || line != "cdgcnet 1")
        throw ParseError(fmt::format("'{}' is not a checkpoint (bad magic line)", path));
    if (!std::getline(f, line) || line.rfind("vertices ", 0) != 0)
        throw ParseError("checkpoint missing vertices line");
    const int vertices = std::stoi(line.substr(9));
    if (vertices != graph.num_vertices)
        throw DimError(fmt::format("checkpoint was trained on {} vertices, graph has {}", vertices,
                                   graph.num_vertices));
    std::string cfg_text;
    std::size_t num_tensors = 0;
    while (std::getline(f, line)) {
        if (line.rfind("tensors ", 0) == 0) {
            num_tensors = std::size_t(std::stoul(line.substr(8)));
            break;
        }
        cfg_text += line;
        cfg_text += '\n';
    }
    BackboneConfig cfg = BackboneConfig::parse_canonical_text(cfg_text);
    Model m(cfg, graph, 0);
    auto refs = m.param_refs();
    if (refs.size() != num_tensors)
        throw ParseError(fmt::format("checkpoint lists {} tensors, model has {}", num_tensors,
                                     refs.size()));
    for (const ParamRef& r : refs) {
        if (!std::getline(f, line)) throw ParseError("checkpoint tensor table truncated");
        std::istringstream ls(line);
        std::string tag, name;
        std::size_t len = 0;
        ls >> tag >> name >> len;
        if (ls.fail() || tag != "tensor")
            throw ParseError(fmt::format("bad tensor record '{}'", line));
        if (name != r.name || len != r.len)
            throw ParseError(fmt::format("checkpoint tensor {} ({} values) does not match model {} ({})",
                                         name, len, r.name, r.len));
    }
    if (!std::getline(f, line) || line != "data") throw ParseError("checkpoint missing data marker");
    for (const ParamRef& r : refs) {
        f.read(reinterpret_cast<char*>(r.data), std::streamsize(r.len * sizeof(double)));
        if (!f) throw ParseError(fmt::format("checkpoint truncated inside tensor {}", r.name));
    }
    return m;
}

// ---- training loop ----------------------------------------------------------

void TrainConfig::validate() const {
    if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
        throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(decay_factor > 0.0) || decay_factor > 1.0)
        throw ConfigError("decay factor must be in (0, 1]");
    int prev = 0;
    for (int d : decay_epochs) {
        if (d <= prev) throw ConfigError("decay epochs must be strictly increasing and >= 1");
        prev = d;
    }
}

std::vector<int> scaled_decay_epochs(int epochs) {
    std::vector<int> out;
    for (int milestone : {60, 80, 100}) {
        int e = int(std::ceil(double(milestone) * double(epochs) / 140.0));
        if (e < 1) e = 1;
        if (e > epochs) continue;
        if (out.empty() || out.back() != e) out.push_back(e);
    }
    return out;
}

std::vector<EpochLog> train(Model& model, const FeatureMap& features,
                            const std::vector<int>& labels, const TrainConfig& cfg,
                            const EpochCallback& callback) {
    cfg.validate();
    const std::size_t n = features.batch();
    if (n == 0) throw ArgError("empty training set");
    if (labels.size() != n)
        throw DimError(fmt::format("{} clips but {} labels", n, labels.size()));
    const std::vector<int> decay =
        cfg.decay_epochs.empty() ? scaled_decay_epochs(cfg.epochs) : cfg.decay_epochs;

    Rng shuffle_rng(cfg.seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<EpochLog> logs;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        double lr = cfg.learning_rate;
        for (int d : decay)
            if (epoch >= d) lr *= cfg.decay_factor;
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = std::size_t(shuffle_rng.uniform_int(0, int(i)));
            std::swap(order[i], order[j]);
        }
        double loss_sum = 0.0;
        int correct = 0;
        int batches = 0;
        for (std::size_t start = 0; start < n; start += std::size_t(cfg.batch_size)) {
            const std::size_t stop = std::min(n, start + std::size_t(cfg.batch_size));
            const std::vector<int> idx(order.begin() + std::ptrdiff_t(start),
                                       order.begin() + std::ptrdiff_t(stop));
            FeatureMap mb = batch_select(features, idx);
            std::vector<int> lbl;
            lbl.reserve(idx.size());
            for (int k : idx) lbl.push_back(labels[std::size_t(k)]);
            Model::StepStats st;
            try {
                st = model.train_step(mb, lbl, lr, cfg.momentum);
            } catch (const NumericError& e) {
                throw NumericError(
                    fmt::format("training diverged at epoch {}, batch {}: {}", epoch, batches + 1,
                                e.what()));
            }
            loss_sum += st.loss * double(idx.size());
            correct += st.correct;
            ++batches;
        }
        EpochLog log;
        log.epoch = epoch;
        log.loss = loss_sum / double(n);
        log.accuracy = double(correct) / double(n);
        log.lr = lr;
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        logs.push_back(log);
        if (callback && !callback(log)) break;
    }
    return logs;
}

Matrix fuse_scores(const std::vector<Matrix>& scores, const std::vector<double>& weights) {
    if (scores.empty()) throw ArgError("nothing to fuse");
    if (scores.size() != weights.size())
        throw ArgError(
            fmt::format("{} score matrices but {} weights", scores.size(), weights.size()));
    double total = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) throw ArgError("fusion weights must be nonnegative");
        total += w;
    }
    if (total <= 0.0) throw ArgError("fusion weights must not all be zero");
    Matrix out(scores[0].rows(), scores[0].cols());
    for (std::size_t s = 0; s < scores.size(); ++s) {
        if (!scores[s].same_shape(out))
            throw DimError(fmt::format("score shape {} does not match {}", scores[s].shape_str(),
                                       out.shape_str()));
        const double w = weights[s] / total;
        if (w == 0.0) continue;
        for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += w * scores[s].data()[i];
    }
    return out;
}

std::vector<int> predict(const Matrix& probs) {
    std::vector<int> out(probs.rows(), 0);
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const double* row = probs.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (row[c] > row[best]) best = c;
        out[r] = int(best);
    }
    return out;
}

double accuracy(const Matrix& probs, const std::vector<int>& labels) {
    if (labels.size() != probs.rows())
        throw DimError(fmt::format("{} rows of scores but {} labels", probs.rows(), labels.size()));
    const std::vector<int> preds = predict(probs);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < preds.size(); ++r)
        if (preds[r] == labels[r]) ++correct;
    return double(correct) / double(preds.size());
}

FeatureMap batch_select(const FeatureMap& features, const std::vector<int>& indices) {
    if (indices.empty()) throw ArgError("batch_select needs at least one index");
    FeatureMap out(indices.size(), features.channels(), features.frames(), features.vertices());
    const std::size_t per = features.channels() * features.frames() * features.vertices();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int s = indices[i];
        if (s < 0 || std::size_t(s) >= features.batch())
            throw ArgError(fmt::format("clip index {} out of range (have {})", s, features.batch()));
        std::copy_n(features.data() + std::size_t(s) * per, per, out.data() + i * per);
    }
    return out;
}

}  // namespace cdgc
