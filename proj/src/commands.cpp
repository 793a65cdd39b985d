#include "cdgc/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <utility>

namespace cdgc::cmd {

namespace {

FeatureMap random_map(Rng& rng, std::size_t n, std::size_t c, std::size_t t, std::size_t v) {
    FeatureMap x(n, c, t, v);
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
    return x;
}

Matrix random_mat(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

}  // namespace

double median(std::vector<double> v) {
    if (v.empty()) throw ArgError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---- equivcheck ---------------------------------------------------------------

EquivReport run_equivcheck(int trials, std::uint64_t seed, bool inject_fault) {
    if (trials < 0) throw ArgError("trial count must be nonnegative");
    EquivReport rep;
    rep.trials = trials;
    if (trials == 0) {
        rep.pass = true;  // vacuous
        return rep;
    }
    static constexpr double kAlphas[4] = {0.0, 0.3, 0.7, 1.0};
    Rng master(seed);
    for (int t = 0; t < trials; ++t) {
        const std::uint64_t tseed = master.next_u64();
        Rng rng(tseed);
        const int vertices = rng.uniform_int(2, 25);
        // a random spanning tree keeps the instance connected; a few extra
        // links make the hop structure (and so the partition) nontrivial
        std::vector<std::pair<int, int>> edges;
        for (int v = 1; v < vertices; ++v) edges.emplace_back(rng.uniform_int(0, v - 1), v);
        const int extra = rng.uniform_int(0, 4);
        for (int e = 0; e < extra; ++e) {
            const int i = rng.uniform_int(0, vertices - 1);
            const int j = rng.uniform_int(0, vertices - 1);
            if (i != j) edges.emplace_back(std::min(i, j), std::max(i, j));
        }
        const int center = rng.uniform_int(0, vertices - 1);
        const SkeletonGraph g = build_graph(vertices, edges, center);
        const PartitionLabeling labeling = partition(g);
        const PartitionedAdjacency adj = normalized_adjacency(g, labeling);

        EquivTrial tr;
        tr.trial = t;
        tr.seed = tseed;
        tr.graph_text = graph_to_text(g);
        tr.channels_in = rng.uniform_int(1, 8);
        tr.channels_out = rng.uniform_int(1, 8);
        tr.batch = rng.uniform_int(1, 2);
        tr.frames = rng.uniform_int(1, 3);
        tr.alpha = kAlphas[t % 4];

        CdgcLayerParams params =
            random_layer_params(rng, kNumSubsets, tr.channels_in, tr.channels_out, tr.alpha);
        const FeatureMap x = random_map(rng, std::size_t(tr.batch), std::size_t(tr.channels_in),
                                        std::size_t(tr.frames), std::size_t(vertices));

        const FeatureMap y_naive = cdgc_naive(x, g, labeling, params);
        FeatureMap y_matrix = cdgc_matrix(x, adj, params);
        if (inject_fault && !y_matrix.empty()) y_matrix.data()[y_matrix.size() / 2] += 1e-3;

        tr.deviation = max_rel_deviation(y_naive, y_matrix);
        if (tr.alpha == 0.0) {
            tr.vanilla_gap = max_rel_deviation(y_matrix, vanilla_gconv(x, adj, params));
            rep.max_vanilla_gap = std::max(rep.max_vanilla_gap, tr.vanilla_gap);
        }
        if (tr.deviation >= rep.max_deviation || t == 0) {
            rep.max_deviation = std::max(rep.max_deviation, tr.deviation);
            rep.worst = tr;
        }
    }
    rep.pass = rep.max_deviation < rep.tolerance;
    return rep;
}

std::string equiv_replay_text(const EquivReport& r) {
    std::string out;
    out += fmt::format("# equivcheck worst instance: trial {} of {}\n", r.worst.trial, r.trials);
    out += fmt::format("# seed {}\n", r.worst.seed);
    out += fmt::format("# batch {} frames {} channels {} -> {} alpha {:.17g}\n", r.worst.batch,
                       r.worst.frames, r.worst.channels_in, r.worst.channels_out, r.worst.alpha);
    out += fmt::format("# deviation {:.17g} (tolerance {:.17g})\n", r.worst.deviation, r.tolerance);
    out += r.worst.graph_text;
    return out;
}

// ---- gradcheck ------------------------------------------------------------------

namespace {

SkeletonGraph check_graph() {
    // 5 joints, a branch at 1: distances to the center differ across the
    // tree, so all three subsets are populated
    return build_graph(5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}}, 1);
}

// shorthand: copies an analytic gradient and registers the parameter view
struct ParamCollector {
    std::vector<ad::FdParam> params;
    std::vector<std::vector<double>> storage;

    void add(std::string name, double* master, const double* grad, std::size_t len) {
        storage.emplace_back(grad, grad + len);
        params.push_back({std::move(name), master, len, storage.back().data()});
    }
};

ad::FdReport case_partitioned(std::uint64_t seed, bool with_alpha) {
    Rng rng(seed);
    const SkeletonGraph g = check_graph();
    const PartitionedAdjacency adj = normalized_adjacency(g);
    FeatureMap x = random_map(rng, 2, 3, 3, 5);
    std::vector<Matrix> w;
    for (int k = 0; k < kNumSubsets; ++k) w.push_back(random_mat(rng, 3, 4));
    double alpha = 0.2 + 0.6 * rng.uniform();
    const FeatureMap coeffs = random_map(rng, 2, 4, 3, 5);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        std::vector<ad::Mat> ws;
        for (Matrix& wk : w) ws.push_back(tape.mat(wk));
        ad::Scalar as;
        if (with_alpha) as = tape.scalar(alpha);
        auto loss = tape.weighted_sum(tape.partitioned_gconv(xs, adj, ws, as), coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            for (std::size_t k = 0; k < w.size(); ++k)
                pc.add(fmt::format("w{}", k), w[k].data(), ws[k]->grad.data(), w[k].size());
            if (with_alpha) pc.add("alpha", &alpha, &as->grad, 1);
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

ad::FdReport case_shift(std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap x = random_map(rng, 2, 3, 3, 5);
    Matrix w = random_mat(rng, 3, 4);
    Matrix mask = random_mat(rng, 5, 3);
    double alpha = 0.2 + 0.6 * rng.uniform();
    const FeatureMap coeffs = random_map(rng, 2, 4, 3, 5);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        auto ws = tape.mat(w);
        auto ms = tape.mat(mask);
        auto as = tape.scalar(alpha);
        auto loss = tape.weighted_sum(tape.shift_gconv(xs, ws, ms, as), coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            pc.add("w", w.data(), ws->grad.data(), w.size());
            pc.add("mask", mask.data(), ms->grad.data(), mask.size());
            pc.add("alpha", &alpha, &as->grad, 1);
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

ad::FdReport case_temporal_conv(std::uint64_t seed, int taps, int stride) {
    Rng rng(seed);
    FeatureMap x = random_map(rng, 2, 3, 6, 4);
    Matrix w = random_mat(rng, std::size_t(taps) * 3, 2);
    const FeatureMap coeffs = random_map(rng, 2, 2, strided_frames(6, stride), 4);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        auto ws = tape.mat(w);
        auto loss = tape.weighted_sum(tape.temporal_conv(xs, ws, stride), coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            pc.add("w", w.data(), ws->grad.data(), w.size());
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

ad::FdReport case_temporal_shift3(std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap x = random_map(rng, 2, 4, 5, 3);
    const FeatureMap coeffs = random_map(rng, 2, 4, 5, 3);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        auto loss = tape.weighted_sum(tape.temporal_shift3(xs), coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

ad::FdReport case_batchnorm(std::uint64_t seed, bool per_location) {
    Rng rng(seed);
    FeatureMap x = random_map(rng, 2, 3, 4, 5);
    const std::size_t n = per_location ? 3 * 5 : 3;
    std::vector<double> gamma(n), beta(n);
    for (auto& g : gamma) g = 0.5 + rng.uniform();
    for (auto& b : beta) b = rng.uniform(-0.5, 0.5);
    const FeatureMap coeffs = random_map(rng, 2, 3, 4, 5);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        auto gs = tape.vec(gamma);
        auto bs = tape.vec(beta);
        auto y = per_location ? tape.batchnorm_location(xs, gs, bs, kBnEps)
                              : tape.batchnorm_channel(xs, gs, bs, kBnEps);
        auto loss = tape.weighted_sum(y, coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            pc.add("gamma", gamma.data(), gs->grad.data(), gamma.size());
            pc.add("beta", beta.data(), bs->grad.data(), beta.size());
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

ad::FdReport case_head(std::uint64_t seed) {
    Rng rng(seed);
    FeatureMap x = random_map(rng, 3, 4, 2, 5);
    Matrix w = random_mat(rng, 4, 3);
    std::vector<double> b(3);
    for (auto& v : b) v = rng.uniform(-0.5, 0.5);
    const std::vector<int> labels = {0, 2, 1};

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        auto ws = tape.mat(w);
        auto bs = tape.vec(b);
        auto loss =
            tape.softmax_cross_entropy(tape.linear(tape.global_avg_pool(xs), ws, bs), labels);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            pc.add("w", w.data(), ws->grad.data(), w.size());
            pc.add("b", b.data(), bs->grad.data(), b.size());
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

// one full residual block, wired like the backbone but with a coefficient
// readout instead of the classifier head
ad::FdReport case_block(std::uint64_t seed, bool accel) {
    Rng rng(seed);
    const SkeletonGraph g = check_graph();
    const PartitionedAdjacency adj = normalized_adjacency(g);
    const int cin = 3, cout = 4, stride = 2;
    FeatureMap x = random_map(rng, 2, cin, 6, 5);
    std::vector<Matrix> w;
    for (int k = 0; k < (accel ? 1 : kNumSubsets); ++k) w.push_back(random_mat(rng, cin, cout));
    Matrix mask = accel ? random_mat(rng, 5, cin) : Matrix();
    double alpha = 0.2 + 0.6 * rng.uniform();
    const std::size_t bn1_n = accel ? std::size_t(cout) * 5 : std::size_t(cout);
    std::vector<double> g1(bn1_n), b1(bn1_n), g2(cout), b2(cout), gr(cout), br(cout);
    for (auto* vec : {&g1, &g2, &gr})
        for (auto& v : *vec) v = 0.5 + rng.uniform();
    for (auto* vec : {&b1, &b2, &br})
        for (auto& v : *vec) v = rng.uniform(-0.5, 0.5);
    Matrix tw = random_mat(rng, std::size_t(accel ? 1 : kTemporalTaps) * cout, cout);
    Matrix rw = random_mat(rng, cin, cout);
    const FeatureMap coeffs = random_map(rng, 2, cout, strided_frames(6, stride), 5);

    ParamCollector pc;
    auto build = [&](bool analytic) {
        ad::Tape tape;
        auto xs = tape.input(x, true);
        std::vector<ad::Mat> ws;
        for (Matrix& wk : w) ws.push_back(tape.mat(wk));
        ad::Mat ms;
        if (accel) ms = tape.mat(mask);
        auto as = tape.scalar(alpha);
        auto g1s = tape.vec(g1), b1s = tape.vec(b1);
        auto tws = tape.mat(tw);
        auto g2s = tape.vec(g2), b2s = tape.vec(b2);
        auto rws = tape.mat(rw);
        auto grs = tape.vec(gr), brs = tape.vec(br);

        auto res = tape.batchnorm_channel(tape.temporal_conv(xs, rws, stride), grs, brs, kBnEps);
        auto s = accel ? tape.shift_gconv(xs, ws[0], ms, as)
                       : tape.partitioned_gconv(xs, adj, ws, as);
        s = accel ? tape.batchnorm_location(s, g1s, b1s, kBnEps)
                  : tape.batchnorm_channel(s, g1s, b1s, kBnEps);
        s = tape.relu(s);
        if (accel) s = tape.temporal_shift3(s);
        s = tape.temporal_conv(s, tws, stride);
        s = tape.batchnorm_channel(s, g2s, b2s, kBnEps);
        s = tape.relu(tape.add(s, res));
        auto loss = tape.weighted_sum(s, coeffs);
        if (analytic) {
            tape.backward(loss);
            pc.add("x", x.data(), xs->grad.data(), x.size());
            for (std::size_t k = 0; k < w.size(); ++k)
                pc.add(fmt::format("w{}", k), w[k].data(), ws[k]->grad.data(), w[k].size());
            if (accel) pc.add("mask", mask.data(), ms->grad.data(), mask.size());
            pc.add("alpha", &alpha, &as->grad, 1);
            pc.add("bn1.gamma", g1.data(), g1s->grad.data(), g1.size());
            pc.add("bn1.beta", b1.data(), b1s->grad.data(), b1.size());
            pc.add("temporal.w", tw.data(), tws->grad.data(), tw.size());
            pc.add("bn2.gamma", g2.data(), g2s->grad.data(), g2.size());
            pc.add("bn2.beta", b2.data(), b2s->grad.data(), b2.size());
            pc.add("res.w", rw.data(), rws->grad.data(), rw.size());
            pc.add("res_bn.gamma", gr.data(), grs->grad.data(), gr.size());
            pc.add("res_bn.beta", br.data(), brs->grad.data(), br.size());
        }
        return loss->value;
    };
    build(true);
    return ad::finite_difference_check([&] { return build(false); }, pc.params);
}

// tiny two-block backbone, checked through the model's own training-loss path
ad::FdReport case_model(std::uint64_t seed, SpatialOp op) {
    const SkeletonGraph g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 1);
    BackboneConfig cfg;
    cfg.spatial_op = op;
    cfg.in_channels = 3;
    cfg.num_classes = 2;
    cfg.alpha_mode = AlphaMode::learnable;
    cfg.blocks = {{3, 3, 1, false}, {3, 4, 2, true}};
    Model model(cfg, g, seed);

    Rng rng(seed ^ 0x517cc1b727220a95ull);
    const FeatureMap batch = random_map(rng, 3, 3, 4, 4);
    const std::vector<int> labels = {0, 1, 1};

    const std::vector<double> analytic = model.training_gradients(batch, labels);
    std::vector<ad::FdParam> params;
    std::size_t off = 0;
    for (const Model::ParamRef& r : model.param_refs()) {
        if (!r.trainable) continue;
        params.push_back({r.name, r.data, r.len, analytic.data() + off});
        off += r.len;
    }
    return ad::finite_difference_check([&] { return model.training_loss(batch, labels); }, params);
}

}  // namespace

GradReport run_gradcheck(const std::string& scope, std::uint64_t seed, int num_seeds) {
    if (num_seeds < 1) throw ArgError("gradcheck needs at least one seed");
    GradReport rep;
    rep.scope = scope;
    rep.seeds = num_seeds;

    using CaseFn = std::function<ad::FdReport(std::uint64_t)>;
    std::vector<std::pair<std::string, CaseFn>> cases;
    if (scope == "operator") {
        cases = {
            {"partitioned", [](std::uint64_t s) { return case_partitioned(s, true); }},
            {"partitioned_plain", [](std::uint64_t s) { return case_partitioned(s, false); }},
            {"shift", case_shift},
            {"temporal_conv9", [](std::uint64_t s) { return case_temporal_conv(s, 9, 1); }},
            {"temporal_conv1_s2", [](std::uint64_t s) { return case_temporal_conv(s, 1, 2); }},
            {"temporal_shift3", case_temporal_shift3},
            {"batchnorm_channel", [](std::uint64_t s) { return case_batchnorm(s, false); }},
            {"batchnorm_location", [](std::uint64_t s) { return case_batchnorm(s, true); }},
            {"head", case_head},
        };
    } else if (scope == "block") {
        cases = {
            {"block_matrix", [](std::uint64_t s) { return case_block(s, false); }},
            {"block_accelerated", [](std::uint64_t s) { return case_block(s, true); }},
        };
    } else if (scope == "model") {
        cases = {
            {"model_matrix", [](std::uint64_t s) { return case_model(s, SpatialOp::cdgc_matrix); }},
            {"model_accelerated",
             [](std::uint64_t s) { return case_model(s, SpatialOp::accelerated_cdgc); }},
        };
    } else {
        throw ArgError(
            fmt::format("unknown gradcheck scope '{}' (operator, block, model)", scope));
    }

    for (int s = 0; s < num_seeds; ++s) {
        const std::uint64_t cs = seed + 1000003ull * std::uint64_t(s);
        for (const auto& [name, fn] : cases) {
            ad::FdReport r = fn(cs);
            rep.coords_checked += r.coords_checked;
            if (r.max_rel_err > rep.max_rel_err) {
                rep.max_rel_err = r.max_rel_err;
                rep.worst_case =
                    fmt::format("{} (seed {}): {}[{}]", name, cs, r.worst_param, r.worst_index);
            }
            rep.cases.push_back({fmt::format("s{}/{}", s, name), r});
        }
    }
    rep.pass = rep.max_rel_err < rep.fail_threshold;
    return rep;
}

// ---- toy training, bench, sweep ---------------------------------------------

ToyData make_toy_data(const SynthSpec& spec, const SkeletonGraph& g, std::uint64_t seed) {
    const std::vector<SkeletonClip> clips = synth_dataset(spec, g, seed);
    return {stack_streams(clips, StreamKind::joint, g), labels_of(clips)};
}

std::vector<BenchRow> run_bench(const BenchSettings& s) {
    for (SpatialOp op : s.variants)
        if (op == SpatialOp::vanilla)
            throw ArgError("bench compares cdgc_matrix and accelerated_cdgc only");
    if (s.timing_epochs < 2 || s.max_epochs < s.timing_epochs)
        throw ArgError("bench needs max_epochs >= timing_epochs >= 2");

    const int prev_threads = get_num_threads();
    set_num_threads(1);  // fixed parallelism: a fair matrix-vs-shift comparison
    const SkeletonGraph g = ntu25_graph();
    const ToyData data = make_toy_data(s.data, g, s.seed);

    std::vector<BenchRow> rows;
    for (SpatialOp op : s.variants) {
        BackboneConfig cfg = BackboneConfig::desk_scale(op, s.data.num_classes, s.width);
        cfg.alpha = s.alpha;
        Model model(cfg, g, s.seed);

        TrainConfig tc;
        tc.epochs = s.max_epochs;
        tc.batch_size = s.batch_size;
        tc.seed = s.seed;

        std::vector<double> secs;
        int to_target = -1;
        auto cb = [&](const EpochLog& log) {
            secs.push_back(log.seconds);
            if (to_target < 0 && log.accuracy >= s.target_accuracy) to_target = log.epoch;
            return !(int(secs.size()) >= s.timing_epochs && to_target > 0);
        };
        train(model, data.features, data.labels, tc, cb);

        BenchRow row;
        row.variant = spatial_op_name(op);
        row.params = model.param_count();
        std::vector<double> timed(secs.begin() + (secs.size() > 1 ? 1 : 0), secs.end());
        row.seconds_per_epoch = median(timed);  // first epoch was warmup
        row.epochs_to_target = to_target;
        row.target = s.target_accuracy;
        row.seed = s.seed;
        rows.push_back(std::move(row));
    }
    set_num_threads(prev_threads);
    return rows;
}

std::vector<SweepRow> run_alpha_sweep(const SweepSettings& s) {
    if (s.alphas.empty()) throw ArgError("alpha sweep needs at least one value");
    if (s.num_seeds < 1) throw ArgError("alpha sweep needs at least one seed");
    for (double a : s.alphas)
        if (!std::isfinite(a) || a < 0.0 || a > 1.0)
            throw ArgError(fmt::format("alpha {} outside [0, 1]", a));

    const SkeletonGraph g = ntu25_graph();
    std::vector<SweepRow> rows;
    for (double a : s.alphas) {
        SweepRow row;
        row.alpha = a;
        for (int si = 0; si < s.num_seeds; ++si) {
            const std::uint64_t seed = s.seed + std::uint64_t(si);
            const ToyData data = make_toy_data(s.data, g, seed);
            BackboneConfig cfg =
                BackboneConfig::desk_scale(SpatialOp::cdgc_matrix, s.data.num_classes, s.width);
            cfg.alpha = a;
            Model model(cfg, g, seed);
            TrainConfig tc;
            tc.epochs = s.epochs;
            tc.batch_size = s.batch_size;
            tc.seed = seed;
            const std::vector<EpochLog> log = train(model, data.features, data.labels, tc);
            row.per_seed.push_back(log.back().accuracy);
        }
        row.accuracy = median(row.per_seed);
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace cdgc::cmd
