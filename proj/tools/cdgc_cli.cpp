// cdgc: command-line surface over the library. Subcommands wrap the shared
// command cores; this file only parses arguments, applies the
// flag > config-file > default precedence, and formats output.
#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdgc/commands.hpp"

namespace {

using namespace cdgc;

// ---- config file -------------------------------------------------------------

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = {
        "seed",       "alpha",    "variant",       "epochs",          "classes",
        "graph",      "trials",   "scope",         "seeds",           "clips_per_class",
        "frames",     "width",    "batch",         "target",          "timing_epochs",
        "alphas",     "lr",       "momentum",      "stream",          "checkpoint",
        "manifest",   "weights",  "alpha_mode",    "scale",           "amplitude",
        "jitter",     "translation", "cycles",     "decay_epochs",    "decay_factor",
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

struct Config {
    std::map<std::string, std::string> kv;

    bool has(const std::string& k) const { return kv.count(k) != 0; }

    std::string str(const std::string& k, const std::string& def) const {
        auto it = kv.find(k);
        return it == kv.end() ? def : it->second;
    }
    int geti(const std::string& k, int def) const {
        auto it = kv.find(k);
        if (it == kv.end()) return def;
        try {
            std::size_t pos = 0;
            const int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(fmt::format("config key '{}': '{}' is not an integer", k, it->second));
        }
    }
    double getd(const std::string& k, double def) const {
        auto it = kv.find(k);
        if (it == kv.end()) return def;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(fmt::format("config key '{}': '{}' is not a number", k, it->second));
        }
    }
    std::uint64_t getu64(const std::string& k, std::uint64_t def) const {
        auto it = kv.find(k);
        if (it == kv.end()) return def;
        try {
            std::size_t pos = 0;
            const std::uint64_t v = std::stoull(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(fmt::format("config key '{}': '{}' is not an unsigned integer", k,
                                          it->second));
        }
    }
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const std::string& tok : split_list(s)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(fmt::format("{}: '{}' is not a number", what, tok));
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
    std::vector<int> out;
    for (const std::string& tok : split_list(s)) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stoi(tok, &pos));
            if (pos != tok.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(fmt::format("{}: '{}' is not an integer", what, tok));
        }
    }
    return out;
}

Config load_config(const std::string& path) {
    Config c;
    if (path.empty()) return c;
    std::ifstream f(path);
    if (!f) throw ConfigError(fmt::format("cannot open config file '{}'", path));
    std::string line;
    int ln = 0;
    while (std::getline(f, line)) {
        ++ln;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(fmt::format("{}:{}: expected key=value", path, ln));
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", path, ln));
        if (!known_config_keys().count(key))
            throw ConfigError(fmt::format("{}:{}: unknown config key '{}'", path, ln, key));
        if (c.kv.count(key))
            throw ConfigError(fmt::format("{}:{}: duplicate config key '{}'", path, ln, key));
        c.kv[key] = val;
    }
    return c;
}

// ---- shared flags ------------------------------------------------------------

struct Common {
    std::uint64_t seed = 1;
    std::string config_path, out_path, graph_path;
    double alpha = 0.3;
    std::string variant = "cdgc_matrix";
    int epochs = 0;
    int classes = 6;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* graph_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* variant_opt = nullptr;
    CLI::Option* epochs_opt = nullptr;
    CLI::Option* classes_opt = nullptr;
};

void add_common(CLI::App* sub, Common& c) {
    c.seed_opt = sub->add_option("--seed", c.seed, "random seed (default 1)");
    sub->add_option("--config", c.config_path, "key=value config file");
    sub->add_option("--out", c.out_path, "write output to this file instead of stdout");
    c.graph_opt = sub->add_option("--graph", c.graph_path,
                                  "graph file (default: built-in 25-joint skeleton)");
    c.alpha_opt = sub->add_option("--alpha", c.alpha, "difference blend coefficient in [0, 1]");
    c.variant_opt = sub->add_option("--variant", c.variant,
                                    "vanilla | cdgc_matrix | accelerated_cdgc (comma list for bench)");
    c.epochs_opt = sub->add_option("--epochs", c.epochs, "training epochs");
    c.classes_opt = sub->add_option("--classes", c.classes, "number of classes (default 6)");
}

// flag > config > default
std::uint64_t eff_seed(const Common& c, const Config& f) {
    return c.seed_opt->count() ? c.seed : f.getu64("seed", 1);
}
double eff_alpha(const Common& c, const Config& f) {
    return c.alpha_opt->count() ? c.alpha : f.getd("alpha", 0.3);
}
std::string eff_variant(const Common& c, const Config& f) {
    return c.variant_opt->count() ? c.variant : f.str("variant", "cdgc_matrix");
}
int eff_epochs(const Common& c, const Config& f, int def) {
    return c.epochs_opt->count() ? c.epochs : f.geti("epochs", def);
}
int eff_classes(const Common& c, const Config& f, int def) {
    return c.classes_opt->count() ? c.classes : f.geti("classes", def);
}
SkeletonGraph eff_graph(const Common& c, const Config& f) {
    const std::string path = c.graph_opt->count() ? c.graph_path : f.str("graph", "");
    return path.empty() ? ntu25_graph() : load_graph_file(path);
}

// output sink: --out or stdout
struct Sink {
    std::unique_ptr<std::ofstream> file;
    std::ostream* os = &std::cout;

    explicit Sink(const std::string& path) {
        if (path.empty()) return;
        file = std::make_unique<std::ofstream>(path);
        if (!*file) throw ArgError(fmt::format("cannot open '{}' for writing", path));
        os = file.get();
    }
    std::ostream& out() { return *os; }
};

SynthSpec synth_spec_from(const Config& f, int classes, int clips_def, int frames_def) {
    SynthSpec spec;
    spec.num_classes = classes;
    spec.clips_per_class = f.geti("clips_per_class", clips_def);
    spec.frames = f.geti("frames", frames_def);
    spec.amplitude = f.getd("amplitude", spec.amplitude);
    spec.jitter = f.getd("jitter", spec.jitter);
    spec.translation = f.getd("translation", spec.translation);
    spec.cycles = f.getd("cycles", spec.cycles);
    return spec;
}

// ---- subcommands ---------------------------------------------------------------

int cmd_equivcheck(const Common& c, bool inject_fault) {
    const Config f = load_config(c.config_path);
    const int trials = f.geti("trials", 100);
    const cmd::EquivReport rep = cmd::run_equivcheck(trials, eff_seed(c, f), inject_fault);
    Sink sink(c.out_path);
    if (rep.trials == 0) {
        sink.out() << "equivcheck: warning: 0 trials requested, vacuous pass\n";
        return 0;
    }
    sink.out() << fmt::format(
        "equivcheck: trials={} max_deviation={:.3e} (tolerance {:.0e}) alpha0_vanilla_gap={:.3e} "
        "verdict={}\n",
        rep.trials, rep.max_deviation, rep.tolerance, rep.max_vanilla_gap,
        rep.pass ? "PASS" : "FAIL");
    if (!rep.pass) {
        sink.out() << cmd::equiv_replay_text(rep);
        return 1;
    }
    return 0;
}

int cmd_gradcheck(const Common& c, const std::string& scope_arg) {
    const Config f = load_config(c.config_path);
    const std::string scope = scope_arg.empty() ? f.str("scope", "operator") : scope_arg;
    const int default_seeds = scope == "operator" ? 20 : 5;
    const int seeds = f.geti("seeds", default_seeds);
    const cmd::GradReport rep = cmd::run_gradcheck(scope, eff_seed(c, f), seeds);
    Sink sink(c.out_path);
    for (const cmd::GradCase& gc : rep.cases)
        sink.out() << fmt::format("{} max_rel_err={:.3e} coords={}\n", gc.name,
                                  gc.report.max_rel_err, gc.report.coords_checked);
    sink.out() << fmt::format(
        "gradcheck {}: seeds={} coords={} max_rel_err={:.3e} worst={} verdict={}\n", rep.scope,
        rep.seeds, rep.coords_checked, rep.max_rel_err, rep.worst_case,
        rep.pass ? (rep.max_rel_err < ad::kFdPass ? "PASS" : "PASS (above 1e-6, below 1e-4)")
                 : "FAIL");
    return rep.pass ? 0 : 1;
}

int cmd_bench(const Common& c) {
    const Config f = load_config(c.config_path);
    cmd::BenchSettings s;
    s.seed = eff_seed(c, f);
    s.alpha = eff_alpha(c, f);
    const std::string variants = eff_variant(c, f);
    if (c.variant_opt->count() || f.has("variant")) {
        s.variants.clear();
        for (const std::string& name : split_list(variants))
            s.variants.push_back(parse_spatial_op(name));
    }
    s.data = synth_spec_from(f, eff_classes(c, f, 6), 100, 32);
    s.width = f.geti("width", s.width);
    s.batch_size = f.geti("batch", s.batch_size);
    s.max_epochs = eff_epochs(c, f, s.max_epochs);
    s.timing_epochs = f.geti("timing_epochs", s.timing_epochs);
    s.target_accuracy = f.getd("target", s.target_accuracy);

    const std::vector<cmd::BenchRow> rows = cmd::run_bench(s);
    Sink sink(c.out_path);
    sink.out() << "variant,params,seconds_per_epoch,epochs_to_target,target,seed\n";
    for (const cmd::BenchRow& r : rows)
        sink.out() << fmt::format("{},{},{:.6f},{},{:.17g},{}\n", r.variant, r.params,
                                  r.seconds_per_epoch, r.epochs_to_target, r.target, r.seed);
    return 0;
}

int cmd_alpha_sweep(const Common& c) {
    const Config f = load_config(c.config_path);
    cmd::SweepSettings s;
    s.seed = eff_seed(c, f);
    if (c.alpha_opt->count())
        s.alphas = {c.alpha};
    else if (f.has("alphas"))
        s.alphas = parse_double_list(f.str("alphas", ""), "config key 'alphas'");
    s.num_seeds = f.geti("seeds", s.num_seeds);
    s.data = synth_spec_from(f, eff_classes(c, f, 6), 25, 16);
    s.width = f.geti("width", s.width);
    s.batch_size = f.geti("batch", s.batch_size);
    s.epochs = eff_epochs(c, f, s.epochs);

    const std::vector<cmd::SweepRow> rows = cmd::run_alpha_sweep(s);
    Sink sink(c.out_path);
    sink.out() << "alpha,accuracy\n";
    for (const cmd::SweepRow& r : rows)
        sink.out() << fmt::format("{:.17g},{:.17g}\n", r.alpha, r.accuracy);
    return 0;
}

int cmd_params(const Common& c) {
    const Config f = load_config(c.config_path);
    const SpatialOp op = parse_spatial_op(eff_variant(c, f));
    const std::string scale = f.str("scale", "paper");
    const int classes = eff_classes(c, f, scale == "paper" ? 60 : 6);
    BackboneConfig cfg;
    if (scale == "paper")
        cfg = BackboneConfig::paper_scale(op, classes);
    else if (scale == "desk")
        cfg = BackboneConfig::desk_scale(op, classes, f.geti("width", 8));
    else
        throw ConfigError(fmt::format("config key 'scale': '{}' is not paper or desk", scale));
    cfg.alpha = eff_alpha(c, f);
    const Model model(cfg, eff_graph(c, f), eff_seed(c, f));
    Sink sink(c.out_path);
    sink.out() << model.param_count() << "\n";
    return 0;
}

int cmd_forward(const Common& c, const std::vector<std::string>& clip_paths) {
    const Config f = load_config(c.config_path);
    const SkeletonGraph g = eff_graph(c, f);
    const StreamKind stream = parse_stream_kind(f.str("stream", "joint"));
    const std::string checkpoint = f.str("checkpoint", "");

    std::unique_ptr<Model> model;
    if (!checkpoint.empty()) {
        model = std::make_unique<Model>(Model::load(checkpoint, g));
    } else {
        BackboneConfig cfg = BackboneConfig::desk_scale(parse_spatial_op(eff_variant(c, f)),
                                                        eff_classes(c, f, 6), f.geti("width", 8));
        cfg.alpha = eff_alpha(c, f);
        model = std::make_unique<Model>(cfg, g, eff_seed(c, f));
    }

    Sink sink(c.out_path);
    const int k = model->config().num_classes;
    sink.out() << "clip,label,pred";
    for (int i = 0; i < k; ++i) sink.out() << fmt::format(",p{}", i);
    sink.out() << "\n";
    for (const std::string& path : clip_paths) {
        const SkeletonClip clip = load_clip(path);
        const Matrix probs = model->forward(derive_stream(clip, stream, g));
        sink.out() << fmt::format("{},{},{}", path, clip.label, predict(probs)[0]);
        for (int i = 0; i < k; ++i) sink.out() << fmt::format(",{:.17g}", probs(0, std::size_t(i)));
        sink.out() << "\n";
    }
    return 0;
}

int cmd_train(const Common& c) {
    const Config f = load_config(c.config_path);
    const SkeletonGraph g = eff_graph(c, f);
    const StreamKind stream = parse_stream_kind(f.str("stream", "joint"));
    const std::uint64_t seed = eff_seed(c, f);

    std::vector<SkeletonClip> clips;
    if (f.has("manifest"))
        clips = load_dataset(f.str("manifest", ""));
    else
        clips = synth_dataset(synth_spec_from(f, eff_classes(c, f, 6), 40, 16), g, seed);
    const FeatureMap features = stack_streams(clips, stream, g);
    const std::vector<int> labels = labels_of(clips);
    const int num_classes = 1 + *std::max_element(labels.begin(), labels.end());

    BackboneConfig cfg = BackboneConfig::desk_scale(parse_spatial_op(eff_variant(c, f)),
                                                    std::max(2, num_classes), f.geti("width", 8));
    cfg.alpha = eff_alpha(c, f);
    if (f.str("alpha_mode", "fixed") == "learnable") cfg.alpha_mode = AlphaMode::learnable;
    Model model(cfg, g, seed);

    TrainConfig tc;
    tc.learning_rate = f.getd("lr", tc.learning_rate);
    tc.momentum = f.getd("momentum", tc.momentum);
    tc.epochs = eff_epochs(c, f, 10);
    tc.batch_size = f.geti("batch", tc.batch_size);
    tc.decay_factor = f.getd("decay_factor", tc.decay_factor);
    if (f.has("decay_epochs"))
        tc.decay_epochs = parse_int_list(f.str("decay_epochs", ""), "config key 'decay_epochs'");
    tc.seed = seed;

    std::cout << "epoch,loss,accuracy,lr,seconds\n";
    train(model, features, labels, tc, [](const EpochLog& log) {
        std::cout << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.6f}\n", log.epoch, log.loss,
                                 log.accuracy, log.lr, log.seconds);
        return true;
    });
    if (!c.out_path.empty()) model.save(c.out_path);
    return 0;
}

struct ScoreTable {
    std::vector<std::string> clips;
    std::vector<int> labels;
    Matrix probs;
};

ScoreTable load_scores(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ArgError(fmt::format("cannot open score file '{}'", path));
    std::string line;
    if (!std::getline(f, line)) throw ParseError(fmt::format("{}: empty score file", path));
    const std::vector<std::string> header = split_list(line);
    if (header.size() < 4 || header[0] != "clip" || header[1] != "label" || header[2] != "pred")
        throw ParseError(fmt::format("{}: expected header clip,label,pred,p0,...", path));
    const std::size_t k = header.size() - 3;
    ScoreTable t;
    std::vector<double> values;
    int ln = 1;
    while (std::getline(f, line)) {
        ++ln;
        if (trim(line).empty()) continue;
        const std::vector<std::string> tok = split_list(line);
        if (tok.size() != header.size())
            throw ParseError(fmt::format("{}:{}: expected {} fields, got {}", path, ln,
                                         header.size(), tok.size()));
        t.clips.push_back(tok[0]);
        try {
            t.labels.push_back(std::stoi(tok[1]));
            for (std::size_t i = 3; i < tok.size(); ++i) values.push_back(std::stod(tok[i]));
        } catch (...) {
            throw ParseError(fmt::format("{}:{}: non-numeric field", path, ln));
        }
    }
    t.probs = Matrix(t.clips.size(), k);
    std::copy(values.begin(), values.end(), t.probs.data());
    return t;
}

int cmd_fuse(const Common& c, const std::vector<std::string>& score_paths) {
    const Config f = load_config(c.config_path);
    std::vector<ScoreTable> tables;
    std::vector<Matrix> probs;
    for (const std::string& p : score_paths) {
        tables.push_back(load_scores(p));
        probs.push_back(tables.back().probs);
    }
    std::vector<double> weights(tables.size(), 1.0);
    if (f.has("weights")) {
        weights = parse_double_list(f.str("weights", ""), "config key 'weights'");
        if (weights.size() != tables.size())
            throw ConfigError(fmt::format("config key 'weights': {} weights for {} score files",
                                          weights.size(), tables.size()));
    }
    for (std::size_t i = 1; i < tables.size(); ++i)
        if (tables[i].clips != tables[0].clips)
            throw ArgError(fmt::format("score files '{}' and '{}' list different clips",
                                       score_paths[0], score_paths[i]));

    const Matrix fused = fuse_scores(probs, weights);
    const std::vector<int> preds = predict(fused);
    Sink sink(c.out_path);
    sink.out() << "clip,label,pred";
    for (std::size_t i = 0; i < fused.cols(); ++i) sink.out() << fmt::format(",p{}", i);
    sink.out() << "\n";
    for (std::size_t r = 0; r < fused.rows(); ++r) {
        sink.out() << fmt::format("{},{},{}", tables[0].clips[r], tables[0].labels[r], preds[r]);
        for (std::size_t i = 0; i < fused.cols(); ++i)
            sink.out() << fmt::format(",{:.17g}", fused(r, i));
        sink.out() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"central-difference graph convolution toolkit"};
    app.require_subcommand(1);

    if (const char* tv = std::getenv("CDGC_THREADS")) {
        try {
            std::size_t pos = 0;
            const int n = std::stoi(tv, &pos);
            if (pos != std::string(tv).size() || n < 1) throw std::invalid_argument("");
            set_num_threads(n);
        } catch (...) {
            fmt::print(stderr, "error: CDGC_THREADS must be a positive integer, got '{}'\n", tv);
            return 2;
        }
    }

    Common copts[8];
    bool inject_fault = false;
    std::string gradcheck_scope;
    std::vector<std::string> forward_clips, fuse_files;

    CLI::App* equiv = app.add_subcommand("equivcheck", "randomized naive-vs-matrix agreement check");
    add_common(equiv, copts[0]);
    equiv->add_flag("--inject-fault", inject_fault)->group("");  // harness self-test only

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(grad, copts[1]);
    grad->add_option("scope", gradcheck_scope, "operator | block | model (default operator)");

    CLI::App* bench = app.add_subcommand("bench", "matrix-vs-accelerated training benchmark");
    add_common(bench, copts[2]);

    CLI::App* sweep = app.add_subcommand("alpha-sweep", "train accuracy across blend coefficients");
    add_common(sweep, copts[3]);

    CLI::App* fwd = app.add_subcommand("forward", "class probabilities for clip files");
    add_common(fwd, copts[4]);
    fwd->add_option("clips", forward_clips, "clip files")->required();

    CLI::App* params = app.add_subcommand("params", "parameter count for a backbone config");
    add_common(params, copts[5]);

    CLI::App* tr = app.add_subcommand("train", "train on synthetic (or manifest) data; log to stdout");
    add_common(tr, copts[6]);

    CLI::App* fuse = app.add_subcommand("fuse", "weighted average of score CSV files");
    add_common(fuse, copts[7]);
    fuse->add_option("scores", fuse_files, "score CSV files (forward output format)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // stable contract: usage problems exit 2
    }

    try {
        if (equiv->parsed()) return cmd_equivcheck(copts[0], inject_fault);
        if (grad->parsed()) return cmd_gradcheck(copts[1], gradcheck_scope);
        if (bench->parsed()) return cmd_bench(copts[2]);
        if (sweep->parsed()) return cmd_alpha_sweep(copts[3]);
        if (fwd->parsed()) return cmd_forward(copts[4], forward_clips);
        if (params->parsed()) return cmd_params(copts[5]);
        if (tr->parsed()) return cmd_train(copts[6]);
        if (fuse->parsed()) return cmd_fuse(copts[7], fuse_files);
    } catch (const NumericError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    } catch (const std::invalid_argument& e) {  // Dim/Arg/Config errors
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const ParseError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    }
    return 2;
}
