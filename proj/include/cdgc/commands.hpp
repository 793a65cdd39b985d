#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdgc/autodiff.hpp"
#include "cdgc/data.hpp"
#include "cdgc/network.hpp"

// Command cores shared by the CLI and the acceptance harness. The CLI adds
// argument parsing and CSV formatting around these; keeping the substance
// here means both run the exact same computations.
namespace cdgc::cmd {

// ---- randomized naive-vs-matrix equivalence ---------------------------------

struct EquivTrial {
    int trial = 0;
    std::uint64_t seed = 0;  // the trial's own generator seed
    std::string graph_text;  // instance topology, reparseable
    int batch = 0, frames = 0, channels_in = 0, channels_out = 0;
    double alpha = 0.0;
    double deviation = 0.0;    // naive vs matrix, relative
    double vanilla_gap = 0.0;  // alpha == 0 trials only: distance to vanilla_gconv
};

struct EquivReport {
    int trials = 0;
    double tolerance = 1e-10;
    double max_deviation = 0.0;
    double max_vanilla_gap = 0.0;
    EquivTrial worst;
    bool pass = false;  // trials == 0 passes vacuously
};

// Randomized instances: connected graphs with V <= 25, channels <= 8, alpha
// cycling {0, 0.3, 0.7, 1}. inject_fault corrupts one matrix-path output per
// trial so the harness can prove it would catch a regression.
EquivReport run_equivcheck(int trials, std::uint64_t seed, bool inject_fault = false);

// Text block describing the worst instance well enough to rebuild it by hand.
std::string equiv_replay_text(const EquivReport& r);

// ---- finite-difference gradient sweeps --------------------------------------

struct GradCase {
    std::string name;  // "<seed>/<case>"
    ad::FdReport report;
};

struct GradReport {
    std::string scope;  // operator | block | model
    int seeds = 0;
    double max_rel_err = 0.0;
    std::string worst_case;
    std::size_t coords_checked = 0;
    double fail_threshold = ad::kFdWarn;
    bool pass = false;
    std::vector<GradCase> cases;
};

// scope "operator": every spatial/temporal/normalization op in isolation.
// scope "block": one full residual block per variant. scope "model": a tiny
// two-block, full-head backbone per variant.
GradReport run_gradcheck(const std::string& scope, std::uint64_t seed, int num_seeds);

// ---- toy training, benchmark, alpha sweep ------------------------------------

struct ToyData {
    FeatureMap features;  // (N, 3, T, V)
    std::vector<int> labels;
};

// Synthetic relational dataset stacked into a training batch (joint stream).
ToyData make_toy_data(const SynthSpec& spec, const SkeletonGraph& g, std::uint64_t seed);

struct BenchSettings {
    std::vector<SpatialOp> variants = {SpatialOp::cdgc_matrix, SpatialOp::accelerated_cdgc};
    SynthSpec data;  // defaults below give 600 clips of 32 frames
    int width = 8;
    int batch_size = 16;
    int max_epochs = 12;
    int timing_epochs = 4;  // 1 warmup + median of the rest
    double target_accuracy = 0.9;
    double alpha = 0.3;
    std::uint64_t seed = 1;

    BenchSettings() {
        data.num_classes = 6;
        data.clips_per_class = 100;
        data.frames = 32;
    }
};

struct BenchRow {
    std::string variant;
    std::int64_t params = 0;
    double seconds_per_epoch = 0.0;  // median after the warmup epoch
    int epochs_to_target = -1;       // -1: target never reached
    double target = 0.0;
    std::uint64_t seed = 0;
};

// Trains every variant on the same dataset and seed, single-threaded, and
// times the epoch loop only (dataset generation and model setup excluded).
// Runs at least timing_epochs epochs, then stops once the target train
// accuracy is reached (or at max_epochs).
std::vector<BenchRow> run_bench(const BenchSettings& s);

struct SweepSettings {
    std::vector<double> alphas = {0.0, 0.1, 0.3, 0.5, 0.7, 1.0};
    int num_seeds = 3;
    SynthSpec data;  // defaults below give a small, fast task
    int width = 8;
    int batch_size = 16;
    int epochs = 8;
    std::uint64_t seed = 1;

    SweepSettings() {
        data.clips_per_class = 25;
        data.frames = 16;
    }
};

struct SweepRow {
    double alpha = 0.0;
    double accuracy = 0.0;  // median over seeds of the final train accuracy
    std::vector<double> per_seed;
};

// Fixed-alpha cdgc_matrix runs per value; alpha = 0 rows are bitwise equal to
// a vanilla run with the same seed.
std::vector<SweepRow> run_alpha_sweep(const SweepSettings& s);

double median(std::vector<double> v);

}  // namespace cdgc::cmd
