#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cdgc/autodiff.hpp"
#include "cdgc/gconv.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/tensor.hpp"

namespace cdgc {

enum class SpatialOp { vanilla, cdgc_matrix, accelerated_cdgc };
enum class AlphaMode { fixed, learnable };

const char* spatial_op_name(SpatialOp op);
// accepts the canonical names plus the short aliases "matrix" and "accelerated"
SpatialOp parse_spatial_op(const std::string& name);

struct BlockConfig {
    int in_channels = 0;
    int out_channels = 0;
    int temporal_stride = 1;
    bool residual = true;  // projection conv + BN when shape changes
};

// Full backbone description. Block 0 is the input block (data normalization
// happens before it; it carries no residual).
struct BackboneConfig {
    SpatialOp spatial_op = SpatialOp::cdgc_matrix;
    std::vector<BlockConfig> blocks;
    int in_channels = 3;
    int num_classes = 2;
    AlphaMode alpha_mode = AlphaMode::fixed;
    double alpha = 0.3;

    void validate() const;  // throws ConfigError

    // key/value text used in checkpoint headers; parse(canonical_text())
    // reproduces the config exactly
    std::string canonical_text() const;
    static BackboneConfig parse_canonical_text(const std::string& text);

    // channel schedule 64 x4, 128 x3, 256 x3, frame stride 2 at width changes
    static BackboneConfig paper_scale(SpatialOp op, int num_classes = 60);
    // same layout shrunk to 6 blocks at width, 2*width, 4*width
    static BackboneConfig desk_scale(SpatialOp op, int num_classes, int width = 8);
};

inline constexpr int kTemporalTaps = 9;  // matrix/vanilla temporal window
inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;  // running-statistics update rate

class Model {
  public:
    Model(BackboneConfig cfg, SkeletonGraph graph, std::uint64_t seed);

    const BackboneConfig& config() const { return cfg_; }
    const SkeletonGraph& graph() const { return graph_; }

    std::int64_t param_count() const;  // trainable scalars only
    std::vector<double> alphas() const;

    // eval mode (frozen normalization statistics): class probabilities,
    // one row per batch element, rows sum to 1
    Matrix forward(const FeatureMap& batch) const;

    // training-mode loss at the current parameters; pure (no state updates)
    double training_loss(const FeatureMap& batch, const std::vector<int>& labels) const;
    // gradients of training_loss, flattened in trainable param_refs order
    std::vector<double> training_gradients(const FeatureMap& batch,
                                           const std::vector<int>& labels) const;

    struct StepStats {
        double loss = 0.0;
        int correct = 0;
    };
    // One SGD step with Nesterov momentum; updates parameters, momentum
    // buffers and running normalization statistics, and clamps learnable
    // blend coefficients back into [0, 1].
    StepStats train_step(const FeatureMap& batch, const std::vector<int>& labels, double lr,
                         double momentum);

    // Every stored tensor in declaration order: trainable parameters plus
    // running-statistics buffers (and fixed blend coefficients). This is the
    // checkpoint serialization order. Pointers are valid while the model
    // lives and is not moved.
    struct ParamRef {
        std::string name;
        double* data = nullptr;
        std::size_t len = 0;
        bool trainable = false;
    };
    std::vector<ParamRef> param_refs();
    std::vector<ParamRef> param_refs() const;

    void save(const std::string& path) const;
    static Model load(const std::string& path, const SkeletonGraph& graph);

  private:
    struct BnParams {
        std::vector<double> gamma, beta;
        BatchNormStats run;
        bool per_location = false;
    };
    struct Block {
        std::vector<Matrix> spatial_w;
        Matrix mask;         // accelerated only
        double alpha = 0.0;  // unused by vanilla
        BnParams bn1, bn2;
        Matrix temporal_w;
        Matrix res_w;  // empty when the residual is the identity / absent
        BnParams res_bn;
    };

    struct Bound {
        double* master = nullptr;
        const double* grad = nullptr;
        std::size_t len = 0;
        std::shared_ptr<void> slot;  // keeps the gradient storage alive
    };
    struct StatUpdate {
        BatchNormStats batch;
        BatchNormStats* target = nullptr;
        double count = 0;  // samples behind each statistic, for the unbiased update
    };

    ad::Scalar build_training_graph(ad::Tape& tape, const FeatureMap& batch,
                                    const std::vector<int>& labels, std::vector<Bound>* bound,
                                    std::vector<StatUpdate>* stats, Matrix* probs);
    void check_batch(const FeatureMap& batch) const;

    BackboneConfig cfg_;
    SkeletonGraph graph_;
    PartitionedAdjacency adj_;  // built once for the partitioned variants
    BnParams data_bn_;
    std::vector<Block> blocks_;
    Matrix fc_w_;
    std::vector<double> fc_b_;
    std::vector<double> velocity_;  // momentum state, aligned with trainable refs
};

// ---- training loop ----------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;  // Nesterov
    int epochs = 30;
    std::vector<int> decay_epochs;  // empty -> scaled_decay_epochs(epochs)
    double decay_factor = 0.1;
    int batch_size = 16;
    std::uint64_t seed = 1;

    void validate() const;
};

// milestone epochs {60, 80, 100} of a 140-epoch run rescaled to `epochs`,
// rounded up, deduplicated, clipped to the run length
std::vector<int> scaled_decay_epochs(int epochs);

struct EpochLog {
    int epoch = 0;  // 1-based
    double loss = 0.0;
    double accuracy = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

// return false to stop after the current epoch
using EpochCallback = std::function<bool(const EpochLog&)>;

std::vector<EpochLog> train(Model& model, const FeatureMap& features,
                            const std::vector<int>& labels, const TrainConfig& cfg,
                            const EpochCallback& callback = {});

// weighted average of per-stream class scores; weights must be nonnegative
// with a positive sum
Matrix fuse_scores(const std::vector<Matrix>& scores, const std::vector<double>& weights);

std::vector<int> predict(const Matrix& probs);
double accuracy(const Matrix& probs, const std::vector<int>& labels);

// rows (N, C, T, V) -> (len(indices), C, T, V), the minibatch gather
FeatureMap batch_select(const FeatureMap& features, const std::vector<int>& indices);

}  // namespace cdgc
