#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cdgc/gconv.hpp"
#include "cdgc/graph.hpp"
#include "cdgc/tensor.hpp"

// Reverse-mode gradients. A Tape records one forward pass as a stack of
// backward closures; variables are shared slots holding value and gradient,
// so a slot handle is the parameter's identity. Tapes are single-use and
// must not outlive the adjacency/label structures captured by reference.
namespace cdgc::ad {

struct MapSlot {
    FeatureMap value, grad;
    bool needs_grad = true;
};
struct MatSlot {
    Matrix value, grad;
    bool needs_grad = true;
};
struct VecSlot {
    std::vector<double> value, grad;
    bool needs_grad = true;
};
struct ScalarSlot {
    double value = 0.0, grad = 0.0;
    bool needs_grad = true;
};

using Map = std::shared_ptr<MapSlot>;
using Mat = std::shared_ptr<MatSlot>;
using Vec = std::shared_ptr<VecSlot>;
using Scalar = std::shared_ptr<ScalarSlot>;

class Tape {
  public:
    // leaves
    Map input(FeatureMap v, bool needs_grad = false);
    Mat mat(Matrix v, bool needs_grad = true);
    Vec vec(std::vector<double> v, bool needs_grad = true);
    Scalar scalar(double v, bool needs_grad = true);

    // Partitioned spatial convolution, Y = sum_k (A_k X - a * Ahat_k (.) X) W_k.
    // A null alpha fixes a = 0 (plain neighbor aggregation, no alpha gradient);
    // an alpha slot holding 0 takes the identical arithmetic path, so the
    // weight gradients of the two agree bitwise.
    Map partitioned_gconv(const Map& x, const PartitionedAdjacency& adj,
                          const std::vector<Mat>& weights, const Scalar& alpha);

    // Shift-based spatial convolution, Y = ((shift(x0) - a * x0) (.) M) W.
    Map shift_gconv(const Map& x0, const Mat& w, const Mat& mask, const Scalar& alpha);

    Map temporal_shift3(const Map& x);
    Map temporal_conv(const Map& x, const Mat& w, int stride = 1);

    // Training-mode batch normalization; gradients flow through the batch
    // statistics. Reports the statistics used when stats != nullptr.
    Map batchnorm_channel(const Map& x, const Vec& gamma, const Vec& beta, double eps,
                          BatchNormStats* stats = nullptr);
    Map batchnorm_location(const Map& x, const Vec& gamma, const Vec& beta, double eps,
                           BatchNormStats* stats = nullptr);

    Map relu(const Map& x);
    Map add(const Map& a, const Map& b);

    // mean over frames and vertices -> (batch x channels)
    Mat global_avg_pool(const Map& x);
    // rows = batch: out = h * w + bias
    Mat linear(const Mat& h, const Mat& w, const Vec& bias);

    // Mean cross-entropy of row-wise softmax against integer labels
    // (log-sum-exp stabilized). Writes the probabilities when probs != nullptr.
    Scalar softmax_cross_entropy(const Mat& logits, const std::vector<int>& labels,
                                 Matrix* probs = nullptr);

    Scalar sum(const Map& x);
    // sum of coeffs (.) x for fixed coefficients. As a check readout this
    // keeps every coordinate distinguishable, where a plain sum would let
    // index mix-ups cancel.
    Scalar weighted_sum(const Map& x, const FeatureMap& coeffs);
    Scalar add(const Scalar& a, const Scalar& b);

    // Seeds d(loss)/d(loss) = 1 and runs the recorded closures in reverse,
    // accumulating into each slot's grad. Call once per tape.
    void backward(const Scalar& loss);

  private:
    std::vector<std::function<void()>> ops_;
};

// ---- finite-difference verification ----------------------------------------

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdPass = 1e-6;   // expected for single operators (f64)
inline constexpr double kFdWarn = 1e-4;   // worth a warning, not a failure
inline constexpr double kFdFloor = 1e-4;  // rel-err denominator floor, see below

// One checked parameter block: a view into the primal storage that `f` reads,
// plus the analytic gradient claimed for it.
struct FdParam {
    std::string name;
    double* data = nullptr;
    std::size_t len = 0;
    const double* analytic = nullptr;
};

struct FdReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0, worst_numeric = 0.0;
    std::size_t coords_checked = 0;
};

// Central differences, (f(p+h) - f(p-h)) / 2h per coordinate; relative error
// |analytic - numeric| / max(|analytic|, |numeric|, kFdFloor). The floor makes
// this a hybrid tolerance: gradients below it are compared absolutely, so the
// ~1e-11 difference noise a true-zero gradient shows (think coordinates behind
// a dead relu) stays under kFdPass instead of being amplified. `f` must be a
// deterministic function of the storage the FdParams point into. Throws
// NumericError naming the coordinate if f turns non-finite at a perturbed
// point.
FdReport finite_difference_check(const std::function<double()>& f,
                                 const std::vector<FdParam>& params, double h = kFdStep);

}  // namespace cdgc::ad
