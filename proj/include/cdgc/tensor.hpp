#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdgc/common.hpp"

namespace cdgc {

// Dense row-major matrix of doubles. Small and value-semantic; all the graph
// operators treat V x V adjacencies and C_in x C_out weights as Matrix.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    bool same_shape(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    std::string shape_str() const;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

// Dense rank-4 feature map, shape (batch N, channels C, frames T, vertices V),
// row-major with vertices innermost. A fixed (n, c, t) row is a contiguous
// V-vector, so per-frame graph operations walk contiguous memory.
class FeatureMap {
  public:
    FeatureMap() = default;
    FeatureMap(std::size_t batch, std::size_t channels, std::size_t frames, std::size_t vertices,
               double fill = 0.0)
        : n_(batch), c_(channels), t_(frames), v_(vertices), data_(batch * channels * frames * vertices, fill) {}

    std::size_t batch() const { return n_; }
    std::size_t channels() const { return c_; }
    std::size_t frames() const { return t_; }
    std::size_t vertices() const { return v_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t index(std::size_t n, std::size_t c, std::size_t t, std::size_t v) const {
        return ((n * c_ + c) * t_ + t) * v_ + v;
    }
    double& operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t v) {
        return data_[index(n, c, t, v)];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t v) const {
        return data_[index(n, c, t, v)];
    }

    // contiguous V-run at fixed (n, c, t)
    double* vertex_row(std::size_t n, std::size_t c, std::size_t t) {
        return data_.data() + index(n, c, t, 0);
    }
    const double* vertex_row(std::size_t n, std::size_t c, std::size_t t) const {
        return data_.data() + index(n, c, t, 0);
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const FeatureMap& other) const {
        return n_ == other.n_ && c_ == other.c_ && t_ == other.t_ && v_ == other.v_;
    }
    std::string shape_str() const;

  private:
    std::size_t n_ = 0, c_ = 0, t_ = 0, v_ = 0;
    std::vector<double> data_;
};

// ---- kernels -------------------------------------------------------------

// Standard matrix product. Throws DimError naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// View of one (batch, frame) slice as a (V x C) matrix and its inverse;
// the layout glue between rank-4 maps and the per-frame matrix algebra.
Matrix frame_matrix(const FeatureMap& x, std::size_t n, std::size_t t);
void store_frame(FeatureMap& out, std::size_t n, std::size_t t, const Matrix& m);
void add_frame(FeatureMap& out, std::size_t n, std::size_t t, const Matrix& m);
void add_into(Matrix& acc, const Matrix& m);

// Element-wise product. b must have the same shape as a, be an (N x 1) column
// that is broadcast across a's columns, or be a 1x1 scalar. No other
// broadcasting is supported.
Matrix hadamard(const Matrix& a, const Matrix& b);
FeatureMap hadamard(const FeatureMap& a, const FeatureMap& b);

// Replicates an (N x 1) column vector across C columns (the row-sum broadcast
// used by the vectorized central-difference form).
Matrix broadcast_rowsum(const Matrix& v, std::size_t channels);

FeatureMap relu(const FeatureMap& x);

struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;  // biased (1/m)
};

// Training-mode batch normalization: statistics per channel over
// (batch, frames, vertices). gamma/beta are per-channel affine parameters.
// Optionally reports the batch statistics it used.
FeatureMap batchnorm_forward(const FeatureMap& x, std::span<const double> gamma,
                             std::span<const double> beta, double eps,
                             BatchNormStats* stats = nullptr);

// Per-location variant: statistics per (channel, vertex) pair over
// (batch, frames); gamma/beta/stats are indexed c * V + v. Used where a
// vertex shift has folded joint identity into the channels.
FeatureMap batchnorm_location_forward(const FeatureMap& x, std::span<const double> gamma,
                                      std::span<const double> beta, double eps,
                                      BatchNormStats* stats = nullptr);

// Inference-mode normalization with frozen statistics (no reduction over the
// batch, so outputs depend only on the individual sample).
FeatureMap batchnorm_eval(const FeatureMap& x, std::span<const double> gamma,
                          std::span<const double> beta, const BatchNormStats& stats,
                          double eps);
FeatureMap batchnorm_location_eval(const FeatureMap& x, std::span<const double> gamma,
                                   std::span<const double> beta, const BatchNormStats& stats,
                                   double eps);

bool all_finite(const FeatureMap& x);
bool all_finite(const Matrix& m);

// max elementwise |a-b| scaled by the largest magnitude present (floor 1e-12);
// the deviation metric used by the oracle-equivalence checks
double max_rel_deviation(const FeatureMap& a, const FeatureMap& b);
double max_rel_deviation(const Matrix& a, const Matrix& b);

}  // namespace cdgc
