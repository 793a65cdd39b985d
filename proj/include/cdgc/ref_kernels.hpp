#pragma once

#include "cdgc/tensor.hpp"

// Serial reference kernels. These are deliberately naive loop translations of
// the definitions; the test suites and the kernel benchmark compare the
// production (OpenMP-capable) kernels against them.
namespace cdgc::ref {

// textbook triple loop, no reordering
Matrix matmul(const Matrix& a, const Matrix& b);

// per-channel normalization statistics computed in one streaming pass
FeatureMap batchnorm_forward(const FeatureMap& x, std::span<const double> gamma,
                             std::span<const double> beta, double eps);

}  // namespace cdgc::ref
