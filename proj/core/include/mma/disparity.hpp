#pragma once

#include <cstddef>

#include "mma/affine.hpp"
#include "mma/random.hpp"
#include "mma/tensor.hpp"

namespace mma {

/// Feature disparity calculation block. query_proj/key_proj build the
/// attention matrix from the disparity signal; output_proj is bias-free so
/// that zero disparity maps to an exactly-zero pre-residual output.
struct FDCParams {
  AffineParams query_proj;   // C -> C_a
  AffineParams key_proj;     // C -> C_a
  AffineParams output_proj;  // C -> C, no bias
};

/// Default attention width for a block operating on C channels.
std::size_t fdc_attention_dim(std::size_t channels);

FDCParams make_fdc(std::size_t channels, Rng& rng);
FDCParams make_fdc(std::size_t channels, std::size_t attention_dim, Rng& rng);

/// A = row_softmax((W_q d)(W_k d)^T / sqrt(C_a)) over the point axis of a
/// (N, C) disparity map. Every row sums to 1.
Tensor fdc_attention_matrix(const FDCParams& params, const Tensor& disparity);

/// y = relu(W_o ((I - A) d)) + y1 with d = y2 - y1. Row-stochastic A makes
/// (I - A) annihilate point-constant disparity maps, and the bias-free
/// output projection preserves y1 exactly when y1 == y2.
Tensor fdc_forward(const FDCParams& params, const Tensor& y1, const Tensor& y2);

}  // namespace mma
