#pragma once

#include <cmath>
#include <cstddef>

#include "mma/error.hpp"
#include "mma/random.hpp"
#include "mma/tensor.hpp"

namespace mma {

/// One affine map x -> x.W + b applied to the last axis. The bias tensor may
/// be left undefined for bias-free layers.
struct AffineParams {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out,) or undefined

  std::size_t in_features() const { return weight.shape()[0]; }
  std::size_t out_features() const { return weight.shape()[1]; }
  std::size_t parameter_count() const {
    return weight.numel() + (bias.defined() ? bias.numel() : 0);
  }
};

/// Initializes weights and bias uniformly in (-1/sqrt(in), +1/sqrt(in)).
inline AffineParams make_affine(std::size_t in, std::size_t out, bool with_bias,
                                Rng& rng) {
  if (in == 0 || out == 0) throw Error("make_affine: zero-sized layer");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-bound, bound);
  AffineParams params;
  params.weight = Tensor::from_values({in, out}, std::move(w), /*requires_grad=*/true);
  if (with_bias) {
    std::vector<double> b(out);
    for (double& v : b) v = rng.uniform(-bound, bound);
    params.bias = Tensor::from_values({out}, std::move(b), /*requires_grad=*/true);
  }
  return params;
}

/// Applies the affine map along the last axis of x (any rank >= 1).
inline Tensor affine(const AffineParams& params, const Tensor& x) {
  Tensor input = x;
  const bool vector_input = x.rank() == 1;
  if (vector_input) input = reshape(x, {1, x.shape()[0]});
  if (input.shape().back() != params.in_features())
    throw Error("affine: input width " + std::to_string(input.shape().back()) +
                " does not match layer input " +
                std::to_string(params.in_features()));
  Tensor out = matmul(input, params.weight);
  if (params.bias.defined()) out = add(out, params.bias);
  if (vector_input) out = reshape(out, {params.out_features()});
  return out;
}

}  // namespace mma
