#include "mma/disparity.hpp"

#include <algorithm>
#include <cmath>

#include "mma/error.hpp"

namespace mma {

std::size_t fdc_attention_dim(std::size_t channels) {
  return std::max<std::size_t>(4, channels / 2);
}

FDCParams make_fdc(std::size_t channels, Rng& rng) {
  return make_fdc(channels, fdc_attention_dim(channels), rng);
}

FDCParams make_fdc(std::size_t channels, std::size_t attention_dim, Rng& rng) {
  FDCParams params;
  params.query_proj = make_affine(channels, attention_dim, /*with_bias=*/true, rng);
  params.key_proj = make_affine(channels, attention_dim, /*with_bias=*/true, rng);
  params.output_proj = make_affine(channels, channels, /*with_bias=*/false, rng);
  return params;
}

Tensor fdc_attention_matrix(const FDCParams& params, const Tensor& disparity) {
  if (disparity.rank() != 2)
    throw Error("fdc_attention_matrix: disparity must have shape (N, C)");
  const std::size_t attention_dim = params.query_proj.out_features();
  Tensor q = affine(params.query_proj, disparity);  // (N, C_a)
  Tensor k = affine(params.key_proj, disparity);    // (N, C_a)
  Tensor logits = scale(matmul(q, transpose_last2(k)),
                        1.0 / std::sqrt(static_cast<double>(attention_dim)));
  return softmax_lastdim(logits);  // (N, N), rows sum to 1
}

Tensor fdc_forward(const FDCParams& params, const Tensor& y1, const Tensor& y2) {
  if (y1.rank() != 2 || y2.rank() != 2)
    throw Error("fdc_forward: inputs must have shape (N, C)");
  if (y1.shape() != y2.shape())
    throw Error("fdc_forward: y1 and y2 must share one shape (same density level)");
  Tensor d = sub(y2, y1);
  Tensor attention = fdc_attention_matrix(params, d);
  Tensor core = sub(d, matmul(attention, d));  // (I - A) d
  return add(relu(affine(params.output_proj, core)), y1);
}

}  // namespace mma
