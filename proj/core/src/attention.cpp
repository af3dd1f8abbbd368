#include "mma/attention.hpp"

#include <cmath>
#include <string>

#include "mma/error.hpp"

namespace mma {

APEParams make_ape(std::size_t out_channels, Rng& rng) {
  APEParams ape;
  ape.hidden = make_affine(3, out_channels, /*with_bias=*/true, rng);
  ape.output = make_affine(out_channels, out_channels, /*with_bias=*/true, rng);
  return ape;
}

Tensor encode_adjacent_position(const APEParams& ape, const Tensor& rel_pos) {
  if (rel_pos.shape().back() != 3)
    throw Error("encode_adjacent_position: last axis must be 3 (relative position)");
  return affine(ape.output, relu(affine(ape.hidden, rel_pos)));
}

AAAParams make_aaa(std::size_t in_channels, std::size_t out_channels, Rng& rng) {
  AAAParams params;
  params.phi = make_affine(in_channels, out_channels, true, rng);
  params.psi = make_affine(in_channels, out_channels, true, rng);
  params.alpha = make_affine(in_channels, out_channels, true, rng);
  params.gamma_hidden = make_affine(out_channels, out_channels, true, rng);
  params.gamma_output = make_affine(out_channels, out_channels, true, rng);
  params.parallel_mlp = make_affine(in_channels, out_channels, true, rng);
  return params;
}

Tensor relative_positions(const std::vector<Point3>& positions,
                          const std::vector<std::size_t>& queries,
                          const NeighborhoodIndex& index) {
  const std::size_t q_count = queries.size();
  const std::size_t k = index.k;
  std::vector<double> rel(q_count * k * 3);
  for (std::size_t q = 0; q < q_count; ++q) {
    const Point3& pi = positions[queries[q]];
    for (std::size_t j = 0; j < k; ++j) {
      const Point3& pj = positions[index.at(q, j)];
      double* dst = rel.data() + (q * k + j) * 3;
      dst[0] = pi[0] - pj[0];
      dst[1] = pi[1] - pj[1];
      dst[2] = pi[2] - pj[2];
    }
  }
  return Tensor::from_values({q_count, k, 3}, std::move(rel));
}

namespace {

/// Softmax across the neighbor axis of a (Q, k, C) tensor, normalizing each
/// channel independently.
Tensor softmax_over_neighbors(const Tensor& logits) {
  return transpose_last2(softmax_lastdim(transpose_last2(logits)));
}

struct AttentionTerms {
  Tensor weights;  // (Q, k, C')
  Tensor values;   // (Q, k, C')
};

AttentionTerms attention_terms(const AAAParams& params, const APEParams& ape,
                               const Tensor& features,
                               const std::vector<Point3>& positions,
                               const std::vector<std::size_t>& queries,
                               const NeighborhoodIndex& index) {
  if (features.rank() != 2)
    throw Error("aaa_forward: features must have shape (N, C)");
  if (features.shape()[0] != positions.size())
    throw Error("aaa_forward: feature rows do not match positions");
  if (index.k < 1) throw Error("aaa_forward: neighborhoods must be non-empty");
  if (index.query_count != queries.size())
    throw Error("aaa_forward: neighborhood index does not match query count");

  const std::size_t q_count = queries.size();
  const std::size_t out_channels = params.phi.out_features();

  Tensor x_query = gather_rows(features, queries);                 // (Q, C)
  Tensor phi_q = reshape(affine(params.phi, x_query),
                         {q_count, 1, out_channels});              // (Q, 1, C')
  Tensor x_neighbors = group_features(features, index);            // (Q, k, C)
  Tensor psi_n = affine(params.psi, x_neighbors);                  // (Q, k, C')
  Tensor alpha_n = affine(params.alpha, x_neighbors);              // (Q, k, C')

  Tensor rel = relative_positions(positions, queries, index);      // (Q, k, 3)
  Tensor delta = encode_adjacent_position(ape, rel);               // (Q, k, C')

  Tensor pre = add(sub(phi_q, psi_n), delta);
  Tensor logits =
      affine(params.gamma_output, relu(affine(params.gamma_hidden, pre)));
  AttentionTerms terms;
  terms.weights = softmax_over_neighbors(logits);                  // (Q, k, C')
  terms.values = add(alpha_n, delta);
  return terms;
}

}  // namespace

Tensor aaa_forward(const AAAParams& params, const APEParams& ape,
                   const Tensor& features, const std::vector<Point3>& positions,
                   const std::vector<std::size_t>& queries,
                   const NeighborhoodIndex& index) {
  AttentionTerms terms =
      attention_terms(params, ape, features, positions, queries, index);
  return reduce_sum_axis(mul(terms.weights, terms.values), 1);     // (Q, C')
}

Tensor aaa_attention_weights(const AAAParams& params, const APEParams& ape,
                             const Tensor& features,
                             const std::vector<Point3>& positions,
                             const std::vector<std::size_t>& queries,
                             const NeighborhoodIndex& index) {
  return attention_terms(params, ape, features, positions, queries, index)
      .weights;
}

AAAStageResult aaa_stage(const AAAStageConfig& cfg, const AAAParams& params,
                         const APEParams& ape, const Tensor& features,
                         const std::vector<Point3>& positions) {
  if (!(cfg.reduction_ratio > 0.0 && cfg.reduction_ratio <= 1.0))
    throw Error("aaa_stage: reduction_ratio must lie in (0, 1]");
  const std::size_t n = positions.size();
  std::size_t m = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * cfg.reduction_ratio));
  if (m < 1) m = 1;
  if (m > n) m = n;
  if (cfg.neighbors > n)
    throw Error("aaa_stage: k = " + std::to_string(cfg.neighbors) +
                " exceeds point count " + std::to_string(n));

  AAAStageResult result;
  result.indices = farthest_point_sample(positions, m, 0);
  result.positions.reserve(m);
  for (std::size_t idx : result.indices) result.positions.push_back(positions[idx]);

  // Neighborhoods are drawn from the pre-sampling point set.
  const NeighborhoodIndex index =
      knn_query(positions, result.positions, cfg.neighbors);

  Tensor branch_attention =
      aaa_forward(params, ape, features, positions, result.indices, index);
  Tensor branch_plain = affine(params.parallel_mlp, gather_rows(features, result.indices));
  result.features = relu(add(branch_attention, branch_plain));
  return result;
}

}  // namespace mma
