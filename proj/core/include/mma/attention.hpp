#pragma once

#include <cstddef>
#include <vector>

#include "mma/affine.hpp"
#include "mma/geometry.hpp"
#include "mma/random.hpp"
#include "mma/tensor.hpp"

namespace mma {

/// Trainable adjacent position encoding: a two-layer MLP mapping the
/// relative position of a neighbor pair to a C'-dimensional encoding.
struct APEParams {
  AffineParams hidden;  // 3 -> C'
  AffineParams output;  // C' -> C'
};

APEParams make_ape(std::size_t out_channels, Rng& rng);

/// delta = output(relu(hidden(rel_pos))), applied per (query, neighbor) pair.
/// rel_pos has shape (Q, k, 3); the result is (Q, k, C').
Tensor encode_adjacent_position(const APEParams& ape, const Tensor& rel_pos);

/// Parameters of one adjacency attention aggregation block. phi/psi/alpha
/// are single affine feature transforms, gamma is a two-layer MLP producing
/// per-channel attention logits, and parallel_mlp is the plain branch that
/// is aggregated with the attention branch.
struct AAAParams {
  AffineParams phi;           // C -> C'
  AffineParams psi;           // C -> C'
  AffineParams alpha;         // C -> C'
  AffineParams gamma_hidden;  // C' -> C'
  AffineParams gamma_output;  // C' -> C'
  AffineParams parallel_mlp;  // C -> C'
};

AAAParams make_aaa(std::size_t in_channels, std::size_t out_channels, Rng& rng);

struct AAAStageConfig {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t neighbors = 16;
  double reduction_ratio = 0.5;
};

/// Relative positions p_query - p_neighbor as a constant (Q, k, 3) tensor.
Tensor relative_positions(const std::vector<Point3>& positions,
                          const std::vector<std::size_t>& queries,
                          const NeighborhoodIndex& index);

/// Vector attention over each query's neighborhood:
///   y_i = sum_j softmax_j(gamma(phi(x_i) - psi(x_j) + delta_ij)) * (alpha(x_j) + delta_ij)
/// with the softmax normalizing each channel independently across the k
/// neighbors, and delta_ij = APE(p_i - p_j) shared between the logits and
/// the value term. Returns (Q, C').
Tensor aaa_forward(const AAAParams& params, const APEParams& ape,
                   const Tensor& features, const std::vector<Point3>& positions,
                   const std::vector<std::size_t>& queries,
                   const NeighborhoodIndex& index);

/// The (Q, k, C') per-channel attention weights of aaa_forward: nonnegative,
/// summing to 1 across the neighbor axis for every (query, channel) pair.
Tensor aaa_attention_weights(const AAAParams& params, const APEParams& ape,
                             const Tensor& features,
                             const std::vector<Point3>& positions,
                             const std::vector<std::size_t>& queries,
                             const NeighborhoodIndex& index);

struct AAAStageResult {
  std::vector<Point3> positions;       // sampled centroids, selection order
  Tensor features;                     // (M, C')
  std::vector<std::size_t> indices;    // centroid indices into the input set
};

/// One encoder stage: farthest-point-sample M = ceil(N * ratio) centroids,
/// form k-neighborhoods over the pre-sampling point set, then aggregate the
/// attention branch with the parallel MLP branch as relu(A + B).
AAAStageResult aaa_stage(const AAAStageConfig& cfg, const AAAParams& params,
                         const APEParams& ape, const Tensor& features,
                         const std::vector<Point3>& positions);

}  // namespace mma
