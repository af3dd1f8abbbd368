#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "mma/tensor.hpp"

namespace mma {

using Point3 = std::array<double, 3>;

/// Axis-aligned object annotation. `extent` holds full widths per axis
/// (twice the half-width); `weak_label` is the possibly jittered center.
struct ObjectRecord {
  int class_id = 0;
  Point3 center{0.0, 0.0, 0.0};
  Point3 extent{1.0, 1.0, 1.0};
  Point3 weak_label{0.0, 0.0, 0.0};

  double max_extent() const;
};

/// A scene: positions in scene units, per-point features, optional
/// per-point labels and object annotations.
struct PointCloud {
  std::vector<Point3> positions;
  std::vector<double> features;  // num_points x feature_dim, row-major
  std::size_t feature_dim = 0;
  std::vector<int> point_labels;  // empty when absent
  std::vector<ObjectRecord> objects;
  int num_classes = 0;

  std::size_t num_points() const { return positions.size(); }
  bool has_labels() const { return !point_labels.empty(); }
  Tensor feature_tensor() const;
  void validate() const;  // throws Error naming the violated invariant
};

/// For each query point, the k nearest source indices ordered ascending by
/// distance (ties by ascending index), plus the matching distances.
struct NeighborhoodIndex {
  std::size_t query_count = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;  // query_count * k
  std::vector<double> distances;     // Euclidean, same layout

  std::size_t at(std::size_t query, std::size_t j) const {
    return indices[query * k + j];
  }
  double distance(std::size_t query, std::size_t j) const {
    return distances[query * k + j];
  }
};

/// Greedy max-min farthest point sampling. The first pick is `start`; each
/// subsequent pick maximizes the distance to the selected set, breaking ties
/// by the smallest index. Returns indices in selection order.
std::vector<std::size_t> farthest_point_sample(const std::vector<Point3>& positions,
                                               std::size_t m,
                                               std::size_t start = 0);

/// Brute-force k-nearest-neighbor query (sufficient at desk scale).
NeighborhoodIndex knn_query(const std::vector<Point3>& source,
                            const std::vector<Point3>& queries, std::size_t k);

/// Gathers per-neighbor features: (S, C) -> (Q, k, C). Differentiable; the
/// gradient scatters additively back onto the source rows.
Tensor group_features(const Tensor& features, const NeighborhoodIndex& index);

/// Inverse-distance-weighted interpolation of coarse features onto fine
/// positions using the k nearest coarse points:
///   w_j = (1/(d_j+eps)) / sum_i (1/(d_i+eps)),  eps = 1e-8.
/// Differentiable with respect to `coarse_features`.
Tensor interpolate_features(const std::vector<Point3>& coarse_positions,
                            const Tensor& coarse_features,
                            const std::vector<Point3>& fine_positions,
                            std::size_t k = 3);

}  // namespace mma
