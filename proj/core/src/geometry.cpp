#include "mma/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mma/error.hpp"

namespace mma {

namespace {

double dist2(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

double ObjectRecord::max_extent() const {
  return std::max({extent[0], extent[1], extent[2]});
}

Tensor PointCloud::feature_tensor() const {
  if (feature_dim == 0) throw Error("PointCloud: feature_dim is zero");
  return Tensor::from_values({num_points(), feature_dim}, features);
}

void PointCloud::validate() const {
  if (positions.empty()) throw Error("PointCloud: must contain at least one point");
  for (const auto& p : positions) {
    for (double c : p)
      if (!std::isfinite(c)) throw Error("PointCloud: non-finite position");
  }
  if (features.size() != num_points() * feature_dim)
    throw Error("PointCloud: feature buffer does not match num_points x feature_dim");
  for (double f : features)
    if (!std::isfinite(f)) throw Error("PointCloud: non-finite feature value");
  if (!point_labels.empty()) {
    if (point_labels.size() != num_points())
      throw Error("PointCloud: label count does not match point count");
    for (int l : point_labels) {
      if (l < 0 || l >= num_classes)
        throw Error("PointCloud: point label " + std::to_string(l) +
                    " out of range [0," + std::to_string(num_classes) + ")");
    }
  }
  for (const auto& obj : objects) {
    for (double e : obj.extent)
      if (!(e > 0.0)) throw Error("PointCloud: object extent must be positive");
    for (double w : obj.weak_label)
      if (!std::isfinite(w)) throw Error("PointCloud: non-finite weak label");
    for (double c : obj.center)
      if (!std::isfinite(c)) throw Error("PointCloud: non-finite object center");
  }
}

std::vector<std::size_t> farthest_point_sample(const std::vector<Point3>& positions,
                                               std::size_t m, std::size_t start) {
  const std::size_t n = positions.size();
  if (m < 1) throw Error("farthest_point_sample: m must be >= 1");
  if (m > n)
    throw Error("farthest_point_sample: m = " + std::to_string(m) +
                " exceeds point count " + std::to_string(n));
  if (start >= n) throw Error("farthest_point_sample: start index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(m);
  selected.push_back(start);
  // min squared distance from each point to the selected set
  std::vector<double> min_d2(n);
  for (std::size_t i = 0; i < n; ++i) min_d2[i] = dist2(positions[i], positions[start]);

  while (selected.size() < m) {
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] > best_d2) {  // strict: ties keep the smallest index
        best_d2 = min_d2[i];
        best = i;
      }
    }
    selected.push_back(best);
    for (std::size_t i = 0; i < n; ++i)
      min_d2[i] = std::min(min_d2[i], dist2(positions[i], positions[best]));
  }
  return selected;
}

NeighborhoodIndex knn_query(const std::vector<Point3>& source,
                            const std::vector<Point3>& queries, std::size_t k) {
  const std::size_t s = source.size();
  if (k < 1) throw Error("knn_query: k must be >= 1");
  if (k > s)
    throw Error("knn_query: k = " + std::to_string(k) +
                " exceeds source count " + std::to_string(s));
  NeighborhoodIndex out;
  out.query_count = queries.size();
  out.k = k;
  out.indices.resize(queries.size() * k);
  out.distances.resize(queries.size() * k);

  std::vector<std::pair<double, std::size_t>> cand(s);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t i = 0; i < s; ++i) cand[i] = {dist2(queries[q], source[i]), i};
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k),
                      cand.end());  // pair ordering: distance, then index
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[q * k + j] = cand[j].second;
      out.distances[q * k + j] = std::sqrt(cand[j].first);
    }
  }
  return out;
}

Tensor group_features(const Tensor& features, const NeighborhoodIndex& index) {
  if (features.rank() != 2)
    throw Error("group_features: features must have shape (S, C)");
  const std::size_t channels = features.shape()[1];
  Tensor flat = gather_rows(features, index.indices);
  return reshape(flat, {index.query_count, index.k, channels});
}

Tensor interpolate_features(const std::vector<Point3>& coarse_positions,
                            const Tensor& coarse_features,
                            const std::vector<Point3>& fine_positions,
                            std::size_t k) {
  constexpr double kEps = 1e-8;
  if (coarse_features.rank() != 2)
    throw Error("interpolate_features: coarse features must have shape (M, C)");
  if (coarse_features.shape()[0] != coarse_positions.size())
    throw Error("interpolate_features: coarse feature rows do not match positions");
  if (k > coarse_positions.size())
    throw Error("interpolate_features: k exceeds coarse point count");

  const std::size_t n = fine_positions.size();
  const std::size_t channels = coarse_features.shape()[1];
  const NeighborhoodIndex index = knn_query(coarse_positions, fine_positions, k);

  std::vector<double> weights(n * k);
  for (std::size_t q = 0; q < n; ++q) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      weights[q * k + j] = 1.0 / (index.distance(q, j) + kEps);
      total += weights[q * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) weights[q * k + j] /= total;
  }

  // out[q] = weights[q] . gathered[q]  via a batched (1,k) x (k,C) product
  Tensor gathered = group_features(coarse_features, index);
  Tensor w = Tensor::from_values({n, 1, k}, std::move(weights));
  return reshape(matmul(w, gathered), {n, channels});
}

}  // namespace mma
