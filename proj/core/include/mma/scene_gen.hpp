#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mma/geometry.hpp"

namespace mma {

/// Shape classes of the synthetic scenes. The enum value doubles as the
/// class id; the background point label is kBackgroundClass.
enum class ShapeKind { box = 0, sphere = 1, cylinder = 2 };

constexpr int kNumShapeClasses = 3;
constexpr int kBackgroundClass = kNumShapeClasses;

std::string shape_name(ShapeKind kind);
ShapeKind shape_from_name(const std::string& name);

/// Recipe for one synthetic scene: objects sampled without overlap inside
/// the placement cube, surface points with optional Gaussian noise, plus a
/// clutter fraction of background points. Deterministic per seed.
struct SceneSpec {
  std::size_t num_points = 512;
  std::size_t num_objects = 1;
  std::vector<ShapeKind> shape_vocabulary = {ShapeKind::box, ShapeKind::sphere,
                                             ShapeKind::cylinder};
  double extent_min = 0.5;  // full widths, scene units
  double extent_max = 1.5;
  double clutter_fraction = 0.2;
  double noise_sigma = 0.005;
  double placement_half_width = 2.0;  // object centers lie in this cube
  std::uint64_t seed = 0;

  void validate() const;
};

PointCloud generate_scene(const SceneSpec& spec);

/// Convenience: `count` scenes from the template, scene i seeded with
/// base_seed + i.
std::vector<PointCloud> generate_dataset(const SceneSpec& spec, std::size_t count,
                                         std::uint64_t base_seed);

enum class JitterDistribution { uniform_ball, gaussian };

/// Weak-label jitter: each object's weak_label is displaced from its center
/// by u with |u| <= fraction * max(extent). uniform_ball draws u uniformly
/// over that ball; gaussian draws u ~ N(0, (R/2)^2 I) truncated at R.
/// fraction == 0 leaves weak_label == center bit-exactly.
struct JitterSpec {
  double fraction = 0.0;  // in [0, 1]
  JitterDistribution distribution = JitterDistribution::uniform_ball;
  std::uint64_t seed = 0;

  void validate() const;
};

void inject_jitter(std::vector<ObjectRecord>& objects, const JitterSpec& spec);

/// True when the point lies within the object's axis-aligned extent box,
/// scaled by `slack` to absorb surface noise. Used for objectness targets.
bool point_inside_object(const Point3& point, const ObjectRecord& object,
                         double slack = 1.1);

}  // namespace mma
