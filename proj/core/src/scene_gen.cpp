#include "mma/scene_gen.hpp"

#include <algorithm>
#include <cmath>

#include "mma/error.hpp"
#include "mma/random.hpp"

namespace mma {

std::string shape_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::box: return "box";
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::cylinder: return "cylinder";
  }
  throw Error("shape_name: unknown shape");
}

ShapeKind shape_from_name(const std::string& name) {
  if (name == "box") return ShapeKind::box;
  if (name == "sphere") return ShapeKind::sphere;
  if (name == "cylinder") return ShapeKind::cylinder;
  throw Error("unknown shape '" + name + "'");
}

void SceneSpec::validate() const {
  if (num_points < 1) throw Error("SceneSpec: num_points must be >= 1");
  if (shape_vocabulary.empty())
    throw Error("SceneSpec: shape vocabulary must not be empty");
  if (!(extent_min > 0.0) || !(extent_max >= extent_min))
    throw Error("SceneSpec: extent range must satisfy 0 < min <= max");
  if (!(clutter_fraction >= 0.0 && clutter_fraction <= 1.0))
    throw Error("SceneSpec: clutter_fraction must lie in [0, 1]");
  if (!(noise_sigma >= 0.0)) throw Error("SceneSpec: noise_sigma must be >= 0");
  if (!(placement_half_width > 0.0))
    throw Error("SceneSpec: placement_half_width must be positive");
}

void JitterSpec::validate() const {
  if (!(fraction >= 0.0 && fraction <= 1.0))
    throw Error("JitterSpec: fraction must lie in [0, 1]");
}

namespace {

bool aabb_overlap(const ObjectRecord& a, const ObjectRecord& b, double gap) {
  for (int c = 0; c < 3; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double span = (a.extent[i] + b.extent[i]) / 2.0 + gap;
    if (std::abs(a.center[i] - b.center[i]) >= span) return false;
  }
  return true;
}

ObjectRecord sample_object(const SceneSpec& spec, Rng& rng) {
  ObjectRecord obj;
  const ShapeKind kind =
      spec.shape_vocabulary[rng.below(spec.shape_vocabulary.size())];
  obj.class_id = static_cast<int>(kind);
  switch (kind) {
    case ShapeKind::box:
      for (int c = 0; c < 3; ++c)
        obj.extent[static_cast<std::size_t>(c)] =
            rng.uniform(spec.extent_min, spec.extent_max);
      break;
    case ShapeKind::sphere: {
      const double d = rng.uniform(spec.extent_min, spec.extent_max);
      obj.extent = {d, d, d};
      break;
    }
    case ShapeKind::cylinder: {
      const double d = rng.uniform(spec.extent_min, spec.extent_max);
      const double h = rng.uniform(spec.extent_min, spec.extent_max);
      obj.extent = {d, d, h};
      break;
    }
  }
  for (int c = 0; c < 3; ++c)
    obj.center[static_cast<std::size_t>(c)] =
        rng.uniform(-spec.placement_half_width, spec.placement_half_width);
  obj.weak_label = obj.center;
  return obj;
}

Point3 sample_box_surface(const ObjectRecord& obj, Rng& rng) {
  const double ex = obj.extent[0], ey = obj.extent[1], ez = obj.extent[2];
  const double area_x = ey * ez, area_y = ex * ez, area_z = ex * ey;
  const double total = 2.0 * (area_x + area_y + area_z);
  double pick = rng.uniform() * total;
  Point3 p{0.0, 0.0, 0.0};
  const double u = rng.uniform(-0.5, 0.5);
  const double v = rng.uniform(-0.5, 0.5);
  if (pick < 2.0 * area_x) {
    p = {pick < area_x ? -ex / 2.0 : ex / 2.0, u * ey, v * ez};
  } else if (pick < 2.0 * (area_x + area_y)) {
    pick -= 2.0 * area_x;
    p = {u * ex, pick < area_y ? -ey / 2.0 : ey / 2.0, v * ez};
  } else {
    pick -= 2.0 * (area_x + area_y);
    p = {u * ex, v * ey, pick < area_z ? -ez / 2.0 : ez / 2.0};
  }
  return {p[0] + obj.center[0], p[1] + obj.center[1], p[2] + obj.center[2]};
}

Point3 sample_sphere_surface(const ObjectRecord& obj, Rng& rng) {
  const double r = obj.extent[0] / 2.0;
  const auto dir = rng.on_unit_sphere();
  return {obj.center[0] + dir[0] * r, obj.center[1] + dir[1] * r,
          obj.center[2] + dir[2] * r};
}

Point3 sample_cylinder_surface(const ObjectRecord& obj, Rng& rng) {
  const double r = obj.extent[0] / 2.0;
  const double h = obj.extent[2];
  const double pi = 3.14159265358979323846;
  const double side_area = 2.0 * pi * r * h;
  const double cap_area = pi * r * r;
  const double pick = rng.uniform() * (side_area + 2.0 * cap_area);
  Point3 p{0.0, 0.0, 0.0};
  if (pick < side_area) {
    const double theta = rng.uniform() * 2.0 * pi;
    p = {r * std::cos(theta), r * std::sin(theta), rng.uniform(-h / 2.0, h / 2.0)};
  } else {
    const double rr = r * std::sqrt(rng.uniform());
    const double theta = rng.uniform() * 2.0 * pi;
    const double z = pick < side_area + cap_area ? -h / 2.0 : h / 2.0;
    p = {rr * std::cos(theta), rr * std::sin(theta), z};
  }
  return {p[0] + obj.center[0], p[1] + obj.center[1], p[2] + obj.center[2]};
}

Point3 sample_surface(const ObjectRecord& obj, Rng& rng) {
  switch (static_cast<ShapeKind>(obj.class_id)) {
    case ShapeKind::box: return sample_box_surface(obj, rng);
    case ShapeKind::sphere: return sample_sphere_surface(obj, rng);
    case ShapeKind::cylinder: return sample_cylinder_surface(obj, rng);
  }
  throw Error("sample_surface: unknown shape class");
}

}  // namespace

PointCloud generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  PointCloud cloud;
  cloud.num_classes = kNumShapeClasses + 1;
  cloud.feature_dim = 1;

  constexpr int kMaxTries = 1000;
  int tries = 0;
  while (cloud.objects.size() < spec.num_objects) {
    ObjectRecord candidate = sample_object(spec, rng);
    bool clear = true;
    for (const auto& placed : cloud.objects) {
      if (aabb_overlap(candidate, placed, 0.05)) {
        clear = false;
        break;
      }
    }
    if (clear) {
      cloud.objects.push_back(candidate);
    } else if (++tries >= kMaxTries) {
      throw Error("generate_scene: could not place " +
                  std::to_string(spec.num_objects) +
                  " non-overlapping objects after " +
                  std::to_string(kMaxTries) + " tries");
    }
  }

  std::size_t clutter = static_cast<std::size_t>(
      std::llround(spec.clutter_fraction * static_cast<double>(spec.num_points)));
  if (cloud.objects.empty()) clutter = spec.num_points;
  if (clutter > spec.num_points) clutter = spec.num_points;
  const std::size_t surface_total = spec.num_points - clutter;

  for (std::size_t i = 0; i < surface_total; ++i) {
    const std::size_t obj_index = i % cloud.objects.size();
    const ObjectRecord& obj = cloud.objects[obj_index];
    Point3 p = sample_surface(obj, rng);
    if (spec.noise_sigma > 0.0) {
      p[0] += spec.noise_sigma * rng.gaussian();
      p[1] += spec.noise_sigma * rng.gaussian();
      p[2] += spec.noise_sigma * rng.gaussian();
    }
    cloud.positions.push_back(p);
    cloud.point_labels.push_back(obj.class_id);
  }

  const double clutter_half = spec.placement_half_width + spec.extent_max;
  for (std::size_t i = 0; i < clutter; ++i) {
    cloud.positions.push_back({rng.uniform(-clutter_half, clutter_half),
                               rng.uniform(-clutter_half, clutter_half),
                               rng.uniform(-clutter_half, clutter_half)});
    cloud.point_labels.push_back(kBackgroundClass);
  }

  cloud.features.assign(cloud.num_points(), 1.0);
  cloud.validate();
  return cloud;
}

std::vector<PointCloud> generate_dataset(const SceneSpec& spec, std::size_t count,
                                         std::uint64_t base_seed) {
  std::vector<PointCloud> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec item = spec;
    item.seed = base_seed + i;
    scenes.push_back(generate_scene(item));
  }
  return scenes;
}

void inject_jitter(std::vector<ObjectRecord>& objects, const JitterSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  for (ObjectRecord& obj : objects) {
    if (spec.fraction == 0.0) {
      obj.weak_label = obj.center;
      continue;
    }
    const double radius = spec.fraction * obj.max_extent();
    Point3 u{0.0, 0.0, 0.0};
    if (spec.distribution == JitterDistribution::uniform_ball) {
      const auto ball = rng.in_unit_ball();
      u = {ball[0] * radius, ball[1] * radius, ball[2] * radius};
    } else {
      const double sigma = radius / 2.0;
      while (true) {
        u = {sigma * rng.gaussian(), sigma * rng.gaussian(),
             sigma * rng.gaussian()};
        const double norm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        if (norm <= radius) break;
      }
    }
    obj.weak_label = {obj.center[0] + u[0], obj.center[1] + u[1],
                      obj.center[2] + u[2]};
  }
}

bool point_inside_object(const Point3& point, const ObjectRecord& object,
                         double slack) {
  for (int c = 0; c < 3; ++c) {
    const auto i = static_cast<std::size_t>(c);
    if (std::abs(point[i] - object.center[i]) > slack * object.extent[i] / 2.0)
      return false;
  }
  return true;
}

}  // namespace mma
