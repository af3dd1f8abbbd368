#include "mma/random.hpp"

#include <cmath>
#include <limits>

#include "mma/error.hpp"

namespace mma {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below: n must be positive");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::array<double, 3> Rng::on_unit_sphere() {
  while (true) {
    const double x = gaussian();
    const double y = gaussian();
    const double z = gaussian();
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (norm > 1e-12) return {x / norm, y / norm, z / norm};
  }
}

std::array<double, 3> Rng::in_unit_ball() {
  const auto dir = on_unit_sphere();
  const double radius = std::cbrt(uniform());
  return {dir[0] * radius, dir[1] * radius, dir[2] * radius};
}

}  // namespace mma
