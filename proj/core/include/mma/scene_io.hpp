#pragma once

#include <string>

#include "mma/geometry.hpp"

namespace mma {

/// Line-oriented scene file format, version 1:
///   MMASCENE 1
///   points N C num_classes
///   x y z f1..fC label          (N lines; label -1 when the cloud is unlabeled)
///   objects K
///   class cx cy cz ex ey ez wx wy wz   (K lines: extent, then weak label)
/// Reals are written with full round-trip precision; fields are
/// space-separated. Malformed files are rejected with a line/field message.
PointCloud load_scene_file(const std::string& path);
void save_scene_file(const PointCloud& cloud, const std::string& path);

/// Serializes/parses the same format through strings (used by tests and the
/// round-trip checks).
std::string scene_to_string(const PointCloud& cloud);
PointCloud scene_from_string(const std::string& text, const std::string& origin = "<string>");

}  // namespace mma
