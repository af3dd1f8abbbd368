#include "mma/scene_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mma/error.hpp"

namespace mma {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Splits one line into whitespace-separated fields.
std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t begin = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > begin) out.push_back(line.substr(begin, i - begin));
  }
  return out;
}

struct LineReader {
  std::istringstream stream;
  std::string origin;
  std::size_t line_no = 0;

  LineReader(const std::string& text, std::string origin_)
      : stream(text), origin(std::move(origin_)) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(origin + ":" + std::to_string(line_no) + ": " + message);
  }

  std::string next_line() {
    std::string line;
    if (!std::getline(stream, line)) fail("unexpected end of file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }
};

double parse_real(const LineReader& reader, std::string_view field,
                  const char* what) {
  double value = 0.0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    reader.fail(std::string("cannot parse ") + what + " from '" +
                std::string(field) + "'");
  if (!std::isfinite(value))
    reader.fail(std::string(what) + " is not finite: '" + std::string(field) + "'");
  return value;
}

long parse_int(const LineReader& reader, std::string_view field, const char* what) {
  long value = 0;
  const auto* begin = field.data();
  const auto* end = field.data() + field.size();
  auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    reader.fail(std::string("cannot parse ") + what + " from '" +
                std::string(field) + "'");
  return value;
}

}  // namespace

std::string scene_to_string(const PointCloud& cloud) {
  cloud.validate();
  std::string out;
  out += "MMASCENE 1\n";
  out += "points " + std::to_string(cloud.num_points()) + " " +
         std::to_string(cloud.feature_dim) + " " +
         std::to_string(cloud.num_classes) + "\n";
  const bool labeled = cloud.has_labels();
  for (std::size_t i = 0; i < cloud.num_points(); ++i) {
    const auto& p = cloud.positions[i];
    out += format_real(p[0]) + " " + format_real(p[1]) + " " + format_real(p[2]);
    for (std::size_t c = 0; c < cloud.feature_dim; ++c) {
      out += " " + format_real(cloud.features[i * cloud.feature_dim + c]);
    }
    out += " " + std::to_string(labeled ? cloud.point_labels[i] : -1) + "\n";
  }
  out += "objects " + std::to_string(cloud.objects.size()) + "\n";
  for (const auto& obj : cloud.objects) {
    out += std::to_string(obj.class_id);
    for (double v : obj.center) out += " " + format_real(v);
    for (double v : obj.extent) out += " " + format_real(v);
    for (double v : obj.weak_label) out += " " + format_real(v);
    out += "\n";
  }
  return out;
}

PointCloud scene_from_string(const std::string& text, const std::string& origin) {
  LineReader reader(text, origin);

  {
    const std::string header = reader.next_line();
    const auto fields = split_fields(header);
    if (fields.size() != 2 || fields[0] != "MMASCENE")
      reader.fail("expected header 'MMASCENE <version>'");
    const long version = parse_int(reader, fields[1], "format version");
    if (version != 1)
      reader.fail("unsupported scene format version " + std::to_string(version));
  }

  PointCloud cloud;
  std::size_t num_points = 0;
  {
    const std::string line = reader.next_line();
    const auto fields = split_fields(line);
    if (fields.size() != 4 || fields[0] != "points")
      reader.fail("expected 'points N C num_classes'");
    const long n = parse_int(reader, fields[1], "point count");
    const long c = parse_int(reader, fields[2], "feature dimension");
    const long k = parse_int(reader, fields[3], "class count");
    if (n < 1) reader.fail("point count must be >= 1");
    if (c < 0) reader.fail("feature dimension must be >= 0");
    if (k < 0) reader.fail("class count must be >= 0");
    num_points = static_cast<std::size_t>(n);
    cloud.feature_dim = static_cast<std::size_t>(c);
    cloud.num_classes = static_cast<int>(k);
  }

  cloud.positions.reserve(num_points);
  cloud.features.reserve(num_points * cloud.feature_dim);
  std::vector<int> labels;
  labels.reserve(num_points);
  bool any_label = false;
  for (std::size_t i = 0; i < num_points; ++i) {
    const std::string line = reader.next_line();
    const auto fields = split_fields(line);
    const std::size_t expected = 3 + cloud.feature_dim + 1;
    if (fields.size() != expected)
      reader.fail("expected " + std::to_string(expected) + " fields, found " +
                  std::to_string(fields.size()));
    Point3 p;
    p[0] = parse_real(reader, fields[0], "position x");
    p[1] = parse_real(reader, fields[1], "position y");
    p[2] = parse_real(reader, fields[2], "position z");
    cloud.positions.push_back(p);
    for (std::size_t c = 0; c < cloud.feature_dim; ++c)
      cloud.features.push_back(parse_real(reader, fields[3 + c], "feature"));
    const long label = parse_int(reader, fields[3 + cloud.feature_dim], "label");
    if (label != -1) {
      if (label < 0 || label >= cloud.num_classes)
        reader.fail("label " + std::to_string(label) + " out of range [0," +
                    std::to_string(cloud.num_classes) + ")");
      any_label = true;
    }
    labels.push_back(static_cast<int>(label));
  }
  if (any_label) {
    for (int l : labels)
      if (l == -1)
        throw Error(origin + ": labels must be all present or all -1");
    cloud.point_labels = std::move(labels);
  }

  std::size_t num_objects = 0;
  {
    const std::string line = reader.next_line();
    const auto fields = split_fields(line);
    if (fields.size() != 2 || fields[0] != "objects")
      reader.fail("expected 'objects K'");
    const long k = parse_int(reader, fields[1], "object count");
    if (k < 0) reader.fail("object count must be >= 0");
    num_objects = static_cast<std::size_t>(k);
  }
  for (std::size_t i = 0; i < num_objects; ++i) {
    const std::string line = reader.next_line();
    const auto fields = split_fields(line);
    if (fields.size() != 10)
      reader.fail("expected 10 fields 'class cx cy cz ex ey ez wx wy wz'");
    ObjectRecord obj;
    obj.class_id = static_cast<int>(parse_int(reader, fields[0], "object class"));
    for (int c = 0; c < 3; ++c)
      obj.center[static_cast<std::size_t>(c)] =
          parse_real(reader, fields[static_cast<std::size_t>(1 + c)], "object center");
    for (int c = 0; c < 3; ++c) {
      const double e =
          parse_real(reader, fields[static_cast<std::size_t>(4 + c)], "object extent");
      if (!(e > 0.0)) reader.fail("object extent components must be positive");
      obj.extent[static_cast<std::size_t>(c)] = e;
    }
    for (int c = 0; c < 3; ++c)
      obj.weak_label[static_cast<std::size_t>(c)] =
          parse_real(reader, fields[static_cast<std::size_t>(7 + c)], "weak label");
    cloud.objects.push_back(obj);
  }

  cloud.validate();
  return cloud;
}

PointCloud load_scene_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_scene_file: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return scene_from_string(buffer.str(), path);
}

void save_scene_file(const PointCloud& cloud, const std::string& path) {
  const std::string text = scene_to_string(cloud);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_scene_file: cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error("save_scene_file: failed writing '" + path + "'");
}

}  // namespace mma
