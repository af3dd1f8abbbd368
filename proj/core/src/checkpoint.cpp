#include "mma/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "mma/config.hpp"
#include "mma/error.hpp"

namespace mma {

namespace {

constexpr char kMagic[8] = {'M', 'M', 'A', 'C', 'K', 'P', 'T', '1'};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct ByteReader {
  const std::string& bytes;
  std::size_t pos = 0;
  std::string origin;

  [[noreturn]] void fail(const std::string& message) const {
    throw Error(origin + ": " + message);
  }

  void expect(std::size_t n, const char* what) const {
    if (pos + n > bytes.size())
      fail(std::string("truncated checkpoint while reading ") + what);
  }

  std::uint32_t u32(const char* what) {
    expect(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }

  std::uint64_t u64(const char* what) {
    expect(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }

  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  std::string raw(std::size_t n, const char* what) {
    expect(n, what);
    std::string out = bytes.substr(pos, n);
    pos += n;
    return out;
  }
};

}  // namespace

void save_checkpoint(const Model& model, const CheckpointMeta& meta,
                     const std::string& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));

  KeyValueMap config = model.config().to_key_values();
  config["meta.epoch"] = std::to_string(meta.epoch);
  config["meta.loss"] = format_real_full(meta.loss);
  config["meta.seed"] = std::to_string(meta.seed);
  const std::string config_text = serialize_key_values(config);
  put_u64(out, config_text.size());
  out += config_text;

  put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, tensor] : model.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const auto& shape = tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put_u64(out, d);
    for (double v : tensor.values()) put_f64(out, v);
  }

  put_u64(out, fnv1a(out));

  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error("save_checkpoint: cannot open '" + path + "' for writing");
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error("save_checkpoint: failed writing '" + path + "'");
}

Model load_checkpoint(const std::string& path, CheckpointMeta* meta) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error("load_checkpoint: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << file.rdbuf();
  const std::string bytes = buffer.str();

  ByteReader reader{bytes, 0, path};
  if (bytes.size() < sizeof(kMagic) + 8)
    reader.fail("file too small to be a checkpoint");
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    reader.fail("unknown magic; not an MMACKPT1 checkpoint");
  reader.pos = sizeof(kMagic);

  // Verify the trailing checksum before trusting any field.
  const std::string body = bytes.substr(0, bytes.size() - 8);
  ByteReader tail{bytes, bytes.size() - 8, path};
  const std::uint64_t stored = tail.u64("checksum");
  if (fnv1a(body) != stored)
    reader.fail("checksum mismatch; checkpoint is corrupt or truncated");

  const std::uint64_t config_len = reader.u64("config length");
  const std::string config_text =
      reader.raw(static_cast<std::size_t>(config_len), "config block");
  const KeyValueMap config_map = parse_key_values(config_text, path);
  const ModelConfig cfg = ModelConfig::from_key_values(config_map);
  if (meta) {
    meta->epoch = get_int(config_map, "meta.epoch", 0);
    meta->loss = get_real(config_map, "meta.loss", 0.0);
    meta->seed = static_cast<std::uint64_t>(get_int(config_map, "meta.seed", 0));
  }

  Model model = Model::build(cfg);
  std::map<std::string, Tensor> by_name;
  for (const auto& [name, tensor] : model.parameters()) by_name.emplace(name, tensor);

  const std::uint32_t count = reader.u32("parameter count");
  if (count != by_name.size())
    reader.fail("checkpoint stores " + std::to_string(count) +
                " parameters but the config expects " +
                std::to_string(by_name.size()));

  std::map<std::string, bool> seen;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = reader.u32("parameter name length");
    const std::string name = reader.raw(name_len, "parameter name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      reader.fail("unknown parameter '" + name + "' for this config");
    if (!seen.emplace(name, true).second)
      reader.fail("parameter '" + name + "' appears twice");

    const std::uint32_t rank = reader.u32("parameter rank");
    std::vector<std::size_t> dims(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      dims[d] = static_cast<std::size_t>(reader.u64("parameter dim"));
      numel *= dims[d];
    }
    if (dims != it->second.shape())
      reader.fail("shape mismatch for parameter '" + name + "'");

    std::vector<double>& dst = it->second.mutable_values();
    for (std::size_t i = 0; i < numel; ++i) dst[i] = reader.f64("parameter value");
  }

  if (reader.pos != bytes.size() - 8)
    reader.fail("trailing bytes after parameter records");
  return model;
}

}  // namespace mma
