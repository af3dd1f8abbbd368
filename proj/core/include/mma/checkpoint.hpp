#pragma once

#include <cstdint>
#include <string>

#include "mma/network.hpp"

namespace mma {

struct CheckpointMeta {
  long epoch = 0;
  double loss = 0.0;
  std::uint64_t seed = 0;
};

/// Binary checkpoint, format MMACKPT1:
///   magic "MMACKPT1"
///   u64 LE  config text length, then the canonical sorted key=value config
///           (model keys plus meta.epoch / meta.loss / meta.seed)
///   u32 LE  parameter count
///   per parameter: u32 LE name length, name bytes, u32 LE rank,
///                  u64 LE dims[rank], f64 LE values
///   u64 LE  FNV-1a checksum of all prior bytes
/// Round-trips every parameter bit-exactly. Loading rejects unknown magic,
/// checksum mismatches, and shape mismatches against the embedded config,
/// naming the offending parameter.
void save_checkpoint(const Model& model, const CheckpointMeta& meta,
                     const std::string& path);
Model load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace mma
