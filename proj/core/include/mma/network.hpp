#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mma/attention.hpp"
#include "mma/config.hpp"
#include "mma/disparity.hpp"
#include "mma/geometry.hpp"
#include "mma/tensor.hpp"

namespace mma {

enum class HeadKind { classification, segmentation, weak_center };
enum class ArchKind { mma, mlp_baseline };

std::string head_name(HeadKind head);
HeadKind head_from_name(const std::string& name);
std::string arch_name(ArchKind arch);
ArchKind arch_from_name(const std::string& name);

/// Architecture hyperparameters. `encoder_widths[0]` is the stem (full
/// density) width; stage i then maps the previous level width to
/// encoder_widths[min(i, last)], so the default {32,64,128,256} yields level
/// widths 32 -> 64 -> 128 -> 256 -> 256 across four reductions. The decoder
/// mirrors the encoder level widths.
struct ModelConfig {
  ArchKind arch = ArchKind::mma;
  int num_aaa_stages = 4;       // density reductions, in {3,4,5}
  int num_fdc_stages = 3;       // density recoveries, in {2,3,4}
  std::vector<int> encoder_widths = {32, 64, 128, 256};
  std::vector<int> neighbors = {16, 16, 16, 16};
  std::vector<double> reduction_ratios = {0.5, 0.5, 0.5, 0.5};
  HeadKind head = HeadKind::classification;
  int num_classes = 3;
  int in_channels = 1;
  int interp_neighbors = 3;
  bool segmentation_full_density = false;
  std::uint64_t seed = 0;

  void validate() const;  // throws on the first violated invariant
  std::size_t level_width(std::size_t level) const;
  KeyValueMap to_key_values() const;
  std::string to_key_value_text() const;
  /// Ignores keys that do not belong to the model config (training keys,
  /// checkpoint metadata).
  static ModelConfig from_key_values(const KeyValueMap& map);
};

/// Encoder features and positions saved per density level for the
/// same-density disparity skip connections.
struct StageCache {
  struct Level {
    std::vector<Point3> positions;
    Tensor features;
    std::vector<std::size_t> input_indices;  // map back to the input cloud
  };
  std::vector<Level> levels;  // strictly decreasing point counts
};

struct ForwardResult {
  HeadKind head = HeadKind::classification;
  Tensor class_logits;       // classification: (num_classes,)
  Tensor seg_logits;         // segmentation: (N_out, num_classes)
  Tensor objectness_logits;  // weak-center: (N_out,)
  Tensor offsets;            // weak-center: (N_out, 3)
  Tensor predicted_center;   // weak-center: (3,)
  std::vector<Point3> output_positions;
  std::vector<std::size_t> output_indices;  // into the input cloud (empty for
                                            // full-density segmentation output)
};

struct EncoderStageParams {
  AAAParams aaa;  // mma arch
  APEParams ape;
  AffineParams feat_proj;  // baseline arch
  AffineParams pos_proj;
  AffineParams second;
};

struct DecoderStageParams {
  AffineParams lift;      // previous decoder width -> level width
  AffineParams equalize;  // cached width -> level width (mma arch only)
  FDCParams fdc;          // mma arch only
};

struct HeadParams {
  AffineParams hidden;
  AffineParams output;      // classification / segmentation logits
  AffineParams objectness;  // weak-center: (.., 1) logits
  AffineParams offset;      // weak-center: (.., 3) center offsets
};

class Model {
 public:
  /// Builds a network with parameters drawn from cfg.seed.
  static Model build(const ModelConfig& cfg);
  static Model build(ModelConfig cfg, std::uint64_t seed_override);

  const ModelConfig& config() const { return config_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const {
    return parameters_;
  }
  std::size_t parameter_count() const;
  void zero_grad();

  /// Runs encoder, decoder, and the configured head. Requires
  /// N >= 2^num_aaa_stages so every reduction keeps at least one point.
  ForwardResult forward(const PointCloud& cloud) const;

  /// Copies parameter values from another model with identical config.
  void load_parameter_values(const Model& other);

 private:
  friend struct CheckpointAccess;
  Model() = default;
  void register_params();
  Tensor run_encoder(const PointCloud& cloud, StageCache& cache) const;

  ModelConfig config_;
  AffineParams stem_;
  std::vector<EncoderStageParams> encoder_;
  std::vector<DecoderStageParams> decoder_;
  HeadParams head_;
  std::vector<std::pair<std::string, Tensor>> parameters_;
};

/// Derives the matched-budget MLP baseline for a given attention config:
/// same depth, widths scaled so the total parameter count lands within 10%
/// of the reference model's.
ModelConfig matched_baseline_config(const ModelConfig& reference);

}  // namespace mma
