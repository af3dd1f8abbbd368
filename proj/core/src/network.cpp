#include "mma/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "mma/error.hpp"

namespace mma {

std::string head_name(HeadKind head) {
  switch (head) {
    case HeadKind::classification: return "classification";
    case HeadKind::segmentation: return "segmentation";
    case HeadKind::weak_center: return "weak-center";
  }
  throw Error("head_name: unknown head kind");
}

HeadKind head_from_name(const std::string& name) {
  if (name == "classification") return HeadKind::classification;
  if (name == "segmentation") return HeadKind::segmentation;
  if (name == "weak-center") return HeadKind::weak_center;
  throw Error("unknown head kind '" + name + "'");
}

std::string arch_name(ArchKind arch) {
  return arch == ArchKind::mma ? "mma" : "baseline";
}

ArchKind arch_from_name(const std::string& name) {
  if (name == "mma") return ArchKind::mma;
  if (name == "baseline") return ArchKind::mlp_baseline;
  throw Error("unknown architecture '" + name + "'");
}

void ModelConfig::validate() const {
  if (num_aaa_stages < 3 || num_aaa_stages > 5)
    throw Error("ModelConfig: num_aaa_stages must lie in {3,4,5}");
  if (num_fdc_stages < 2 || num_fdc_stages > 4)
    throw Error("ModelConfig: num_fdc_stages must lie in {2,3,4}");
  if (num_fdc_stages > num_aaa_stages - 1)
    throw Error(
        "ModelConfig: num_fdc_stages must be <= num_aaa_stages - 1 (each "
        "recovery pairs with a cached encoder level)");
  const std::size_t stages = static_cast<std::size_t>(num_aaa_stages);
  if (encoder_widths.size() != stages)
    throw Error("ModelConfig: encoder_widths must have one entry per stage");
  for (int w : encoder_widths)
    if (w < 1) throw Error("ModelConfig: encoder widths must be >= 1");
  if (neighbors.size() != stages)
    throw Error("ModelConfig: neighbors must have one entry per stage");
  for (int k : neighbors)
    if (k < 1) throw Error("ModelConfig: neighborhood sizes must be >= 1");
  if (reduction_ratios.size() != stages)
    throw Error("ModelConfig: reduction_ratios must have one entry per stage");
  for (double r : reduction_ratios)
    if (!(r > 0.0 && r <= 1.0))
      throw Error("ModelConfig: reduction ratios must lie in (0, 1]");
  if (num_classes < 1) throw Error("ModelConfig: num_classes must be >= 1");
  if (in_channels < 1) throw Error("ModelConfig: in_channels must be >= 1");
  if (interp_neighbors < 1)
    throw Error("ModelConfig: interp_neighbors must be >= 1");
}

std::size_t ModelConfig::level_width(std::size_t level) const {
  const std::size_t last = encoder_widths.size() - 1;
  return static_cast<std::size_t>(encoder_widths[std::min(level, last)]);
}

KeyValueMap ModelConfig::to_key_values() const {
  KeyValueMap map;
  map["arch"] = arch_name(arch);
  map["num_aaa_stages"] = std::to_string(num_aaa_stages);
  map["num_fdc_stages"] = std::to_string(num_fdc_stages);
  {
    std::vector<std::string> items;
    for (int w : encoder_widths) items.push_back(std::to_string(w));
    map["encoder_widths"] = join_list(items);
  }
  {
    std::vector<std::string> items;
    for (int k : neighbors) items.push_back(std::to_string(k));
    map["neighbors"] = join_list(items);
  }
  {
    std::vector<std::string> items;
    for (double r : reduction_ratios) items.push_back(format_real_full(r));
    map["reduction_ratios"] = join_list(items);
  }
  map["head"] = head_name(head);
  map["num_classes"] = std::to_string(num_classes);
  map["in_channels"] = std::to_string(in_channels);
  map["interp_neighbors"] = std::to_string(interp_neighbors);
  map["seg_full_density"] = segmentation_full_density ? "1" : "0";
  map["seed"] = std::to_string(seed);
  return map;
}

std::string ModelConfig::to_key_value_text() const {
  return serialize_key_values(to_key_values());
}

ModelConfig ModelConfig::from_key_values(const KeyValueMap& map) {
  ModelConfig cfg;
  cfg.arch = arch_from_name(get_string(map, "arch", "mma"));
  cfg.num_aaa_stages = static_cast<int>(get_int(map, "num_aaa_stages", 4));
  cfg.num_fdc_stages = static_cast<int>(get_int(map, "num_fdc_stages", 3));
  if (map.count("encoder_widths")) {
    cfg.encoder_widths.clear();
    for (long w : get_int_list(map, "encoder_widths"))
      cfg.encoder_widths.push_back(static_cast<int>(w));
  }
  if (map.count("neighbors")) {
    cfg.neighbors.clear();
    for (long k : get_int_list(map, "neighbors"))
      cfg.neighbors.push_back(static_cast<int>(k));
  } else {
    cfg.neighbors.assign(static_cast<std::size_t>(cfg.num_aaa_stages), 16);
  }
  if (map.count("reduction_ratios")) {
    cfg.reduction_ratios = get_real_list(map, "reduction_ratios");
  } else {
    cfg.reduction_ratios.assign(static_cast<std::size_t>(cfg.num_aaa_stages), 0.5);
  }
  cfg.head = head_from_name(get_string(map, "head", "classification"));
  cfg.num_classes = static_cast<int>(get_int(map, "num_classes", 3));
  cfg.in_channels = static_cast<int>(get_int(map, "in_channels", 1));
  cfg.interp_neighbors = static_cast<int>(get_int(map, "interp_neighbors", 3));
  cfg.segmentation_full_density = get_int(map, "seg_full_density", 0) != 0;
  cfg.seed = static_cast<std::uint64_t>(get_int(map, "seed", 0));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Construction

Model Model::build(const ModelConfig& cfg) {
  cfg.validate();
  Model model;
  model.config_ = cfg;
  Rng rng(cfg.seed);

  const std::size_t stages = static_cast<std::size_t>(cfg.num_aaa_stages);
  const std::size_t recoveries = static_cast<std::size_t>(cfg.num_fdc_stages);

  model.stem_ = make_affine(static_cast<std::size_t>(cfg.in_channels),
                            cfg.level_width(0), true, rng);

  for (std::size_t i = 1; i <= stages; ++i) {
    const std::size_t in = cfg.level_width(i - 1);
    const std::size_t out = cfg.level_width(i);
    EncoderStageParams stage;
    if (cfg.arch == ArchKind::mma) {
      stage.aaa = make_aaa(in, out, rng);
      stage.ape = make_ape(out, rng);
    } else {
      stage.feat_proj = make_affine(in, out, true, rng);
      stage.pos_proj = make_affine(3, out, true, rng);
      stage.second = make_affine(out, out, true, rng);
    }
    model.encoder_.push_back(std::move(stage));
  }

  for (std::size_t t = 0; t < recoveries; ++t) {
    const std::size_t source_level = stages - t;       // interpolate from here
    const std::size_t target_level = stages - t - 1;   // to here
    DecoderStageParams stage;
    stage.lift = make_affine(cfg.level_width(source_level),
                             cfg.level_width(target_level), true, rng);
    if (cfg.arch == ArchKind::mma) {
      stage.equalize = make_affine(cfg.level_width(target_level),
                                   cfg.level_width(target_level), true, rng);
      stage.fdc = make_fdc(cfg.level_width(target_level), rng);
    }
    model.decoder_.push_back(std::move(stage));
  }

  const std::size_t head_in = cfg.level_width(stages - recoveries);
  model.head_.hidden = make_affine(head_in, head_in, true, rng);
  switch (cfg.head) {
    case HeadKind::classification:
    case HeadKind::segmentation:
      model.head_.output = make_affine(
          head_in, static_cast<std::size_t>(cfg.num_classes), true, rng);
      break;
    case HeadKind::weak_center:
      model.head_.objectness = make_affine(head_in, 1, true, rng);
      model.head_.offset = make_affine(head_in, 3, true, rng);
      break;
  }

  model.register_params();
  return model;
}

Model Model::build(ModelConfig cfg, std::uint64_t seed_override) {
  cfg.seed = seed_override;
  return build(cfg);
}

namespace {

void register_affine(std::vector<std::pair<std::string, Tensor>>& out,
                     const std::string& name, const AffineParams& params) {
  if (!params.weight.defined()) return;
  out.emplace_back(name + ".weight", params.weight);
  if (params.bias.defined()) out.emplace_back(name + ".bias", params.bias);
}

}  // namespace

void Model::register_params() {
  parameters_.clear();
  register_affine(parameters_, "stem", stem_);
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    const EncoderStageParams& stage = encoder_[i];
    if (config_.arch == ArchKind::mma) {
      register_affine(parameters_, prefix + ".ape.hidden", stage.ape.hidden);
      register_affine(parameters_, prefix + ".ape.output", stage.ape.output);
      register_affine(parameters_, prefix + ".phi", stage.aaa.phi);
      register_affine(parameters_, prefix + ".psi", stage.aaa.psi);
      register_affine(parameters_, prefix + ".alpha", stage.aaa.alpha);
      register_affine(parameters_, prefix + ".gamma_hidden", stage.aaa.gamma_hidden);
      register_affine(parameters_, prefix + ".gamma_output", stage.aaa.gamma_output);
      register_affine(parameters_, prefix + ".parallel", stage.aaa.parallel_mlp);
    } else {
      register_affine(parameters_, prefix + ".feat", stage.feat_proj);
      register_affine(parameters_, prefix + ".pos", stage.pos_proj);
      register_affine(parameters_, prefix + ".second", stage.second);
    }
  }
  for (std::size_t t = 0; t < decoder_.size(); ++t) {
    const std::string prefix = "dec" + std::to_string(t);
    const DecoderStageParams& stage = decoder_[t];
    register_affine(parameters_, prefix + ".lift", stage.lift);
    if (config_.arch == ArchKind::mma) {
      register_affine(parameters_, prefix + ".equalize", stage.equalize);
      register_affine(parameters_, prefix + ".fdc.query", stage.fdc.query_proj);
      register_affine(parameters_, prefix + ".fdc.key", stage.fdc.key_proj);
      register_affine(parameters_, prefix + ".fdc.output", stage.fdc.output_proj);
    }
  }
  register_affine(parameters_, "head.hidden", head_.hidden);
  register_affine(parameters_, "head.output", head_.output);
  register_affine(parameters_, "head.objectness", head_.objectness);
  register_affine(parameters_, "head.offset", head_.offset);
}

std::size_t Model::parameter_count() const {
  std::size_t count = 0;
  for (const auto& [name, tensor] : parameters_) count += tensor.numel();
  return count;
}

void Model::zero_grad() {
  for (auto& [name, tensor] : parameters_) tensor.zero_grad();
}

void Model::load_parameter_values(const Model& other) {
  if (parameters_.size() != other.parameters_.size())
    throw Error("load_parameter_values: parameter lists differ");
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    if (parameters_[i].first != other.parameters_[i].first ||
        parameters_[i].second.shape() != other.parameters_[i].second.shape())
      throw Error("load_parameter_values: parameter mismatch at '" +
                  parameters_[i].first + "'");
    parameters_[i].second.mutable_values() = other.parameters_[i].second.values();
  }
}

// ---------------------------------------------------------------------------
// Forward

namespace {

/// Baseline encoder stage: grouped features plus relative-position encoding
/// through a shared two-layer MLP, max-pooled over the neighborhood.
AAAStageResult baseline_stage(const AAAStageConfig& cfg,
                              const EncoderStageParams& params,
                              const Tensor& features,
                              const std::vector<Point3>& positions) {
  const std::size_t n = positions.size();
  std::size_t m = static_cast<std::size_t>(
      std::ceil(static_cast<double>(n) * cfg.reduction_ratio));
  if (m < 1) m = 1;
  if (m > n) m = n;
  if (cfg.neighbors > n)
    throw Error("baseline_stage: k exceeds point count");

  AAAStageResult result;
  result.indices = farthest_point_sample(positions, m, 0);
  result.positions.reserve(m);
  for (std::size_t idx : result.indices) result.positions.push_back(positions[idx]);
  const NeighborhoodIndex index =
      knn_query(positions, result.positions, cfg.neighbors);

  Tensor grouped = group_features(features, index);  // (Q, k, C)
  Tensor rel = relative_positions(positions, result.indices, index);
  Tensor h = relu(add(affine(params.feat_proj, grouped),
                      affine(params.pos_proj, rel)));
  Tensor h2 = relu(affine(params.second, h));
  result.features = reduce_max_axis(h2, 1);  // (Q, C')
  return result;
}

Tensor positions_tensor(const std::vector<Point3>& positions) {
  std::vector<double> values(positions.size() * 3);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    values[i * 3 + 0] = positions[i][0];
    values[i * 3 + 1] = positions[i][1];
    values[i * 3 + 2] = positions[i][2];
  }
  return Tensor::from_values({positions.size(), 3}, std::move(values));
}

}  // namespace

Tensor Model::run_encoder(const PointCloud& cloud, StageCache& cache) const {
  const std::size_t stages = static_cast<std::size_t>(config_.num_aaa_stages);

  Tensor features = relu(affine(stem_, cloud.feature_tensor()));
  std::vector<Point3> positions = cloud.positions;
  std::vector<std::size_t> input_indices(cloud.num_points());
  for (std::size_t i = 0; i < input_indices.size(); ++i) input_indices[i] = i;
  cache.levels.push_back({positions, features, input_indices});

  for (std::size_t i = 0; i < stages; ++i) {
    AAAStageConfig stage_cfg;
    stage_cfg.in_channels = config_.level_width(i);
    stage_cfg.out_channels = config_.level_width(i + 1);
    stage_cfg.neighbors = static_cast<std::size_t>(config_.neighbors[i]);
    stage_cfg.reduction_ratio = config_.reduction_ratios[i];

    AAAStageResult result =
        config_.arch == ArchKind::mma
            ? aaa_stage(stage_cfg, encoder_[i].aaa, encoder_[i].ape, features,
                        positions)
            : baseline_stage(stage_cfg, encoder_[i], features, positions);

    if (result.positions.size() >= cache.levels.back().positions.size())
      throw Error("Model::forward: encoder levels must strictly decrease in "
                  "point count (reduce the reduction ratio)");

    std::vector<std::size_t> level_indices(result.indices.size());
    const auto& previous = cache.levels.back().input_indices;
    for (std::size_t j = 0; j < result.indices.size(); ++j)
      level_indices[j] = previous[result.indices[j]];

    positions = result.positions;
    features = result.features;
    cache.levels.push_back({positions, features, std::move(level_indices)});
  }
  return features;
}

ForwardResult Model::forward(const PointCloud& cloud) const {
  cloud.validate();
  const std::size_t stages = static_cast<std::size_t>(config_.num_aaa_stages);
  const std::size_t recoveries = static_cast<std::size_t>(config_.num_fdc_stages);
  const std::size_t min_points = std::size_t{1} << stages;
  if (cloud.num_points() < min_points)
    throw Error("Model::forward: need at least " + std::to_string(min_points) +
                " points for " + std::to_string(stages) + " reductions, got " +
                std::to_string(cloud.num_points()));
  if (cloud.feature_dim != static_cast<std::size_t>(config_.in_channels))
    throw Error("Model::forward: cloud feature dim " +
                std::to_string(cloud.feature_dim) + " does not match config " +
                std::to_string(config_.in_channels));

  StageCache cache;
  Tensor features = run_encoder(cloud, cache);
  std::vector<Point3> positions = cache.levels.back().positions;

  for (std::size_t t = 0; t < recoveries; ++t) {
    const std::size_t target_level = stages - t - 1;
    const StageCache::Level& target = cache.levels[target_level];

    // k cannot exceed the coarse point count at the deepest levels
    const std::size_t interp_k = std::min<std::size_t>(
        static_cast<std::size_t>(config_.interp_neighbors), positions.size());
    Tensor interpolated =
        interpolate_features(positions, features, target.positions, interp_k);
    Tensor lifted = relu(affine(decoder_[t].lift, interpolated));

    // Each recovery must pair with the cached level of equal point count.
    if (lifted.shape()[0] != target.features.shape()[0])
      throw Error("Model::forward: decoder/cache density mismatch at level " +
                  std::to_string(target_level));

    if (config_.arch == ArchKind::mma) {
      Tensor skip = affine(decoder_[t].equalize, target.features);
      features = fdc_forward(decoder_[t].fdc, lifted, skip);
    } else {
      features = lifted;
    }
    positions = target.positions;
  }

  ForwardResult out;
  out.head = config_.head;
  out.output_positions = positions;
  out.output_indices = cache.levels[stages - recoveries].input_indices;

  switch (config_.head) {
    case HeadKind::classification: {
      Tensor pooled = reduce_max_axis(features, 0);  // (C,)
      Tensor hidden = relu(affine(head_.hidden, pooled));
      out.class_logits = affine(head_.output, hidden);
      break;
    }
    case HeadKind::segmentation: {
      Tensor seg_features = features;
      if (config_.segmentation_full_density) {
        seg_features = interpolate_features(
            positions, features, cloud.positions,
            std::min<std::size_t>(
                static_cast<std::size_t>(config_.interp_neighbors),
                positions.size()));
        out.output_positions = cloud.positions;
        out.output_indices = cache.levels[0].input_indices;
      }
      Tensor hidden = relu(affine(head_.hidden, seg_features));
      out.seg_logits = affine(head_.output, hidden);
      break;
    }
    case HeadKind::weak_center: {
      const std::size_t n_out = positions.size();
      Tensor hidden = relu(affine(head_.hidden, features));
      out.objectness_logits = reshape(affine(head_.objectness, hidden), {n_out});
      out.offsets = affine(head_.offset, hidden);  // (N, 3)
      Tensor weights = sigmoid(out.objectness_logits);
      Tensor normalized = div(weights, reduce_sum_all(weights));
      Tensor votes = add(positions_tensor(positions), out.offsets);
      out.predicted_center =
          reshape(matmul(reshape(normalized, {1, n_out}), votes), {3});
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baseline budget matching

ModelConfig matched_baseline_config(const ModelConfig& reference) {
  ModelConfig base = reference;
  base.arch = ArchKind::mlp_baseline;

  const std::size_t target = Model::build(reference).parameter_count();
  double best_mult = 1.0;
  std::size_t best_diff = static_cast<std::size_t>(-1);
  for (int step = 100; step <= 400; step += 5) {
    const double mult = step / 100.0;
    ModelConfig candidate = base;
    for (std::size_t i = 0; i < candidate.encoder_widths.size(); ++i) {
      candidate.encoder_widths[i] = std::max(
          1, static_cast<int>(std::lround(reference.encoder_widths[i] * mult)));
    }
    const std::size_t count = Model::build(candidate).parameter_count();
    const std::size_t diff =
        count > target ? count - target : target - count;
    if (diff < best_diff) {
      best_diff = diff;
      best_mult = mult;
    }
  }
  for (std::size_t i = 0; i < base.encoder_widths.size(); ++i) {
    base.encoder_widths[i] = std::max(
        1, static_cast<int>(std::lround(reference.encoder_widths[i] * best_mult)));
  }
  return base;
}

}  // namespace mma
