#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mma/network.hpp"
#include "mma/scene_gen.hpp"
#include "mma/training.hpp"

namespace mma {

/// Options for the jitter-robustness sweep. Every (level, seed) cell trains
/// both the attention model and the matched-budget MLP baseline on the same
/// scenes; only the weak-label jitter differs across levels. Per-seed scene
/// sets are identical across levels so the jitter effect is isolated.
struct JitterSweepOptions {
  std::vector<double> levels = {0.0, 0.1, 0.2, 0.3, 0.5};  // sorted, includes 0
  int num_seeds = 3;
  JitterDistribution distribution = JitterDistribution::uniform_ball;
  SceneSpec scene_template;  // weak-center scenes (single object)
  std::size_t train_scenes = 48;
  std::size_t test_scenes = 16;
  ModelConfig model_template;  // weak-center head, arch = mma
  TrainOptions train_options;
  std::uint64_t data_seed = 90000;

  void validate() const;
};

struct JitterSweepRow {
  double level = 0.0;
  std::uint64_t seed = 0;
  std::string variant;  // "mma" or "baseline"
  double center_error = 0.0;
  double accuracy = 0.0;  // objectness accuracy
};

/// Runs the sweep; rows come back sorted by (level, seed, variant).
std::vector<JitterSweepRow> jitter_sweep(const JitterSweepOptions& options);

/// Header: jitter,seed,variant,center_error,accuracy. LF line endings.
void write_jitter_csv(const std::vector<JitterSweepRow>& rows, std::ostream& out);

/// Median of each (level, variant) group's center errors across seeds.
std::vector<double> median_center_errors(const std::vector<JitterSweepRow>& rows,
                                         const std::vector<double>& levels,
                                         const std::string& variant);

struct AblationOptions {
  std::vector<int> aaa_counts = {3, 4, 5};
  std::vector<int> fdc_counts = {2, 3, 4};
  int num_seeds = 1;
  SceneSpec scene_template;  // classification scenes
  std::size_t train_scenes = 48;
  std::size_t test_scenes = 16;
  ModelConfig model_template;  // widths sized for the largest depth
  TrainOptions train_options;
  std::uint64_t data_seed = 70000;
};

struct AblationCell {
  int aaa = 0;
  int fdc = 0;
  bool valid = false;  // false when fdc > aaa - 1 (skipped)
  double metric = 0.0;  // mean test accuracy over seeds
};

/// Full grid (row-major over fdc x aaa); invalid pairs are recorded as
/// skipped, not trained.
std::vector<AblationCell> ablation_grid(const AblationOptions& options);

/// Table in the module-count schema: one row per FDC count, one column per
/// AAA count, "skipped" in invalid cells.
void write_ablation_csv(const std::vector<AblationCell>& cells,
                        const AblationOptions& options, std::ostream& out);

}  // namespace mma
