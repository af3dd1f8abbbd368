#include "mma/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "mma/config.hpp"
#include "mma/error.hpp"

namespace mma {

void JitterSweepOptions::validate() const {
  if (levels.empty()) throw Error("jitter_sweep: levels must not be empty");
  if (!std::is_sorted(levels.begin(), levels.end()))
    throw Error("jitter_sweep: levels must be sorted ascending");
  if (levels.front() != 0.0)
    throw Error("jitter_sweep: levels must include 0 as the first entry");
  for (double l : levels)
    if (!(l >= 0.0 && l <= 1.0))
      throw Error("jitter_sweep: levels must lie in [0, 1]");
  if (num_seeds < 1) throw Error("jitter_sweep: num_seeds must be >= 1");
  if (train_scenes < 1 || test_scenes < 1)
    throw Error("jitter_sweep: need at least one train and one test scene");
  if (model_template.head != HeadKind::weak_center)
    throw Error("jitter_sweep: model head must be weak-center");
}

namespace {

struct SweepDatasets {
  std::vector<PointCloud> train;
  std::vector<PointCloud> test;
};

SweepDatasets make_datasets(const JitterSweepOptions& options,
                            std::size_t seed_index) {
  SweepDatasets data;
  SceneSpec spec = options.scene_template;
  const std::uint64_t base =
      options.data_seed + 1000003ULL * static_cast<std::uint64_t>(seed_index);
  data.train = generate_dataset(spec, options.train_scenes, base);
  data.test = generate_dataset(spec, options.test_scenes, base + 500000ULL);
  return data;
}

}  // namespace

std::vector<JitterSweepRow> jitter_sweep(const JitterSweepOptions& options) {
  options.validate();
  std::vector<JitterSweepRow> rows;

  for (std::size_t level_idx = 0; level_idx < options.levels.size(); ++level_idx) {
    const double level = options.levels[level_idx];
    for (int seed_idx = 0; seed_idx < options.num_seeds; ++seed_idx) {
      // Same scenes for every level and both variants; only jitter varies.
      SweepDatasets data = make_datasets(options, static_cast<std::size_t>(seed_idx));

      JitterSpec jitter;
      jitter.fraction = level;
      jitter.distribution = options.distribution;
      jitter.seed = options.data_seed + 7777ULL +
                    131ULL * static_cast<std::uint64_t>(level_idx) +
                    static_cast<std::uint64_t>(seed_idx);
      for (PointCloud& scene : data.train) inject_jitter(scene.objects, jitter);

      for (const bool baseline : {false, true}) {
        ModelConfig cfg = baseline ? matched_baseline_config(options.model_template)
                                   : options.model_template;
        Model model = Model::build(cfg, static_cast<std::uint64_t>(seed_idx));
        TrainOptions train_opts = options.train_options;
        train_opts.seed = static_cast<std::uint64_t>(seed_idx);
        train(model, data.train, train_opts);
        const Metrics metrics = evaluate(model, data.test);

        JitterSweepRow row;
        row.level = level;
        row.seed = static_cast<std::uint64_t>(seed_idx);
        row.variant = baseline ? "baseline" : "mma";
        row.center_error = metrics.center_error;
        row.accuracy = metrics.objectness_accuracy;
        rows.push_back(std::move(row));
      }
    }
  }

  std::sort(rows.begin(), rows.end(),
            [](const JitterSweepRow& a, const JitterSweepRow& b) {
              if (a.level != b.level) return a.level < b.level;
              if (a.seed != b.seed) return a.seed < b.seed;
              return a.variant < b.variant;
            });
  return rows;
}

void write_jitter_csv(const std::vector<JitterSweepRow>& rows, std::ostream& out) {
  out << "jitter,seed,variant,center_error,accuracy\n";
  for (const JitterSweepRow& row : rows) {
    out << format_real_full(row.level) << "," << row.seed << "," << row.variant
        << "," << format_real_full(row.center_error) << ","
        << format_real_full(row.accuracy) << "\n";
  }
}

std::vector<double> median_center_errors(const std::vector<JitterSweepRow>& rows,
                                         const std::vector<double>& levels,
                                         const std::string& variant) {
  std::vector<double> medians;
  for (double level : levels) {
    std::vector<double> errors;
    for (const JitterSweepRow& row : rows)
      if (row.level == level && row.variant == variant)
        errors.push_back(row.center_error);
    if (errors.empty())
      throw Error("median_center_errors: no rows for level " +
                  format_real_full(level));
    std::sort(errors.begin(), errors.end());
    const std::size_t n = errors.size();
    medians.push_back(n % 2 == 1 ? errors[n / 2]
                                 : 0.5 * (errors[n / 2 - 1] + errors[n / 2]));
  }
  return medians;
}

std::vector<AblationCell> ablation_grid(const AblationOptions& options) {
  if (options.num_seeds < 1) throw Error("ablation_grid: num_seeds must be >= 1");
  std::vector<AblationCell> cells;

  for (int fdc : options.fdc_counts) {
    for (int aaa : options.aaa_counts) {
      AblationCell cell;
      cell.aaa = aaa;
      cell.fdc = fdc;
      cell.valid = fdc <= aaa - 1;
      if (!cell.valid) {
        cells.push_back(cell);
        continue;
      }

      double metric_total = 0.0;
      for (int seed_idx = 0; seed_idx < options.num_seeds; ++seed_idx) {
        ModelConfig cfg = options.model_template;
        cfg.num_aaa_stages = aaa;
        cfg.num_fdc_stages = fdc;
        const std::size_t stages = static_cast<std::size_t>(aaa);
        if (options.model_template.encoder_widths.size() < stages)
          throw Error("ablation_grid: model template must provide widths for "
                      "the deepest configuration");
        cfg.encoder_widths.assign(
            options.model_template.encoder_widths.begin(),
            options.model_template.encoder_widths.begin() + stages);
        cfg.neighbors.assign(options.model_template.neighbors.begin(),
                             options.model_template.neighbors.begin() + stages);
        cfg.reduction_ratios.assign(
            options.model_template.reduction_ratios.begin(),
            options.model_template.reduction_ratios.begin() + stages);
        cfg.validate();

        const std::uint64_t base =
            options.data_seed + 1000003ULL * static_cast<std::uint64_t>(seed_idx);
        auto train_set =
            generate_dataset(options.scene_template, options.train_scenes, base);
        auto test_set = generate_dataset(options.scene_template,
                                         options.test_scenes, base + 500000ULL);

        Model model = Model::build(cfg, static_cast<std::uint64_t>(seed_idx));
        TrainOptions train_opts = options.train_options;
        train_opts.seed = static_cast<std::uint64_t>(seed_idx);
        train(model, train_set, train_opts);
        metric_total += evaluate(model, test_set).accuracy;
      }
      cell.metric = metric_total / options.num_seeds;
      cells.push_back(cell);
    }
  }
  return cells;
}

void write_ablation_csv(const std::vector<AblationCell>& cells,
                        const AblationOptions& options, std::ostream& out) {
  out << "";
  for (int aaa : options.aaa_counts) out << "," << aaa << "xAAA";
  out << "\n";
  for (int fdc : options.fdc_counts) {
    out << fdc << "xFDC";
    for (int aaa : options.aaa_counts) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const AblationCell& cell) {
                                     return cell.aaa == aaa && cell.fdc == fdc;
                                   });
      if (it == cells.end()) throw Error("write_ablation_csv: missing cell");
      if (it->valid) {
        out << "," << format_real_full(it->metric);
      } else {
        out << ",skipped";
      }
    }
    out << "\n";
  }
}

}  // namespace mma
