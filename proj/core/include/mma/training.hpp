#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mma/network.hpp"
#include "mma/scene_gen.hpp"

namespace mma {

struct Metrics {
  double accuracy = std::numeric_limits<double>::quiet_NaN();
  double mean_iou = std::numeric_limits<double>::quiet_NaN();
  double center_error = std::numeric_limits<double>::quiet_NaN();
  double objectness_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainOptions {
  int epochs = 20;
  double learning_rate = 0.05;
  double momentum = 0.9;
  int lr_decay_every = 10;  // epochs between step decays; <= 0 disables
  double lr_decay_factor = 0.5;
  std::uint64_t seed = 0;  // drives the per-epoch scene order
  double objectness_loss_weight = 1.0;
};

struct RunReport {
  std::string config_echo;
  std::vector<double> epoch_losses;  // mean per epoch
  double initial_loss = std::numeric_limits<double>::quiet_NaN();
  Metrics final_metrics;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  bool diverged = false;
  int completed_epochs = 0;
};

/// Plain SGD with momentum; velocity per parameter, deterministic order.
class SgdOptimizer {
 public:
  SgdOptimizer(Model& model, double learning_rate, double momentum);
  void set_learning_rate(double learning_rate) { learning_rate_ = learning_rate; }
  double learning_rate() const { return learning_rate_; }
  void step();

 private:
  Model* model_;
  double learning_rate_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

/// Loss for one scene under the model's head: cross-entropy for
/// classification/segmentation, and smooth-L1 on the predicted center
/// against the (possibly jittered) weak label plus binary objectness with
/// inside-object supervision for the weak-center head.
Tensor scene_loss(const Model& model, const ForwardResult& result,
                  const PointCloud& scene, const TrainOptions& opts);

/// One-scene-at-a-time SGD over the dataset. A non-finite loss aborts the
/// run and restores the parameters snapshotted at the end of the last good
/// epoch. With epochs == 0 the report echoes the initial loss and leaves
/// the model untouched.
RunReport train(Model& model, const std::vector<PointCloud>& dataset,
                const TrainOptions& opts);

/// Classification accuracy, segmentation mean per-class IoU, or weak-center
/// mean Euclidean error measured against TRUE object centers (never the
/// jittered labels) plus objectness accuracy, depending on the head.
Metrics evaluate(const Model& model, const std::vector<PointCloud>& dataset);

}  // namespace mma
