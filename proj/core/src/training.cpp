#include "mma/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mma/error.hpp"
#include "mma/random.hpp"

namespace mma {

SgdOptimizer::SgdOptimizer(Model& model, double learning_rate, double momentum)
    : model_(&model), learning_rate_(learning_rate), momentum_(momentum) {
  for (const auto& [name, tensor] : model.parameters())
    velocity_.emplace_back(tensor.numel(), 0.0);
}

void SgdOptimizer::step() {
  const auto& params = model_->parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor tensor = params[p].second;
    if (!tensor.has_grad()) continue;
    const std::vector<double> grad = tensor.grad();
    std::vector<double>& velocity = velocity_[p];
    std::vector<double>& values = tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      velocity[i] = momentum_ * velocity[i] - learning_rate_ * grad[i];
      values[i] += velocity[i];
    }
  }
}

namespace {

std::vector<int> labels_at_output(const ForwardResult& result,
                                  const PointCloud& scene) {
  if (!scene.has_labels())
    throw Error("scene_loss: segmentation requires per-point labels");
  std::vector<int> labels;
  labels.reserve(result.output_indices.size());
  for (std::size_t idx : result.output_indices)
    labels.push_back(scene.point_labels[idx]);
  return labels;
}

std::vector<double> inside_targets(const ForwardResult& result,
                                   const PointCloud& scene) {
  std::vector<double> targets;
  targets.reserve(result.output_positions.size());
  for (const Point3& p : result.output_positions) {
    bool inside = false;
    for (const ObjectRecord& obj : scene.objects) {
      if (point_inside_object(p, obj)) {
        inside = true;
        break;
      }
    }
    targets.push_back(inside ? 1.0 : 0.0);
  }
  return targets;
}

}  // namespace

Tensor scene_loss(const Model& model, const ForwardResult& result,
                  const PointCloud& scene, const TrainOptions& opts) {
  switch (model.config().head) {
    case HeadKind::classification: {
      if (scene.objects.empty())
        throw Error("scene_loss: classification requires at least one object");
      const int label = scene.objects[0].class_id;
      if (label < 0 || label >= model.config().num_classes)
        throw Error("scene_loss: scene class " + std::to_string(label) +
                    " out of range for the model head");
      return cross_entropy_with_logits(result.class_logits, {label});
    }
    case HeadKind::segmentation: {
      return cross_entropy_with_logits(result.seg_logits,
                                       labels_at_output(result, scene));
    }
    case HeadKind::weak_center: {
      if (scene.objects.empty())
        throw Error("scene_loss: weak-center requires at least one object");
      const Point3& target = scene.objects[0].weak_label;
      Tensor center_loss = smooth_l1(result.predicted_center,
                                     {target[0], target[1], target[2]});
      Tensor objectness_loss =
          bce_with_logits(result.objectness_logits, inside_targets(result, scene));
      return add(center_loss, scale(objectness_loss, opts.objectness_loss_weight));
    }
  }
  throw Error("scene_loss: unknown head kind");
}

namespace {

std::vector<std::vector<double>> snapshot_params(const Model& model) {
  std::vector<std::vector<double>> snap;
  snap.reserve(model.parameters().size());
  for (const auto& [name, tensor] : model.parameters()) snap.push_back(tensor.values());
  return snap;
}

void restore_params(Model& model, const std::vector<std::vector<double>>& snap) {
  const auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor tensor = params[i].second;
    tensor.mutable_values() = snap[i];
  }
}

double dataset_mean_loss(const Model& model, const std::vector<PointCloud>& dataset,
                         const TrainOptions& opts) {
  NoGradGuard no_grad;
  double total = 0.0;
  for (const PointCloud& scene : dataset) {
    ForwardResult result = model.forward(scene);
    total += scene_loss(model, result, scene, opts).item();
  }
  return total / static_cast<double>(dataset.size());
}

}  // namespace

RunReport train(Model& model, const std::vector<PointCloud>& dataset,
                const TrainOptions& opts) {
  if (dataset.empty()) throw Error("train: dataset is empty");
  if (opts.epochs < 0) throw Error("train: epochs must be >= 0");

  const auto start = std::chrono::steady_clock::now();
  RunReport report;
  report.seed = opts.seed;
  report.config_echo = model.config().to_key_value_text();

  if (opts.epochs == 0) {
    report.initial_loss = dataset_mean_loss(model, dataset, opts);
    report.final_metrics = evaluate(model, dataset);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    return report;
  }

  SgdOptimizer optimizer(model, opts.learning_rate, opts.momentum);
  Rng order_rng(opts.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto last_good = snapshot_params(model);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    double lr = opts.learning_rate;
    if (opts.lr_decay_every > 0)
      lr *= std::pow(opts.lr_decay_factor, epoch / opts.lr_decay_every);
    optimizer.set_learning_rate(lr);

    order_rng.shuffle(order);
    double epoch_total = 0.0;
    try {
      for (std::size_t idx : order) {
        const PointCloud& scene = dataset[idx];
        model.zero_grad();
        ForwardResult result = model.forward(scene);
        Tensor loss = scene_loss(model, result, scene, opts);
        epoch_total += loss.item();
        backward(loss);
        optimizer.step();
      }
    } catch (const Error&) {
      // Divergence (non-finite activations or loss): roll back to the last
      // completed epoch and stop.
      restore_params(model, last_good);
      report.diverged = true;
      break;
    }
    report.epoch_losses.push_back(epoch_total / static_cast<double>(dataset.size()));
    report.completed_epochs = epoch + 1;
    last_good = snapshot_params(model);
  }

  report.final_metrics = evaluate(model, dataset);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

Metrics evaluate(const Model& model, const std::vector<PointCloud>& dataset) {
  if (dataset.empty()) throw Error("evaluate: dataset is empty");
  NoGradGuard no_grad;
  Metrics metrics;

  switch (model.config().head) {
    case HeadKind::classification: {
      std::size_t correct = 0;
      for (const PointCloud& scene : dataset) {
        if (scene.objects.empty())
          throw Error("evaluate: classification scene without objects");
        const ForwardResult result = model.forward(scene);
        const auto& logits = result.class_logits.values();
        std::size_t best = 0;
        for (std::size_t k = 1; k < logits.size(); ++k)
          if (logits[k] > logits[best]) best = k;
        if (static_cast<int>(best) == scene.objects[0].class_id) ++correct;
      }
      metrics.accuracy =
          static_cast<double>(correct) / static_cast<double>(dataset.size());
      break;
    }
    case HeadKind::segmentation: {
      const std::size_t classes =
          static_cast<std::size_t>(model.config().num_classes);
      std::vector<std::size_t> tp(classes, 0), fp(classes, 0), fn(classes, 0);
      for (const PointCloud& scene : dataset) {
        const ForwardResult result = model.forward(scene);
        if (!scene.has_labels())
          throw Error("evaluate: segmentation scene without labels");
        const auto& logits = result.seg_logits.values();
        const std::size_t n = result.seg_logits.shape()[0];
        for (std::size_t i = 0; i < n; ++i) {
          std::size_t pred = 0;
          for (std::size_t k = 1; k < classes; ++k)
            if (logits[i * classes + k] > logits[i * classes + pred]) pred = k;
          const std::size_t truth = static_cast<std::size_t>(
              scene.point_labels[result.output_indices[i]]);
          if (pred == truth) {
            ++tp[truth];
          } else {
            ++fp[pred];
            ++fn[truth];
          }
        }
      }
      double iou_sum = 0.0;
      std::size_t present = 0;
      for (std::size_t k = 0; k < classes; ++k) {
        const std::size_t unions = tp[k] + fp[k] + fn[k];
        if (unions == 0) continue;
        iou_sum += static_cast<double>(tp[k]) / static_cast<double>(unions);
        ++present;
      }
      metrics.mean_iou = present ? iou_sum / static_cast<double>(present) : 0.0;
      break;
    }
    case HeadKind::weak_center: {
      double error_total = 0.0;
      std::size_t points_total = 0, points_correct = 0;
      for (const PointCloud& scene : dataset) {
        if (scene.objects.empty())
          throw Error("evaluate: weak-center scene without objects");
        const ForwardResult result = model.forward(scene);
        const auto& center = result.predicted_center.values();
        // Error against the TRUE center (nearest object), never the weak label.
        double best = std::numeric_limits<double>::infinity();
        for (const ObjectRecord& obj : scene.objects) {
          const double dx = center[0] - obj.center[0];
          const double dy = center[1] - obj.center[1];
          const double dz = center[2] - obj.center[2];
          best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
        }
        error_total += best;

        const auto& logits = result.objectness_logits.values();
        for (std::size_t i = 0; i < logits.size(); ++i) {
          bool inside = false;
          for (const ObjectRecord& obj : scene.objects) {
            if (point_inside_object(result.output_positions[i], obj)) {
              inside = true;
              break;
            }
          }
          const bool predicted_inside = logits[i] > 0.0;  // sigmoid > 0.5
          if (predicted_inside == inside) ++points_correct;
          ++points_total;
        }
      }
      metrics.center_error =
          error_total / static_cast<double>(dataset.size());
      metrics.objectness_accuracy =
          static_cast<double>(points_correct) / static_cast<double>(points_total);
      break;
    }
  }
  return metrics;
}

}  // namespace mma
