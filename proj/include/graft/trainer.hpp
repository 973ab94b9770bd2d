#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "graft/augment.hpp"
#include "graft/graph.hpp"

namespace graft {

struct TrainConfig {
  std::uint32_t epochs = 20;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 0;
  unsigned workers = 1;  // per-sample gradients in parallel; sums stay in sample order
};

/// Throws InvalidConfig.
void check_config(const TrainConfig& config);

/// Adam with double-precision moment state. Parameters are registered on the
/// first step and must keep their sizes afterwards.
class Adam {
 public:
  explicit Adam(const TrainConfig& config);
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
  [[nodiscard]] std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Binary cross-entropy of a sigmoid output, computed from its logit.
double bce_from_logit(double logit, bool label);
/// Binary cross-entropy of a probability, clamped away from 0 and 1.
double bce_loss(double probability, bool label);

struct Metrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;  // 0 when undefined
  double recall = 0.0;     // 0 when undefined
  double accuracy = 0.0;
  bool precision_defined = false;
  bool recall_defined = false;
};

/// A sample is predicted positive when its probability exceeds `threshold`.
Metrics score(const std::vector<float>& probabilities, const std::vector<bool>& labels, float threshold = 0.5f);

/// Detector output (first element) for every sample.
std::vector<float> predict(const Graph& detector, const std::vector<LabeledImage>& samples, unsigned workers = 1);

Metrics evaluate(const Graph& detector, const std::vector<LabeledImage>& samples, float threshold = 0.5f,
                 unsigned workers = 1);

struct EpochStats {
  std::uint32_t epoch = 0;
  double train_loss = 0.0;
  Metrics validation;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  Graph detector;  // trained weights baked into its Const nodes
};

/// Consts consumed as weights or bias by a Conv2D or Dense node.
std::vector<std::uint32_t> trainable_consts(const Graph& graph);

/// Minibatch Adam on binary cross-entropy. The detector's output must be a
/// Sigmoid of one element; its initial weights are taken as given. Samples
/// are reshuffled every epoch from `config.seed`. Throws EmptyCorpus,
/// InvalidConfig, NonDifferentiableOp or Divergence.
TrainReport train(const Graph& detector, const std::vector<LabeledImage>& train_set,
                  const std::vector<LabeledImage>& validation_set, const TrainConfig& config);
TrainReport train(const Graph& detector, const Dataset& dataset, const TrainConfig& config);

/// Tab-separated: epoch, train_loss, precision, recall, accuracy, precision_defined.
std::string format_report(const TrainReport& report);
void write_report(const std::filesystem::path& path, const TrainReport& report);

}  // namespace graft
