#include "graft/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "graft/autodiff.hpp"
#include "graft/error.hpp"
#include "graft/interpreter.hpp"
#include "graft/parallel.hpp"
#include "graft/random.hpp"

namespace graft {

void check_config(const TrainConfig& c) {
  if (c.epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be at least 1");
  if (!(c.lr > 0.0) || !std::isfinite(c.lr)) throw Error(Errc::InvalidConfig, "learning rate must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw Error(Errc::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(c.eps > 0.0)) throw Error(Errc::InvalidConfig, "Adam epsilon must be positive");
  if (c.batch_size < 1) throw Error(Errc::InvalidConfig, "batch size must be at least 1");
}

Adam::Adam(const TrainConfig& c) : lr_(c.lr), beta1_(c.beta1), beta2_(c.beta2), eps_(c.eps) {}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw Error(Errc::ShapeMismatch, "Adam: parameter/gradient count differs");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw Error(Errc::ShapeMismatch, "Adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->values;
    const auto& g = grads[k]->values;
    if (p.size() != g.size() || p.size() != m_[k].size()) {
      throw Error(Errc::ShapeMismatch, "Adam: gradient does not match its parameter");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * gi;
      v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m_[k][i] / c1;
      const double vhat = v_[k][i] / c2;
      p[i] = static_cast<float>(p[i] - lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

double bce_from_logit(double z, bool y) {
  return std::max(z, 0.0) - (y ? z : 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double bce_loss(double p, bool y) {
  constexpr double kClamp = 1e-12;
  p = std::clamp(p, kClamp, 1.0 - kClamp);
  return y ? -std::log(p) : -std::log1p(-p);
}

Metrics score(const std::vector<float>& probs, const std::vector<bool>& labels, float threshold) {
  if (probs.size() != labels.size()) throw Error(Errc::ShapeMismatch, "score: prediction/label count differs");
  Metrics m;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] > threshold;
    if (predicted) {
      ++(labels[i] ? m.tp : m.fp);
    } else {
      ++(labels[i] ? m.fn : m.tn);
    }
  }
  m.precision_defined = m.tp + m.fp > 0;
  m.recall_defined = m.tp + m.fn > 0;
  if (m.precision_defined) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.recall_defined) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (!probs.empty()) m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(probs.size());
  return m;
}

std::vector<float> predict(const Graph& detector, const std::vector<LabeledImage>& samples, unsigned workers) {
  const auto io = find_io(detector);
  std::vector<float> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    auto r = execute(detector, {{io.input_node, samples[i].pixels}});
    out[i] = r.at(io.output_node).values.at(0);
  });
  return out;
}

Metrics evaluate(const Graph& detector, const std::vector<LabeledImage>& samples, float threshold,
                 unsigned workers) {
  std::vector<bool> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.positive);
  return score(predict(detector, samples, workers), labels, threshold);
}

std::vector<std::uint32_t> trainable_consts(const Graph& graph) {
  std::vector<bool> mark(graph.nodes.size(), false);
  for (const auto& n : graph.nodes) {
    if (n.op != OpKind::Conv2D && n.op != OpKind::Dense) continue;
    for (std::size_t k = 1; k < n.inputs.size(); ++k) {
      if (graph.nodes[n.inputs[k].node].op == OpKind::Const) mark[n.inputs[k].node] = true;
    }
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < mark.size(); ++i) {
    if (mark[i]) out.push_back(i);
  }
  return out;
}

namespace {

struct SampleGrad {
  std::vector<Tensor> grads;  // one per trainable Const
  double loss = 0.0;
};

}  // namespace

TrainReport train(const Graph& detector, const std::vector<LabeledImage>& train_set,
                  const std::vector<LabeledImage>& validation_set, const TrainConfig& config) {
  check_config(config);
  if (train_set.empty()) throw Error(Errc::EmptyCorpus, "empty training set");
  const bool has_pos = std::any_of(train_set.begin(), train_set.end(), [](const auto& s) { return s.positive; });
  const bool has_neg = std::any_of(train_set.begin(), train_set.end(), [](const auto& s) { return !s.positive; });
  if (!has_pos || !has_neg) throw Error(Errc::EmptyCorpus, "training set needs both classes");

  const auto io = find_io(detector);
  const Node& out_node = detector.nodes[*detector.find(io.output_node)];
  if (out_node.op != OpKind::Sigmoid || num_elements(io.output_shape) != 1) {
    throw Error(Errc::InvalidConfig, "detector output must be a one-element Sigmoid");
  }
  const auto logit_index = out_node.inputs.at(0).node;

  TrainReport report;
  report.detector = detector;
  Graph& g = report.detector;
  const auto params = trainable_consts(g);
  const std::string logit_name = g.nodes[logit_index].name;
  const auto out_index = *g.find(io.output_node);

  std::vector<Tensor*> param_ptrs;
  for (auto i : params) param_ptrs.push_back(&*g.nodes[i].value);
  Adam adam(config);

  auto sample_grad = [&](const LabeledImage& s, double scale) {
    const Tape tape = record(g, {{io.input_node, s.pixels}});
    const float p = tape.value[out_index]->values[0];
    const Tensor& z = *tape.value[logit_index];
    SampleGrad r;
    r.loss = bce_from_logit(z.values[0], s.positive);
    Tensor seed = Tensor::filled(z.shape, static_cast<float>((p - (s.positive ? 1.0f : 0.0f)) * scale));
    auto all = backward(tape, {{logit_name, std::move(seed)}});
    r.grads.reserve(params.size());
    for (auto i : params) r.grads.push_back(std::move(all[i]));
    return r;
  };

  std::vector<std::size_t> order(train_set.size());
  std::vector<SampleGrad> slots;
  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = stream_rng(config.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, order.size() - start);
      const double scale = 1.0 / static_cast<double>(count);
      slots.assign(count, SampleGrad{});
      parallel_for(count, config.workers,
                   [&](std::size_t k) { slots[k] = sample_grad(train_set[order[start + k]], scale); });

      std::vector<Tensor> sum = std::move(slots[0].grads);
      epoch_loss += slots[0].loss;
      for (std::size_t k = 1; k < count; ++k) {
        epoch_loss += slots[k].loss;
        for (std::size_t j = 0; j < sum.size(); ++j) {
          auto& dst = sum[j].values;
          const auto& src = slots[k].grads[j].values;
          for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
        }
      }
      if (!std::isfinite(epoch_loss)) {
        throw Error(Errc::Divergence, "loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      std::vector<const Tensor*> grad_ptrs;
      for (const auto& t : sum) grad_ptrs.push_back(&t);
      adam.step(param_ptrs, grad_ptrs);
      for (const Tensor* p : param_ptrs) {
        if (!std::all_of(p->values.begin(), p->values.end(), [](float v) { return std::isfinite(v); })) {
          throw Error(Errc::Divergence, "weights became non-finite in epoch " + std::to_string(epoch + 1));
        }
      }
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    if (!validation_set.empty()) stats.validation = evaluate(g, validation_set, 0.5f, config.workers);
    report.epochs.push_back(stats);
  }
  return report;
}

TrainReport train(const Graph& detector, const Dataset& dataset, const TrainConfig& config) {
  const auto split = static_cast<std::ptrdiff_t>(std::min(dataset.train_count, dataset.samples.size()));
  std::vector<LabeledImage> train_set(dataset.samples.begin(), dataset.samples.begin() + split);
  std::vector<LabeledImage> validation_set(dataset.samples.begin() + split, dataset.samples.end());
  return train(detector, train_set, validation_set, config);
}

std::string format_report(const TrainReport& report) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "epoch\ttrain_loss\tprecision\trecall\taccuracy\tprecision_defined\n";
  for (const auto& e : report.epochs) {
    os << e.epoch << '\t' << e.train_loss << '\t' << e.validation.precision << '\t' << e.validation.recall << '\t'
       << e.validation.accuracy << '\t' << (e.validation.precision_defined ? 1 : 0) << '\n';
  }
  return os.str();
}

void write_report(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot write " + path.string());
  f << format_report(report);
}

}  // namespace graft
