#include "rrda/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "rrda/numeric.hpp"
#include "rrda/optimizer.hpp"
#include "rrda/rng.hpp"

namespace rrda {

LinearHead init_target_head(const LinearHead& source_head, std::size_t k_prime, HeadInit mode,
                            std::uint64_t seed) {
  if (k_prime < 1) throw std::invalid_argument("init_target_head: k_prime must be >= 1");
  const std::size_t k = source_head.classes();
  const std::size_t d = source_head.feature_dim();
  Rng rng = make_rng(seed, "target-head-init");
  DenseLayer fresh = make_dense(d, k + k_prime, rng);
  if (mode == HeadInit::source) {
    for (std::size_t r = 0; r < k; ++r) {
      std::copy(source_head.weight().row(r).begin(), source_head.weight().row(r).end(),
                fresh.weight.row(r).begin());
      fresh.bias(0, r) = source_head.bias()(0, r);
    }
  }
  return LinearHead(std::move(fresh.weight), std::move(fresh.bias));
}

double mean_cross_entropy(const LinearHead& head, const Matrix& features, const std::vector<std::size_t>& labels) {
  if (labels.empty()) throw std::invalid_argument("mean_cross_entropy: no rows");
  const Matrix logits = head.forward(features);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += cross_entropy(logits.row(i), labels[i]);
  return total / static_cast<double>(labels.size());
}

HeadTrainResult train_target_head(const LinearHead& head, const SyntheticSet& synth, const HeadTrainConfig& cfg) {
  if (synth.size() == 0) throw std::invalid_argument("train_target_head: empty synthetic set");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_target_head: batch size must be positive");
  for (std::size_t y : synth.labels) {
    if (y >= head.classes()) throw std::invalid_argument("train_target_head: label outside the head");
  }
  HeadTrainResult out{head, {}};
  const auto opt = OptimizerSettings::sgd(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
  OptimizerState w_state(opt, head.weight().rows(), head.weight().cols());
  OptimizerState b_state(opt, head.bias().rows(), head.bias().cols());
  Rng rng = make_rng(cfg.seed, "target-head-train");

  std::vector<std::size_t> order(synth.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix z = synth.features.gather_rows(idx);
      const Matrix logits = out.head.forward(z);
      Matrix d_logits(logits.rows(), logits.cols());
      const double inv = 1.0 / static_cast<double>(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t y = synth.labels[idx[r]];
        total += cross_entropy(logits.row(r), y);
        cross_entropy_grad(logits.row(r), y, d_logits.row(r));
        for (double& g : d_logits.row(r)) g *= inv;
      }
      const HeadGrad g = out.head.backward(z, d_logits);
      w_state.step(out.head.weight(), g.weight);
      b_state.step(out.head.bias(), g.bias);
    }
    out.epoch_loss.push_back(total / static_cast<double>(synth.size()));
  }
  return out;
}

Prediction predict_logits(const Matrix& logits, std::size_t known_classes) {
  Prediction p;
  p.raw = argmax_rows(logits);
  p.aggregated.resize(p.raw.size());
  for (std::size_t i = 0; i < p.raw.size(); ++i) p.aggregated[i] = std::min(p.raw[i], known_classes);
  return p;
}

Prediction predict(const LinearHead& head, const Matrix& features, std::size_t known_classes) {
  return predict_logits(head.forward(features), known_classes);
}

}  // namespace rrda
