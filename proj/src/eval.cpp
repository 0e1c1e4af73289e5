#include "rrda/eval.hpp"

#include <cmath>
#include <stdexcept>

#include "rrda/classifier.hpp"
#include "rrda/data.hpp"
#include "rrda/numeric.hpp"

namespace rrda {

double harmonic_mean(double a, double b) {
  if (a + b == 0.0) return 0.0;
  if (a == b) return a;
  return 2.0 * a * b / (a + b);
}

OpenSetMetrics open_set_metrics(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truth,
                                std::size_t known_classes, KnownAccuracy convention) {
  if (predictions.size() != truth.size()) throw std::invalid_argument("open_set_metrics: length mismatch");
  const std::size_t k = known_classes;
  std::vector<std::size_t> total(k + 1, 0);
  std::vector<std::size_t> hit(k + 1, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::size_t t = std::min(truth[i], k);
    const std::size_t p = std::min(predictions[i], k);
    ++total[t];
    if (p == t) ++hit[t];
  }
  if (total[k] == 0) throw std::invalid_argument("open_set_metrics: no unknown samples, HOS undefined");

  OpenSetMetrics m;
  std::size_t known_total = 0, known_hit = 0, present = 0;
  double recall_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    known_total += total[c];
    known_hit += hit[c];
    if (total[c] == 0) continue;
    ++present;
    recall_sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
  }
  if (present == 0) throw std::invalid_argument("open_set_metrics: no known samples, OS* undefined");
  m.os_star = convention == KnownAccuracy::per_class_mean
                  ? recall_sum / static_cast<double>(present)
                  : static_cast<double>(known_hit) / static_cast<double>(known_total);
  m.unk = static_cast<double>(hit[k]) / static_cast<double>(total[k]);
  m.hos = harmonic_mean(m.os_star, m.unk);
  return m;
}

std::vector<std::size_t> threshold_predictions(const Matrix& source_logits, double tau_frac) {
  const std::size_t k = source_logits.cols();
  const double threshold = tau_frac * std::log(static_cast<double>(k));
  const auto raw = argmax_rows(source_logits);
  std::vector<std::size_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = softmax_entropy(source_logits.row(i)) > threshold ? k : raw[i];
  }
  return out;
}

OpenSetMetrics threshold_baseline(const ModelSnapshot& source, const Matrix& target_inputs,
                                  const std::vector<std::size_t>& truth, double tau_frac, KnownAccuracy convention) {
  if (!(tau_frac > 0.0 && tau_frac < 1.0)) throw std::invalid_argument("threshold_baseline: tau must lie in (0, 1)");
  const Matrix logits = source.logits(target_inputs);
  const std::size_t k = logits.cols();
  return open_set_metrics(threshold_predictions(logits, tau_frac), aggregate_labels(truth, k), k, convention);
}

OpenSetMetrics evaluate_model(const ModelSnapshot& model, const Matrix& target_inputs,
                              const std::vector<std::size_t>& truth, KnownAccuracy convention) {
  const std::size_t k = model.known_classes;
  const Prediction p = predict_logits(model.logits(target_inputs), k);
  return open_set_metrics(p.aggregated, aggregate_labels(truth, k), k, convention);
}

}  // namespace rrda
