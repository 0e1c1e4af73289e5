#pragma once

#include <vector>

#include "rrda/matrix.hpp"
#include "rrda/model.hpp"

namespace rrda {

struct OpenSetMetrics {
  double os_star = 0.0;  // known-class accuracy
  double unk = 0.0;      // recall of the aggregate unknown class
  double hos = 0.0;      // harmonic mean of the two
};

enum class KnownAccuracy {
  per_class_mean,  // mean of per-class recall over known classes present in truth
  overall,         // fraction of known-class samples classified correctly
};

/// 2ab / (a + b), defined as 0 when both are 0.
double harmonic_mean(double a, double b);

/// Predictions and truth use 0..K-1 for known classes and K for unknown.
/// Throws std::invalid_argument when truth has no unknown or no known sample.
OpenSetMetrics open_set_metrics(const std::vector<std::size_t>& predictions, const std::vector<std::size_t>& truth,
                                std::size_t known_classes,
                                KnownAccuracy convention = KnownAccuracy::per_class_mean);

/// Source-only baseline: unknown when H(softmax(logits)) > tau_frac * log K,
/// otherwise the argmax over the K source classes.
std::vector<std::size_t> threshold_predictions(const Matrix& source_logits, double tau_frac);

/// `truth` carries the raw target labels (private classes >= K are aggregated).
OpenSetMetrics threshold_baseline(const ModelSnapshot& source, const Matrix& target_inputs,
                                  const std::vector<std::size_t>& truth, double tau_frac,
                                  KnownAccuracy convention = KnownAccuracy::per_class_mean);

/// Metrics of a (K + K')-way model: argmax with K'-class aggregation.
OpenSetMetrics evaluate_model(const ModelSnapshot& model, const Matrix& target_inputs,
                              const std::vector<std::size_t>& truth,
                              KnownAccuracy convention = KnownAccuracy::per_class_mean);

}  // namespace rrda
