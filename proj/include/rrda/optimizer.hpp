#pragma once

#include <cstdint>

#include "rrda/matrix.hpp"

namespace rrda {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double learning_rate = 0.01;
  double momentum = 0.9;  // beta1 for Adam
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double epsilon = 1e-8;

  static OptimizerSettings sgd(double lr, double momentum = 0.9, double weight_decay = 0.0);
  static OptimizerSettings adam(double lr, double beta1 = 0.9, double beta2 = 0.999);
};

/// Per-parameter optimizer state. One instance owns the moment buffers for a
/// single parameter matrix; a model keeps one state per parameter block.
///
/// Weight decay is classic L2: `weight_decay * params` is added to the
/// gradient before the update, for both SGD and Adam.
class OptimizerState {
 public:
  OptimizerState() = default;
  OptimizerState(OptimizerSettings settings, std::size_t rows, std::size_t cols);

  void step(Matrix& params, const Matrix& grads);

  const OptimizerSettings& settings() const noexcept { return settings_; }
  void set_learning_rate(double lr) noexcept { settings_.learning_rate = lr; }
  std::uint64_t step_count() const noexcept { return steps_; }
  const Matrix& first_moment() const noexcept { return first_; }
  const Matrix& second_moment() const noexcept { return second_; }

 private:
  OptimizerSettings settings_;
  std::uint64_t steps_ = 0;
  Matrix first_;   // momentum buffer / Adam m
  Matrix second_;  // Adam v
};

}  // namespace rrda
