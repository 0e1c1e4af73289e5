#include "rrda/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace rrda {

OptimizerSettings OptimizerSettings::sgd(double lr, double momentum, double weight_decay) {
  OptimizerSettings s;
  s.kind = OptimizerKind::sgd_momentum;
  s.learning_rate = lr;
  s.momentum = momentum;
  s.weight_decay = weight_decay;
  return s;
}

OptimizerSettings OptimizerSettings::adam(double lr, double beta1, double beta2) {
  OptimizerSettings s;
  s.kind = OptimizerKind::adam;
  s.learning_rate = lr;
  s.momentum = beta1;
  s.beta2 = beta2;
  return s;
}

OptimizerState::OptimizerState(OptimizerSettings settings, std::size_t rows, std::size_t cols)
    : settings_(settings), first_(rows, cols), second_(rows, cols) {
  if (settings_.learning_rate < 0.0) throw std::invalid_argument("optimizer: negative learning rate");
  if (settings_.momentum < 0.0 || settings_.momentum >= 1.0) {
    throw std::invalid_argument("optimizer: momentum/beta1 must lie in [0, 1)");
  }
  if (settings_.beta2 < 0.0 || settings_.beta2 >= 1.0) {
    throw std::invalid_argument("optimizer: beta2 must lie in [0, 1)");
  }
  if (settings_.weight_decay < 0.0) throw std::invalid_argument("optimizer: negative weight decay");
}

void OptimizerState::step(Matrix& params, const Matrix& grads) {
  require_same_shape(params, grads, "optimizer step");
  require_same_shape(params, first_, "optimizer state");
  ++steps_;
  const double lr = settings_.learning_rate;
  const double wd = settings_.weight_decay;
  auto p = params.values();
  auto g = grads.values();
  auto m = first_.values();

  if (settings_.kind == OptimizerKind::sgd_momentum) {
    const double mu = settings_.momentum;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i] + wd * p[i];
      m[i] = mu * m[i] + gi;
      p[i] -= lr * m[i];
    }
    return;
  }

  auto v = second_.values();
  const double b1 = settings_.momentum;
  const double b2 = settings_.beta2;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i] + wd * p[i];
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
  }
}

}  // namespace rrda
