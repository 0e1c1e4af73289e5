#include "rrda/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rrda {
namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

double log_sum_exp(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - top);
  return top + std::log(sum);
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  require_finite(logits, "softmax");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_softmax: empty input");
  require_finite(logits, "log_softmax");
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto p = softmax(logits.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  return out;
}

double entropy(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("entropy: empty input");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("entropy: negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("entropy: probabilities sum to " + std::to_string(sum));
  }
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double softmax_entropy(std::span<const double> logits) {
  const auto logp = log_softmax(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  return h;
}

void softmax_entropy_grad(std::span<const double> logits, std::span<double> grad) {
  const auto logp = log_softmax(logits);
  double h = 0.0;
  for (double lp : logp) h -= std::exp(lp) * lp;
  for (std::size_t j = 0; j < logp.size(); ++j) grad[j] = -std::exp(logp[j]) * (logp[j] + h);
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
  if (target >= logits.size()) {
    throw std::out_of_range("cross_entropy: target " + std::to_string(target) +
                            " out of range for " + std::to_string(logits.size()) + " classes");
  }
  require_finite(logits, "cross_entropy");
  return log_sum_exp(logits) - logits[target];
}

void cross_entropy_grad(std::span<const double> logits, std::size_t target, std::span<double> grad) {
  if (target >= logits.size()) throw std::out_of_range("cross_entropy_grad: target out of range");
  const auto p = softmax(logits);
  for (std::size_t j = 0; j < p.size(); ++j) grad[j] = p[j];
  grad[target] -= 1.0;
}

std::vector<double> column_variance(const Matrix& batch) {
  const std::size_t n = batch.rows();
  const std::size_t d = batch.cols();
  std::vector<double> mean(d, 0.0);
  std::vector<double> var(d, 0.0);
  if (n == 0) return var;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += batch(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = batch(i, j) - mean[j];
      var[j] += c * c;
    }
  }
  for (double& v : var) v /= static_cast<double>(n);
  return var;
}

double variance_hinge(const Matrix& batch, double eps) {
  if (batch.rows() < 2) throw std::invalid_argument("variance_hinge: batch needs at least 2 rows");
  if (batch.cols() == 0) throw std::invalid_argument("variance_hinge: batch has no features");
  const auto var = column_variance(batch);
  double total = 0.0;
  for (double v : var) total += std::max(0.0, 1.0 - std::sqrt(v + eps));
  return total / static_cast<double>(var.size());
}

Matrix variance_hinge_grad(const Matrix& batch, double eps) {
  if (batch.rows() < 2) throw std::invalid_argument("variance_hinge: batch needs at least 2 rows");
  const std::size_t n = batch.rows();
  const std::size_t d = batch.cols();
  const auto var = column_variance(batch);
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += batch(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);

  // d/dz_ij of -(1/d) sqrt(var_j + eps) = -(1/d) (z_ij - mean_j) / (n sqrt(var_j + eps))
  std::vector<double> scale(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j] + eps);
    if (s < 1.0) scale[j] = -1.0 / (static_cast<double>(d) * static_cast<double>(n) * s);
  }
  Matrix grad(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) grad(i, j) = scale[j] * (batch(i, j) - mean[j]);
  }
  return grad;
}

double grad_check(const Objective& f, const Matrix& params, double step) {
  Matrix analytic(params.rows(), params.cols());
  f(params, &analytic);
  Matrix probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double saved = probe.values()[i];
    probe.values()[i] = saved + step;
    const double up = f(probe, nullptr);
    probe.values()[i] = saved - step;
    const double down = f(probe, nullptr);
    probe.values()[i] = saved;
    const double central = (up - down) / (2.0 * step);
    const double a = analytic.values()[i];
    const double err = std::abs(a - central) / std::max(1e-8, std::abs(a) + std::abs(central));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace rrda
