#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rrda/matrix.hpp"

namespace rrda {

/// Numerically stable softmax (max-shifted). Throws std::invalid_argument on non-finite input.
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Row-wise softmax of a logits matrix.
Matrix softmax_rows(const Matrix& logits);

/// Shannon entropy in nats, with 0 log 0 = 0. Rejects negative entries and
/// vectors whose sum is off from 1 by more than 1e-6.
double entropy(std::span<const double> probs);

/// Entropy of softmax(logits), computed through log-softmax so saturated
/// classes never produce log(0).
double softmax_entropy(std::span<const double> logits);
/// d softmax_entropy / d logits = -p * (log p + H).
void softmax_entropy_grad(std::span<const double> logits, std::span<double> grad);

/// -log softmax(logits)[target].
double cross_entropy(std::span<const double> logits, std::size_t target);
/// d cross_entropy / d logits = softmax(logits) - one_hot(target).
void cross_entropy_grad(std::span<const double> logits, std::size_t target, std::span<double> grad);

/// Population variance of each column.
std::vector<double> column_variance(const Matrix& batch);

/// Mean over features of max(0, 1 - sqrt(var_j + eps)), with var_j the
/// population variance of column j. Requires at least two rows.
double variance_hinge(const Matrix& batch, double eps);
/// Gradient of variance_hinge with respect to every batch entry. Inactive
/// features (var + eps >= 1) contribute zero.
Matrix variance_hinge_grad(const Matrix& batch, double eps);

/// Objective used by grad_check: returns f(params) and, when `grad` is
/// non-null, writes the analytic gradient into it (already sized like params).
using Objective = std::function<double(const Matrix& params, Matrix* grad)>;

/// Max over coordinates of |analytic - central| / max(1e-8, |analytic| + |central|).
double grad_check(const Objective& f, const Matrix& params, double step = 1e-5);

}  // namespace rrda
