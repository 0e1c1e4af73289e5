#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#include "rrda/kernels.hpp"

namespace rrda::kernels::serial {

Matrix matmul_transposed(const Matrix& a, const Matrix& b, std::span<const double> bias) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_transposed: inner dims " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.cols()));
  }
  if (!bias.empty() && bias.size() != b.rows()) {
    throw std::invalid_argument("matmul_transposed: bias length mismatch");
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
      out(i, j) = bias.empty() ? acc : acc + bias[j];
    }
  }
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("transposed_matmul: row count mismatch");
  Matrix out(a.cols(), b.cols());
  for (std::size_t n = 0; n < a.rows(); ++n) {
    for (std::size_t r = 0; r < a.cols(); ++r) {
      for (std::size_t c = 0; c < b.cols(); ++c) out(r, c) += a(n, r) * b(n, c);
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += a(i, k) * b(k, j);
    }
  }
  return out;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centroids) {
  if (centroids.rows() == 0) throw std::invalid_argument("assign_nearest: no centroids");
  if (points.cols() != centroids.cols()) throw std::invalid_argument("assign_nearest: dim mismatch");
  Assignment out;
  out.labels.resize(points.rows());
  out.sq_distances.resize(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < points.cols(); ++j) {
        const double diff = points(i, j) - centroids(c, j);
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_c = c;
      }
    }
    out.labels[i] = best_c;
    out.sq_distances[i] = best;
  }
  return out;
}

std::vector<std::vector<std::size_t>> knn_cosine(const Matrix& queries, const Matrix& bank,
                                                 std::size_t k,
                                                 std::span<const std::size_t> exclude) {
  if (queries.cols() != bank.cols()) throw std::invalid_argument("knn_cosine: dim mismatch");
  if (!exclude.empty() && exclude.size() != queries.rows()) {
    throw std::invalid_argument("knn_cosine: exclude list length mismatch");
  }
  std::vector<double> bank_norm(bank.rows());
  for (std::size_t b = 0; b < bank.rows(); ++b) {
    double s = 0.0;
    for (double v : bank.row(b)) s += v * v;
    bank_norm[b] = std::sqrt(s);
  }
  std::vector<std::vector<std::size_t>> result(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    double qn = 0.0;
    for (double v : queries.row(q)) qn += v * v;
    qn = std::sqrt(qn);
    const std::size_t skip = exclude.empty() ? SIZE_MAX : exclude[q];
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(bank.rows());
    for (std::size_t b = 0; b < bank.rows(); ++b) {
      if (b == skip) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < bank.cols(); ++j) dot += queries(q, j) * bank(b, j);
      const double denom = qn * bank_norm[b];
      sims.emplace_back(denom > 0.0 ? dot / denom : 0.0, b);
    }
    const std::size_t take = std::min(k, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(take), sims.end(),
                      [](const auto& x, const auto& y) {
                        return x.first > y.first || (x.first == y.first && x.second < y.second);
                      });
    result[q].reserve(take);
    for (std::size_t t = 0; t < take; ++t) result[q].push_back(sims[t].second);
  }
  return result;
}

}  // namespace rrda::kernels::serial
