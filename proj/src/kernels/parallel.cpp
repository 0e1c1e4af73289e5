#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "rrda/kernels.hpp"

namespace rrda::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace parallel {

// Loops are signed for OpenMP and stay below this size before going parallel.
constexpr std::ptrdiff_t kMinParallelRows = 64;

Matrix matmul_transposed(const Matrix& a, const Matrix& b, std::span<const double> bias) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("matmul_transposed: inner dims " + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.cols()));
  }
  if (!bias.empty() && bias.size() != b.rows()) {
    throw std::invalid_argument("matmul_transposed: bias length mismatch");
  }
  Matrix out(a.rows(), b.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
  const std::size_t m = b.rows();
  const std::size_t inner = a.cols();
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* po = out.values().data();
#pragma omp parallel for schedule(static) if (n >= kMinParallelRows)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double* ar = pa + static_cast<std::size_t>(i) * inner;
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = pb + j * inner;
      double acc = 0.0;
      for (std::size_t k = 0; k < inner; ++k) acc += ar[k] * br[k];
      po[static_cast<std::size_t>(i) * m + j] = bias.empty() ? acc : acc + bias[j];
    }
  }
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("transposed_matmul: row count mismatch");
  Matrix out(a.cols(), b.cols());
  const auto p = static_cast<std::ptrdiff_t>(a.cols());
  const std::size_t n = a.rows();
  const std::size_t q = b.cols();
  // Each output row r owns column r of `a`; accumulation runs over samples in order.
#pragma omp parallel for schedule(static) if (p >= 8 && n >= static_cast<std::size_t>(kMinParallelRows))
  for (std::ptrdiff_t r = 0; r < p; ++r) {
    auto orow = out.row(static_cast<std::size_t>(r));
    for (std::size_t s = 0; s < n; ++s) {
      const double av = a(s, static_cast<std::size_t>(r));
      const auto brow = b.row(s);
      for (std::size_t c = 0; c < q; ++c) orow[c] += av * brow[c];
    }
  }
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims mismatch");
  Matrix out(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static) if (n >= kMinParallelRows)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a(static_cast<std::size_t>(i), k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
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
  const auto n = static_cast<std::ptrdiff_t>(points.rows());
#pragma omp parallel for schedule(static) if (n >= kMinParallelRows)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto pr = points.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_c = 0;
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
      const auto cr = centroids.row(c);
      double d = 0.0;
      for (std::size_t j = 0; j < pr.size(); ++j) {
        const double diff = pr[j] - cr[j];
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
  const auto nb = static_cast<std::ptrdiff_t>(bank.rows());
#pragma omp parallel for schedule(static) if (nb >= kMinParallelRows)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    double s = 0.0;
    for (double v : bank.row(static_cast<std::size_t>(b))) s += v * v;
    bank_norm[static_cast<std::size_t>(b)] = std::sqrt(s);
  }

  std::vector<std::vector<std::size_t>> result(queries.rows());
  const auto nq = static_cast<std::ptrdiff_t>(queries.rows());
#pragma omp parallel for schedule(static) if (nq * nb >= 4096)
  for (std::ptrdiff_t qq = 0; qq < nq; ++qq) {
    const auto q = static_cast<std::size_t>(qq);
    const auto qr = queries.row(q);
    double qn = 0.0;
    for (double v : qr) qn += v * v;
    qn = std::sqrt(qn);
    const std::size_t skip = exclude.empty() ? SIZE_MAX : exclude[q];
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(bank.rows());
    for (std::size_t b = 0; b < bank.rows(); ++b) {
      if (b == skip) continue;
      const auto br = bank.row(b);
      double dot = 0.0;
      for (std::size_t j = 0; j < br.size(); ++j) dot += qr[j] * br[j];
      const double denom = qn * bank_norm[b];
      sims.emplace_back(denom > 0.0 ? dot / denom : 0.0, b);
    }
    const std::size_t take = std::min(k, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(take), sims.end(),
                      [](const auto& x, const auto& y) {
                        return x.first > y.first || (x.first == y.first && x.second < y.second);
                      });
    auto& out = result[q];
    out.reserve(take);
    for (std::size_t t = 0; t < take; ++t) out.push_back(sims[t].second);
  }
  return result;
}

}  // namespace parallel
}  // namespace rrda::kernels
