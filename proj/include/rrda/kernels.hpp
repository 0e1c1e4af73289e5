#pragma once

#include <cstddef>
#include <vector>

#include "rrda/matrix.hpp"

// Data-parallel inner loops. Every kernel exists twice: a plain serial
// version kept as the reference for tests and benchmarks, and an OpenMP
// version used by the library. Both parallelize only over output rows, so
// per-row arithmetic order is identical and results match bit for bit.
namespace rrda::kernels {

struct Assignment {
  std::vector<std::size_t> labels;
  std::vector<double> sq_distances;
};

namespace serial {

/// out = a * b^T + bias (bias may be empty, else length b.rows()).
Matrix matmul_transposed(const Matrix& a, const Matrix& b, std::span<const double> bias = {});
/// out = a^T * b  (a: n x p, b: n x q -> p x q). Accumulates over rows in order.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
/// out = a * b  (a: n x p, b: p x q).
Matrix matmul(const Matrix& a, const Matrix& b);
/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
Assignment assign_nearest(const Matrix& points, const Matrix& centroids);
/// Indices of the k rows of `bank` with the highest cosine similarity to each
/// query row, excluding bank row `exclude[i]` for query i (pass SIZE_MAX to
/// exclude nothing). Ordered by descending similarity, ties to lower index.
std::vector<std::vector<std::size_t>> knn_cosine(const Matrix& queries, const Matrix& bank,
                                                 std::size_t k,
                                                 std::span<const std::size_t> exclude);

}  // namespace serial

namespace parallel {

Matrix matmul_transposed(const Matrix& a, const Matrix& b, std::span<const double> bias = {});
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
Matrix matmul(const Matrix& a, const Matrix& b);
Assignment assign_nearest(const Matrix& points, const Matrix& centroids);
std::vector<std::vector<std::size_t>> knn_cosine(const Matrix& queries, const Matrix& bank,
                                                 std::size_t k,
                                                 std::span<const std::size_t> exclude);

}  // namespace parallel

/// Number of OpenMP threads available (1 when built without OpenMP).
int max_threads();

}  // namespace rrda::kernels
