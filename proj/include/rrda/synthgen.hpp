#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrda/matrix.hpp"
#include "rrda/model.hpp"

namespace rrda {

struct SynthConfig {
  double lambda_reg = 1.0;          // weight of the variance hinge
  std::size_t steps = 1000;         // Adam steps per optimization
  double opt_lr = 0.001;
  double ce_threshold_frac = 0.25;  // keep known rows with CE < frac * log K
  double ent_threshold_frac = 0.75; // keep unknown rows with H > frac * log K
  double eps_known = 1e-4;
  double eps_unknown = 1e-3;
  double init_noise_scale = 0.01;   // noise sigma = scale * per-feature std
  std::size_t k_prime = 3;
  std::size_t per_class_cap = 1000;
  bool optimize = true;             // false: select from the noisy features as-is
  std::uint64_t seed = 0;

  void validate() const;
};

/// Raised when an optimization leaves no row on the right side of its threshold.
class NoCandidatesError : public std::runtime_error {
 public:
  NoCandidatesError(const std::string& message, std::vector<double> scores, double threshold)
      : std::runtime_error(message), scores_(std::move(scores)), threshold_(threshold) {}
  /// Per-row entropy (unknown search) or cross-entropy (known search) after optimization.
  const std::vector<double>& scores() const noexcept { return scores_; }
  double threshold() const noexcept { return threshold_; }

 private:
  std::vector<double> scores_;
  double threshold_;
};

struct SearchResult {
  Matrix selected;                       // retained rows
  std::vector<std::size_t> selected_rows;// their row index in the input batch
  std::vector<double> initial_scores;    // per row, before optimization
  std::vector<double> final_scores;      // per row, after optimization
  std::vector<double> loss_trace;        // objective value per step
  double threshold = 0.0;
};

/// Searches for high-entropy points under the frozen head by minimizing
/// -mean H(softmax(head(z))) + lambda * variance_hinge(z, eps_unknown),
/// starting from a noisy copy of `features`. Keeps rows with H > frac * log K.
SearchResult generate_unknown(const Matrix& features, const LinearHead& source_head,
                              const SynthConfig& config);

/// Same search pulling every row toward class `known_class` (0-based) by
/// minimizing mean CE + lambda * variance_hinge(z, eps_known). Keeps rows
/// with CE < frac * log K, truncated to per_class_cap.
SearchResult generate_known(const Matrix& features, const LinearHead& source_head,
                            std::size_t known_class, const SynthConfig& config);

struct KMeansResult {
  std::vector<std::size_t> labels;  // 0..k-1
  Matrix centroids;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding and empty-cluster repair
/// (the farthest point of the largest cluster moves to the empty one).
KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                    std::size_t max_iterations = 300, double tolerance = 1e-6);

/// Clusters unknown candidates into k_prime groups labeled known_classes + cluster.
std::vector<std::size_t> cluster_unknown(const Matrix& selected, std::size_t k_prime,
                                         std::size_t known_classes, std::uint64_t seed);

struct Provenance {
  bool unknown = false;
  std::size_t group = 0;  // known class, or unknown cluster index
};

struct SyntheticSet {
  Matrix features;
  std::vector<std::size_t> labels;  // 0..K+K'-1
  std::vector<Provenance> provenance;
  std::size_t known_classes = 0;
  std::size_t k_prime = 0;
  std::vector<std::size_t> missing_known_classes;  // classes that kept no rows
  double unknown_threshold = 0.0;
  double known_threshold = 0.0;

  std::size_t size() const noexcept { return features.rows(); }
};

/// Runs the known search for every class, the unknown search, and clustering.
SyntheticSet build_synthetic_set(const Matrix& target_features, const LinearHead& source_head,
                                 const SynthConfig& config);

}  // namespace rrda
