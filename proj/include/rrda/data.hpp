#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rrda/matrix.hpp"

namespace rrda {

/// Geometry of a source/target pair of Gaussian-blob domains.
///
/// Known class centers sit evenly on a circle of radius `class_radius` in the
/// plane of the first two input coordinates. The target domain rotates that
/// plane by `rotation_deg`, translates by `translation` and adds extra
/// isotropic noise. Target-private class c is placed by rejection sampling
/// around the source boundary direction halfway between known classes
/// c mod K and c mod K + 1, at radius `private_radius` plus one
/// `min_separation_sigmas * blob_sigma` step per completed round of K, with
/// angle and radius jitter. Every center keeps at least that separation from
/// every other center, source or target.
struct ScenarioConfig {
  std::size_t input_dim = 2;
  std::size_t known_classes = 3;
  std::size_t private_classes = 3;
  std::size_t samples_per_class = 200;
  double blob_sigma = 0.6;
  double class_radius = 5.0;
  double private_radius = 3.0;
  double private_radius_jitter = 0.5;
  double private_angle_jitter_deg = 10.0;
  double min_separation_sigmas = 4.0;
  double rotation_deg = 30.0;
  std::vector<double> translation;  // empty = no translation
  double noise_sigma = 0.0;         // extra target-only noise
  std::size_t max_placement_tries = 10000;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Samples with labels. Known classes are 0..K-1; target-private classes are
/// K..K+P-1 and exist for evaluation only.
struct LabeledSet {
  Matrix inputs;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return inputs.rows(); }
};

/// Label-free view handed to every training step on target data.
class UnlabeledView {
 public:
  explicit UnlabeledView(const Matrix& inputs) : inputs_(&inputs) {}
  explicit UnlabeledView(const LabeledSet& set) : inputs_(&set.inputs) {}
  const Matrix& inputs() const noexcept { return *inputs_; }
  std::size_t size() const noexcept { return inputs_->rows(); }

 private:
  const Matrix* inputs_;
};

struct Scenario {
  LabeledSet source;
  LabeledSet target;
  Matrix source_centers;   // K x X
  Matrix target_centers;   // (K+P) x X
};

/// Pure function of the config: equal configs give byte-equal datasets.
Scenario generate_scenario(const ScenarioConfig& config);

/// Maps every label >= known_classes to known_classes (the aggregate unknown).
std::vector<std::size_t> aggregate_labels(const std::vector<std::size_t>& labels,
                                          std::size_t known_classes);

// --- feature files ---------------------------------------------------------
//
// Header line `osda-features v1 <n> <dim> <has-labels>`, then one sample per
// line: space-separated floats (shortest round-trip representation),
// followed by an integer label when has-labels is 1. Labels in files are
// 1-based. LF line endings.

enum class FeatureFileErrorKind { io, malformed_header, row_length_mismatch, non_finite, bad_label };

class FeatureFileError : public std::runtime_error {
 public:
  FeatureFileError(FeatureFileErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  FeatureFileErrorKind kind() const noexcept { return kind_; }

 private:
  FeatureFileErrorKind kind_;
};

struct FeatureFile {
  Matrix features;
  std::vector<std::size_t> labels;  // 0-based; empty when the file has none
  bool has_labels = false;
};

std::string format_features(const Matrix& features, const std::vector<std::size_t>* labels);
FeatureFile parse_features(const std::string& text);
void write_features(const std::filesystem::path& path, const Matrix& features,
                    const std::vector<std::size_t>* labels = nullptr);
void write_features(const std::filesystem::path& path, const LabeledSet& set);
FeatureFile read_features(const std::filesystem::path& path);

}  // namespace rrda
