#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rrda/matrix.hpp"
#include "rrda/optimizer.hpp"
#include "rrda/rng.hpp"

namespace rrda {

/// Fully connected layer, y = x W^T + b. weight is out x in, bias is 1 x out.
struct DenseLayer {
  Matrix weight;
  Matrix bias;

  std::size_t inputs() const noexcept { return weight.cols(); }
  std::size_t outputs() const noexcept { return weight.rows(); }
};

/// He-uniform weights (bound sqrt(6 / fan_in)) and zero bias.
DenseLayer make_dense(std::size_t inputs, std::size_t outputs, Rng& rng);

struct LayerGrad {
  Matrix weight;
  Matrix bias;
};

/// Activations kept by Encoder::forward for an exact backward pass.
struct EncoderCache {
  std::vector<Matrix> inputs;        // input of every layer
  std::vector<Matrix> preactivation; // x W^T + b of every layer
  Matrix features;                   // encoder output
};

/// MLP feature extractor. Hidden layers use ReLU; the output layer is linear.
class Encoder {
 public:
  Encoder() = default;
  explicit Encoder(std::vector<DenseLayer> layers);
  /// dims = {input, hidden..., feature_dim}; at least two entries.
  static Encoder make(const std::vector<std::size_t>& dims, Rng& rng);

  std::size_t input_dim() const;
  std::size_t feature_dim() const;
  std::vector<std::size_t> dims() const;

  Matrix forward(const Matrix& x) const;
  EncoderCache forward_cached(const Matrix& x) const;
  /// Parameter gradients for the loss whose gradient w.r.t. the features is d_features.
  std::vector<LayerGrad> backward(const EncoderCache& cache, const Matrix& d_features) const;

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

struct HeadGrad {
  Matrix weight;
  Matrix bias;
  Matrix features;  // d loss / d z
};

/// Linear classifier head over features: logits = z W^T + b.
class LinearHead {
 public:
  LinearHead() = default;
  LinearHead(Matrix weight, Matrix bias);
  static LinearHead make(std::size_t feature_dim, std::size_t classes, Rng& rng);

  std::size_t classes() const noexcept { return weight_.rows(); }
  std::size_t feature_dim() const noexcept { return weight_.cols(); }

  Matrix forward(const Matrix& features) const;
  HeadGrad backward(const Matrix& features, const Matrix& d_logits) const;
  /// d loss / d z only, without parameter gradients.
  Matrix backward_features(const Matrix& d_logits) const;

  Matrix& weight() noexcept { return weight_; }
  Matrix& bias() noexcept { return bias_; }
  const Matrix& weight() const noexcept { return weight_; }
  const Matrix& bias() const noexcept { return bias_; }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;

 private:
  Matrix weight_;
  Matrix bias_;
};

bool bit_identical(const LinearHead& a, const LinearHead& b);
bool bit_identical(const Encoder& a, const Encoder& b);

/// Encoder plus head plus the metadata needed to interpret the head's outputs.
struct ModelSnapshot {
  Encoder encoder;
  LinearHead head;
  std::size_t known_classes = 0;  // K
  std::size_t k_prime = 0;        // extra unknown classes in the head (0 for a source model)
  std::uint64_t seed = 0;
  std::string stage;              // "source", "target-head", "adapted-shot", ...

  Matrix features(const Matrix& inputs) const { return encoder.forward(inputs); }
  Matrix logits(const Matrix& inputs) const { return head.forward(encoder.forward(inputs)); }
};

bool bit_identical(const ModelSnapshot& a, const ModelSnapshot& b);

/// Snapshot container; layout documented in README ("Snapshot format").
std::string serialize_snapshot(const ModelSnapshot& snapshot);
ModelSnapshot deserialize_snapshot(const std::string& bytes);
void save_snapshot(const ModelSnapshot& snapshot, const std::filesystem::path& path);
ModelSnapshot load_snapshot(const std::filesystem::path& path);

struct SourceTrainConfig {
  std::vector<std::size_t> hidden_dims = {64, 32};
  std::size_t feature_dim = 16;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;  // Adam
  double weight_decay = 0.003;
};

struct SourceTrainResult {
  ModelSnapshot snapshot;
  std::vector<double> epoch_loss;       // mean cross-entropy per epoch
  std::vector<double> epoch_objective;  // cross-entropy plus the weight-decay penalty
};

/// Builds an encoder+head from `seed` and trains them with Adam on labeled
/// source data (labels 0..classes-1).
SourceTrainResult train_source(const Matrix& inputs, const std::vector<std::size_t>& labels,
                               std::size_t classes, const SourceTrainConfig& config,
                               std::uint64_t seed);

/// Continues training an existing encoder/head pair. Weight decay enters the
/// gradient as an L2 term, so the minimized objective is mean cross-entropy
/// plus weight_decay / 2 * |theta|^2; its per-epoch mean goes to `epoch_objective`.
std::vector<double> train_classifier(Encoder& encoder, LinearHead& head, const Matrix& inputs,
                                     const std::vector<std::size_t>& labels,
                                     const SourceTrainConfig& config, Rng& rng,
                                     std::vector<double>* epoch_objective = nullptr);

double accuracy(const Matrix& logits, const std::vector<std::size_t>& labels);
/// Row-wise argmax; ties resolve to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& logits);

}  // namespace rrda
