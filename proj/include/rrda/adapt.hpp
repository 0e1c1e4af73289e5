#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rrda/data.hpp"
#include "rrda/eval.hpp"
#include "rrda/matrix.hpp"
#include "rrda/model.hpp"

namespace rrda {

enum class AdaptMethod { shot, aad };
enum class MarginalMode { batch, dataset };

struct AdaptConfig {
  AdaptMethod method = AdaptMethod::shot;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  double lr = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lambda_ent = 0.5;
  double lambda_div = 1.0;
  double lambda_ps = 0.3;
  double aad_lambda = 1.0;
  bool aad_lambda_decay = false;  // lambda * (1 + 10 t / T)^-beta when set
  double aad_decay_beta = 5.0;
  std::size_t knn_size = 3;
  double encoder_lr_scale = 0.1;  // AaD: encoder lr = lr * scale, head lr = lr
  MarginalMode marginal = MarginalMode::batch;
  std::uint64_t seed = 0;

  void validate() const;
};

// --- SHOT ------------------------------------------------------------------

/// Probability mass from outside the current batch, used when the diversity
/// marginal is taken over the whole dataset: p_bar = (sum_batch p + other_sum) / total_count.
struct MarginalContext {
  std::vector<double> other_sum;
  std::size_t total_count = 0;
};

struct ShotLossTerms {
  double entropy = 0.0;    // lambda_ent * mean_i H(p_i)
  double diversity = 0.0;  // lambda_div * sum_k p_bar_k log p_bar_k
  double pseudo = 0.0;     // lambda_ps * mean_i CE(logits_i, target_i)
  double total = 0.0;
  Matrix d_logits;         // gradient of total w.r.t. the batch logits
};

/// SHOT objective on a batch of logits. Pseudo targets may be empty when
/// lambda_ps is 0.
ShotLossTerms shot_loss(const Matrix& logits, std::span<const std::size_t> pseudo_targets, const AdaptConfig& config,
                        const MarginalContext* marginal = nullptr);

/// Centroid pseudo-labels: soft-prediction-weighted centroids, nearest by
/// cosine, then one round of hard-assignment centroids and reassignment.
/// Only classes that are the argmax of at least one row get a first-round
/// centroid; ties go to the lowest class.
std::vector<std::size_t> shot_pseudo_labels(const Matrix& features, const Matrix& probs);
std::vector<std::size_t> shot_pseudo_labels(const Matrix& features, const LinearHead& head);

// --- AaD -------------------------------------------------------------------

/// Per-sample cache of the latest features and predictions.
class MemoryBank {
 public:
  MemoryBank() = default;
  MemoryBank(Matrix features, Matrix probs);

  void update(std::span<const std::size_t> indices, const Matrix& features, const Matrix& probs);

  std::size_t size() const noexcept { return features_.rows(); }
  const Matrix& features() const noexcept { return features_; }
  const Matrix& probs() const noexcept { return probs_; }

 private:
  Matrix features_;
  Matrix probs_;
};

struct AadLossResult {
  double value = 0.0;
  Matrix d_logits;
  std::vector<std::vector<std::size_t>> neighbors;  // bank indices of C_i per batch row
};

/// Attraction to the knn nearest bank entries (cosine on bank features,
/// excluding the sample itself) and dispersion against the other batch
/// members not among those neighbors, averaged over the batch. Neighbor
/// predictions come from the bank and are constants.
AadLossResult aad_loss(const Matrix& batch_logits, std::span<const std::size_t> batch_indices,
                       const MemoryBank& bank, std::size_t knn_size, double lambda);

// --- adaptation loops ------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;               // 0 = before adaptation
  std::optional<double> loss;          // mean batch loss over the epoch
  std::optional<OpenSetMetrics> metrics;
};

struct AdaptResult {
  ModelSnapshot model;
  std::vector<EpochRecord> trace;
};

/// SHOT: the head stays frozen, the encoder trains with SGD + momentum;
/// pseudo-labels are recomputed at the start of every epoch.
AdaptResult adapt_shot(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& config,
                       const std::vector<std::size_t>* eval_labels = nullptr);

/// Called after every bank refresh with the batch indices and the features just forwarded.
using BankObserver =
    std::function<void(const MemoryBank&, std::span<const std::size_t> batch_indices, const Matrix& batch_features)>;

/// AaD: encoder and head both train (encoder at lr * encoder_lr_scale). The
/// memory bank is filled by a full pass and refreshed with every batch.
AdaptResult adapt_aad(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& config,
                      const std::vector<std::size_t>* eval_labels = nullptr, const BankObserver& on_step = {});

AdaptResult adapt(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& config,
                  const std::vector<std::size_t>* eval_labels = nullptr);

/// One JSON object per line: {"epoch", "loss", "os_star", "unk", "hos"}; absent values are null.
std::string format_trace_jsonl(const std::vector<EpochRecord>& trace);
void write_trace_jsonl(const std::filesystem::path& path, const std::vector<EpochRecord>& trace);

}  // namespace rrda
