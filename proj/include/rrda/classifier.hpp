#pragma once

#include <cstdint>
#include <vector>

#include "rrda/matrix.hpp"
#include "rrda/model.hpp"
#include "rrda/synthgen.hpp"

namespace rrda {

enum class HeadInit { source, random };

/// (K + K')-way head. In source mode rows/bias 0..K-1 are copies of the
/// source head and the K' new rows are He-uniform with zero bias; in random
/// mode every row is He-uniform with zero bias.
LinearHead init_target_head(const LinearHead& source_head, std::size_t k_prime, HeadInit mode,
                            std::uint64_t seed);

struct HeadTrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::uint64_t seed = 0;
};

struct HeadTrainResult {
  LinearHead head;
  std::vector<double> epoch_loss;
};

/// Mini-batch SGD on mean cross-entropy over the synthetic set. Only the
/// head changes.
HeadTrainResult train_target_head(const LinearHead& head, const SyntheticSet& synth,
                                  const HeadTrainConfig& config);

/// Mean cross-entropy of `head` on the given rows of the synthetic set.
double mean_cross_entropy(const LinearHead& head, const Matrix& features, const std::vector<std::size_t>& labels);

struct Prediction {
  std::vector<std::size_t> raw;        // argmax over K + K' (ties: lowest index)
  std::vector<std::size_t> aggregated; // raw if raw < K, else K (the unknown class)
};

Prediction predict(const LinearHead& head, const Matrix& features, std::size_t known_classes);
Prediction predict_logits(const Matrix& logits, std::size_t known_classes);

}  // namespace rrda
