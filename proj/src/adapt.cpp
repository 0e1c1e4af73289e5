#include "rrda/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "rrda/kernels.hpp"
#include "rrda/numeric.hpp"
#include "rrda/optimizer.hpp"
#include "rrda/rng.hpp"

namespace rrda {

void AdaptConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("adapt: batch_size must be positive");
  if (lr < 0.0) throw std::invalid_argument("adapt: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("adapt: momentum must lie in [0, 1)");
  if (knn_size < 1) throw std::invalid_argument("adapt: knn_size must be >= 1");
  if (encoder_lr_scale < 0.0) throw std::invalid_argument("adapt: encoder_lr_scale must be >= 0");
  if (lambda_ent < 0.0 || lambda_div < 0.0 || lambda_ps < 0.0 || aad_lambda < 0.0) {
    throw std::invalid_argument("adapt: loss weights must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// SHOT

ShotLossTerms shot_loss(const Matrix& logits, std::span<const std::size_t> pseudo_targets, const AdaptConfig& cfg,
                        const MarginalContext* marginal) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (n == 0) throw std::invalid_argument("shot_loss: empty batch");
  if (cfg.lambda_ps > 0.0 && pseudo_targets.size() != n) {
    throw std::invalid_argument("shot_loss: need one pseudo target per row");
  }
  const Matrix probs = softmax_rows(logits);
  const double inv_n = 1.0 / static_cast<double>(n);

  ShotLossTerms t;
  t.d_logits = Matrix(n, c);
  std::vector<double> g(c);
  for (std::size_t i = 0; i < n; ++i) {
    t.entropy += softmax_entropy(logits.row(i));
    softmax_entropy_grad(logits.row(i), g);
    for (std::size_t k = 0; k < c; ++k) t.d_logits(i, k) += cfg.lambda_ent * inv_n * g[k];
  }
  t.entropy *= cfg.lambda_ent * inv_n;

  std::vector<double> mass(c, 0.0);
  double count = static_cast<double>(n);
  if (marginal) {
    if (marginal->other_sum.size() != c) throw std::invalid_argument("shot_loss: marginal context width");
    mass = marginal->other_sum;
    count = static_cast<double>(marginal->total_count);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) mass[k] += probs(i, k);
  }
  std::vector<double> log_bar(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double p_bar = mass[k] / count;
    if (p_bar > 0.0) {
      log_bar[k] = std::log(p_bar);
      t.diversity += p_bar * log_bar[k];
    }
  }
  t.diversity *= cfg.lambda_div;
  // d/dl_ij of sum_k p_bar_k log p_bar_k = (1/count) p_ij (log p_bar_j - sum_k p_ik log p_bar_k)
  for (std::size_t i = 0; i < n; ++i) {
    double mix = 0.0;
    for (std::size_t k = 0; k < c; ++k) mix += probs(i, k) * log_bar[k];
    for (std::size_t j = 0; j < c; ++j) {
      t.d_logits(i, j) += cfg.lambda_div / count * probs(i, j) * (log_bar[j] - mix);
    }
  }

  if (cfg.lambda_ps > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      t.pseudo += cross_entropy(logits.row(i), pseudo_targets[i]);
      cross_entropy_grad(logits.row(i), pseudo_targets[i], g);
      for (std::size_t k = 0; k < c; ++k) t.d_logits(i, k) += cfg.lambda_ps * inv_n * g[k];
    }
    t.pseudo *= cfg.lambda_ps * inv_n;
  }
  t.total = t.entropy + t.diversity + t.pseudo;
  return t;
}

namespace {

// Nearest centroid by cosine; `valid` lists the usable class ids in ascending order.
std::vector<std::size_t> nearest_cosine(const Matrix& features, const Matrix& centroids,
                                        const std::vector<std::size_t>& valid) {
  const Matrix usable = centroids.gather_rows(valid);
  const auto nn = kernels::parallel::knn_cosine(features, usable, 1, {});
  std::vector<std::size_t> out(features.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = valid[nn[i].front()];
  return out;
}

}  // namespace

std::vector<std::size_t> shot_pseudo_labels(const Matrix& features, const Matrix& probs) {
  if (features.rows() != probs.rows()) throw std::invalid_argument("shot_pseudo_labels: row mismatch");
  if (features.rows() == 0) throw std::invalid_argument("shot_pseudo_labels: empty target pass");
  const std::size_t c = probs.cols();

  // Centroids only for classes that win at least one argmax.
  Matrix soft = kernels::parallel::transposed_matmul(probs, features);  // c x d
  std::vector<std::size_t> wins(c, 0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    ++wins[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())];
  }
  std::vector<std::size_t> valid;
  for (std::size_t k = 0; k < c; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) m += probs(i, k);
    if (wins[k] > 0 && m > 0.0) {
      valid.push_back(k);
      for (double& v : soft.row(k)) v /= m;
    }
  }
  if (valid.empty()) throw std::invalid_argument("shot_pseudo_labels: no class has mass");
  std::vector<std::size_t> labels = nearest_cosine(features, soft, valid);

  Matrix hard(c, features.cols());
  std::vector<std::size_t> counts(c, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++counts[labels[i]];
    auto row = hard.row(labels[i]);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += features(i, j);
  }
  valid.clear();
  for (std::size_t k = 0; k < c; ++k) {
    if (counts[k] == 0) continue;
    valid.push_back(k);
    for (double& v : hard.row(k)) v /= static_cast<double>(counts[k]);
  }
  return nearest_cosine(features, hard, valid);
}

std::vector<std::size_t> shot_pseudo_labels(const Matrix& features, const LinearHead& head) {
  return shot_pseudo_labels(features, softmax_rows(head.forward(features)));
}

// ---------------------------------------------------------------------------
// AaD

MemoryBank::MemoryBank(Matrix features, Matrix probs) : features_(std::move(features)), probs_(std::move(probs)) {
  if (features_.rows() != probs_.rows()) throw std::invalid_argument("MemoryBank: row mismatch");
  if (!features_.all_finite() || !probs_.all_finite()) throw std::invalid_argument("MemoryBank: non-finite entry");
}

void MemoryBank::update(std::span<const std::size_t> indices, const Matrix& features, const Matrix& probs) {
  if (features.rows() != indices.size() || probs.rows() != indices.size() || features.cols() != features_.cols() ||
      probs.cols() != probs_.cols()) {
    throw std::invalid_argument("MemoryBank::update: shape mismatch");
  }
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) throw std::out_of_range("MemoryBank::update: index out of range");
    std::copy(features.row(r).begin(), features.row(r).end(), features_.row(indices[r]).begin());
    std::copy(probs.row(r).begin(), probs.row(r).end(), probs_.row(indices[r]).begin());
  }
}

AadLossResult aad_loss(const Matrix& batch_logits, std::span<const std::size_t> batch_indices, const MemoryBank& bank,
                       std::size_t knn_size, double lambda) {
  const std::size_t b = batch_logits.rows();
  const std::size_t c = batch_logits.cols();
  if (b == 0) throw std::invalid_argument("aad_loss: empty batch");
  if (batch_indices.size() != b) throw std::invalid_argument("aad_loss: one bank index per batch row");
  if (bank.size() < knn_size + 1) {
    throw std::invalid_argument("aad_loss: bank of " + std::to_string(bank.size()) + " entries cannot supply " +
                                std::to_string(knn_size) + " neighbors");
  }
  if (bank.probs().cols() != c) throw std::invalid_argument("aad_loss: class count differs from bank");

  const Matrix probs = softmax_rows(batch_logits);
  const Matrix queries = bank.features().gather_rows(batch_indices);
  AadLossResult out;
  out.neighbors = kernels::parallel::knn_cosine(queries, bank.features(), knn_size, batch_indices);

  const double inv_b = 1.0 / static_cast<double>(b);
  auto dot = [c](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += x[k] * y[k];
    return s;
  };

  Matrix d_probs(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    const auto& near = out.neighbors[i];
    for (std::size_t j : near) {
      out.value -= inv_b * dot(probs.row(i), bank.probs().row(j));
      for (std::size_t k = 0; k < c; ++k) d_probs(i, k) -= inv_b * bank.probs()(j, k);
    }
    for (std::size_t m = 0; m < b; ++m) {
      if (m == i || std::find(near.begin(), near.end(), batch_indices[m]) != near.end()) continue;
      out.value += inv_b * lambda * dot(probs.row(i), probs.row(m));
      for (std::size_t k = 0; k < c; ++k) {
        d_probs(i, k) += inv_b * lambda * probs(m, k);
        d_probs(m, k) += inv_b * lambda * probs(i, k);
      }
    }
  }

  // Chain through softmax: dl_i = p_i * (g_i - <p_i, g_i>).
  out.d_logits = Matrix(b, c);
  for (std::size_t i = 0; i < b; ++i) {
    const double s = dot(probs.row(i), d_probs.row(i));
    for (std::size_t k = 0; k < c; ++k) out.d_logits(i, k) = probs(i, k) * (d_probs(i, k) - s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptation loops

namespace {

struct EncoderOptimizer {
  std::vector<OptimizerState> weights;
  std::vector<OptimizerState> biases;

  EncoderOptimizer(const Encoder& enc, const OptimizerSettings& s) {
    for (const auto& l : enc.layers()) {
      weights.emplace_back(s, l.weight.rows(), l.weight.cols());
      biases.emplace_back(s, l.bias.rows(), l.bias.cols());
    }
  }

  void step(Encoder& enc, const std::vector<LayerGrad>& grads) {
    for (std::size_t l = 0; l < grads.size(); ++l) {
      weights[l].step(enc.layers()[l].weight, grads[l].weight);
      biases[l].step(enc.layers()[l].bias, grads[l].bias);
    }
  }
};

std::optional<OpenSetMetrics> maybe_eval(const ModelSnapshot& m, const Matrix& inputs,
                                         const std::vector<std::size_t>* labels) {
  if (!labels) return std::nullopt;
  return evaluate_model(m, inputs, *labels);
}

void check_inputs(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& cfg,
                  const std::vector<std::size_t>* eval_labels) {
  cfg.validate();
  if (target.size() == 0) throw std::invalid_argument("adapt: empty target data");
  if (target.inputs().cols() != model.encoder.input_dim()) throw std::invalid_argument("adapt: input dim mismatch");
  if (eval_labels && eval_labels->size() != target.size()) {
    throw std::invalid_argument("adapt: eval label count mismatch");
  }
}

}  // namespace

AdaptResult adapt_shot(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& cfg,
                       const std::vector<std::size_t>* eval_labels) {
  check_inputs(model, target, cfg, eval_labels);
  const Matrix& x = target.inputs();
  AdaptResult out{model, {}};
  out.model.stage = "adapted-shot";
  EncoderOptimizer opt(out.model.encoder, OptimizerSettings::sgd(cfg.lr, cfg.momentum, cfg.weight_decay));
  Rng rng = make_rng(cfg.seed, "adapt-shuffle");
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);

  out.trace.push_back({0, std::nullopt, maybe_eval(out.model, x, eval_labels)});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Matrix feats = out.model.encoder.forward(x);
    const Matrix all_probs = softmax_rows(out.model.head.forward(feats));
    std::vector<std::size_t> pseudo;
    if (cfg.lambda_ps > 0.0) pseudo = shot_pseudo_labels(feats, all_probs);
    std::vector<double> total_mass(all_probs.cols(), 0.0);
    if (cfg.marginal == MarginalMode::dataset) {
      for (std::size_t i = 0; i < all_probs.rows(); ++i) {
        for (std::size_t k = 0; k < all_probs.cols(); ++k) total_mass[k] += all_probs(i, k);
      }
    }

    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto cache = out.model.encoder.forward_cached(x.gather_rows(idx));
      const Matrix logits = out.model.head.forward(cache.features);
      std::vector<std::size_t> targets;
      if (!pseudo.empty()) {
        for (std::size_t i : idx) targets.push_back(pseudo[i]);
      }
      MarginalContext ctx;
      if (cfg.marginal == MarginalMode::dataset) {
        ctx.other_sum = total_mass;
        for (std::size_t i : idx) {
          for (std::size_t k = 0; k < ctx.other_sum.size(); ++k) ctx.other_sum[k] -= all_probs(i, k);
        }
        ctx.total_count = x.rows();
      }
      const ShotLossTerms terms =
          shot_loss(logits, targets, cfg, cfg.marginal == MarginalMode::dataset ? &ctx : nullptr);
      const Matrix d_feat = out.model.head.backward_features(terms.d_logits);
      opt.step(out.model.encoder, out.model.encoder.backward(cache, d_feat));
      loss_sum += terms.total;
      ++batches;
    }
    out.trace.push_back({epoch, loss_sum / static_cast<double>(batches), maybe_eval(out.model, x, eval_labels)});
  }
  return out;
}

AdaptResult adapt_aad(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& cfg,
                      const std::vector<std::size_t>* eval_labels, const BankObserver& on_step) {
  check_inputs(model, target, cfg, eval_labels);
  const Matrix& x = target.inputs();
  if (x.rows() < cfg.knn_size + 1) {
    throw std::invalid_argument("adapt_aad: target set smaller than knn_size + 1");
  }
  AdaptResult out{model, {}};
  out.model.stage = "adapted-aad";
  EncoderOptimizer enc_opt(out.model.encoder,
                           OptimizerSettings::sgd(cfg.lr * cfg.encoder_lr_scale, cfg.momentum, cfg.weight_decay));
  const auto head_settings = OptimizerSettings::sgd(cfg.lr, cfg.momentum, cfg.weight_decay);
  OptimizerState head_w(head_settings, out.model.head.weight().rows(), out.model.head.weight().cols());
  OptimizerState head_b(head_settings, out.model.head.bias().rows(), out.model.head.bias().cols());

  MemoryBank bank = [&] {
    Matrix f = out.model.encoder.forward(x);
    Matrix p = softmax_rows(out.model.head.forward(f));
    return MemoryBank(std::move(f), std::move(p));
  }();

  Rng rng = make_rng(cfg.seed, "adapt-shuffle");
  std::vector<std::size_t> order(x.rows());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t per_epoch = (x.rows() + cfg.batch_size - 1) / cfg.batch_size;
  const double total_steps = static_cast<double>(per_epoch * std::max<std::size_t>(cfg.epochs, 1));
  std::size_t step = 0;

  out.trace.push_back({0, std::nullopt, maybe_eval(out.model, x, eval_labels)});
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      const auto cache = out.model.encoder.forward_cached(x.gather_rows(idx));
      const Matrix logits = out.model.head.forward(cache.features);
      bank.update(idx, cache.features, softmax_rows(logits));
      if (on_step) on_step(bank, idx, cache.features);

      double lambda = cfg.aad_lambda;
      if (cfg.aad_lambda_decay) {
        lambda *= std::pow(1.0 + 10.0 * static_cast<double>(step) / total_steps, -cfg.aad_decay_beta);
      }
      const AadLossResult loss = aad_loss(logits, idx, bank, cfg.knn_size, lambda);
      const HeadGrad hg = out.model.head.backward(cache.features, loss.d_logits);
      const auto eg = out.model.encoder.backward(cache, hg.features);
      head_w.step(out.model.head.weight(), hg.weight);
      head_b.step(out.model.head.bias(), hg.bias);
      enc_opt.step(out.model.encoder, eg);
      loss_sum += loss.value;
      ++batches;
    }
    out.trace.push_back({epoch, loss_sum / static_cast<double>(batches), maybe_eval(out.model, x, eval_labels)});
  }
  return out;
}

AdaptResult adapt(const ModelSnapshot& model, UnlabeledView target, const AdaptConfig& cfg,
                  const std::vector<std::size_t>* eval_labels) {
  return cfg.method == AdaptMethod::shot ? adapt_shot(model, target, cfg, eval_labels)
                                         : adapt_aad(model, target, cfg, eval_labels);
}

std::string format_trace_jsonl(const std::vector<EpochRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["loss"] = r.loss ? nlohmann::ordered_json(*r.loss) : nlohmann::ordered_json(nullptr);
    if (r.metrics) {
      j["os_star"] = r.metrics->os_star;
      j["unk"] = r.metrics->unk;
      j["hos"] = r.metrics->hos;
    } else {
      j["os_star"] = nullptr;
      j["unk"] = nullptr;
      j["hos"] = nullptr;
    }
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

void write_trace_jsonl(const std::filesystem::path& path, const std::vector<EpochRecord>& trace) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << format_trace_jsonl(trace);
}

}  // namespace rrda
