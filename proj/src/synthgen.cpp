#include "rrda/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <sstream>

#include "rrda/kernels.hpp"
#include "rrda/numeric.hpp"
#include "rrda/optimizer.hpp"
#include "rrda/rng.hpp"

namespace rrda {

void SynthConfig::validate() const {
  auto frac_ok = [](double f) { return f > 0.0 && f < 1.0; };
  if (!frac_ok(ce_threshold_frac)) throw std::invalid_argument("synth: ce_threshold_frac must lie in (0, 1)");
  if (!frac_ok(ent_threshold_frac)) throw std::invalid_argument("synth: ent_threshold_frac must lie in (0, 1)");
  if (k_prime < 1) throw std::invalid_argument("synth: k_prime must be >= 1");
  if (steps < 1) throw std::invalid_argument("synth: steps must be >= 1");
  if (!(opt_lr > 0.0)) throw std::invalid_argument("synth: opt_lr must be positive");
  if (lambda_reg < 0.0) throw std::invalid_argument("synth: lambda_reg must be >= 0");
  if (!(eps_known > 0.0) || !(eps_unknown > 0.0)) throw std::invalid_argument("synth: eps must be positive");
  if (per_class_cap < 1) throw std::invalid_argument("synth: per_class_cap must be >= 1");
}

namespace {

enum class SearchGoal { max_entropy, class_ce };

Matrix noisy_copy(const Matrix& features, double scale, Rng& rng) {
  const auto var = column_variance(features);
  Matrix z = features;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += scale * std::sqrt(var[j]) * normal(rng);
  }
  return z;
}

std::vector<double> row_scores(const Matrix& logits, SearchGoal obj, std::size_t target) {
  std::vector<double> s(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    s[i] = obj == SearchGoal::max_entropy ? softmax_entropy(logits.row(i)) : cross_entropy(logits.row(i), target);
  }
  return s;
}

// Objective value and gradient w.r.t. the points. Scores are H for the
// entropy search (loss uses -H) and CE for the class search.
double objective(const Matrix& z, const LinearHead& head, SearchGoal obj, std::size_t target, double lambda,
                 double eps, Matrix* grad) {
  const Matrix logits = head.forward(z);
  const double inv_n = 1.0 / static_cast<double>(z.rows());
  Matrix d_logits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (obj == SearchGoal::max_entropy) {
      loss -= softmax_entropy(logits.row(i)) * inv_n;
      if (grad) {
        softmax_entropy_grad(logits.row(i), d_logits.row(i));
        for (double& g : d_logits.row(i)) g *= -inv_n;
      }
    } else {
      loss += cross_entropy(logits.row(i), target) * inv_n;
      if (grad) {
        cross_entropy_grad(logits.row(i), target, d_logits.row(i));
        for (double& g : d_logits.row(i)) g *= inv_n;
      }
    }
  }
  if (lambda > 0.0) loss += lambda * variance_hinge(z, eps);
  if (grad) {
    *grad = head.backward_features(d_logits);
    if (lambda > 0.0) {
      const Matrix hg = variance_hinge_grad(z, eps);
      for (std::size_t k = 0; k < grad->size(); ++k) grad->values()[k] += lambda * hg.values()[k];
    }
  }
  return loss;
}

SearchResult run_search(const Matrix& features, const LinearHead& head, SearchGoal obj, std::size_t target,
                        double eps, std::size_t cap, const SynthConfig& cfg, Rng& rng) {
  if (features.rows() < 2) {
    throw std::invalid_argument("synthetic search needs at least 2 feature rows (variance hinge)");
  }
  if (features.cols() != head.feature_dim()) {
    throw std::invalid_argument("synthetic search: feature dim does not match the head");
  }
  Matrix z = noisy_copy(features, cfg.init_noise_scale, rng);
  SearchResult result;
  result.initial_scores = row_scores(head.forward(z), obj, target);

  if (cfg.optimize) {
    OptimizerState adam(OptimizerSettings::adam(cfg.opt_lr), z.rows(), z.cols());
    Matrix grad(z.rows(), z.cols());
    result.loss_trace.reserve(cfg.steps);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      result.loss_trace.push_back(objective(z, head, obj, target, cfg.lambda_reg, eps, &grad));
      adam.step(z, grad);
    }
  }
  result.final_scores = row_scores(head.forward(z), obj, target);

  const double log_k = std::log(static_cast<double>(head.classes()));
  result.threshold = (obj == SearchGoal::max_entropy ? cfg.ent_threshold_frac : cfg.ce_threshold_frac) * log_k;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const bool keep = obj == SearchGoal::max_entropy ? result.final_scores[i] > result.threshold
                                                    : result.final_scores[i] < result.threshold;
    if (keep) result.selected_rows.push_back(i);
  }
  if (result.selected_rows.size() > cap) {
    std::shuffle(result.selected_rows.begin(), result.selected_rows.end(), rng);
    result.selected_rows.resize(cap);
    std::sort(result.selected_rows.begin(), result.selected_rows.end());
  }
  result.selected = z.gather_rows(result.selected_rows);
  return result;
}

std::string describe_scores(const std::vector<double>& s) {
  if (s.empty()) return "no rows";
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  std::ostringstream os;
  os << "min " << *lo << ", mean " << mean << ", max " << *hi << " over " << s.size() << " rows";
  return os.str();
}

}  // namespace

SearchResult generate_unknown(const Matrix& features, const LinearHead& source_head, const SynthConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "synth-unknown");
  SearchResult r = run_search(features, source_head, SearchGoal::max_entropy, 0, cfg.eps_unknown, SIZE_MAX, cfg, rng);
  if (r.selected_rows.empty()) {
    throw NoCandidatesError("no unknown candidates: no row exceeds entropy " + std::to_string(r.threshold) +
                                " (achieved " + describe_scores(r.final_scores) + ")",
                            r.final_scores, r.threshold);
  }
  return r;
}

SearchResult generate_known(const Matrix& features, const LinearHead& source_head, std::size_t known_class,
                            const SynthConfig& cfg) {
  cfg.validate();
  if (known_class >= source_head.classes()) {
    throw std::out_of_range("generate_known: class " + std::to_string(known_class) + " outside the source head");
  }
  Rng rng = make_rng(cfg.seed, "synth-known-" + std::to_string(known_class));
  SearchResult r = run_search(features, source_head, SearchGoal::class_ce, known_class, cfg.eps_known,
                              cfg.per_class_cap, cfg, rng);
  if (r.selected_rows.empty()) {
    throw NoCandidatesError("no candidates for known class " + std::to_string(known_class) +
                                ": no row below cross-entropy " + std::to_string(r.threshold) + " (achieved " +
                                describe_scores(r.final_scores) + ")",
                            r.final_scores, r.threshold);
  }
  return r;
}

// ---------------------------------------------------------------------------
// k-means

namespace {

Matrix centroids_from_labels(const Matrix& points, const std::vector<std::size_t>& labels, std::size_t k,
                             std::vector<std::size_t>& counts) {
  Matrix c(k, points.cols());
  counts.assign(k, 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    ++counts[labels[i]];
    auto row = c.row(labels[i]);
    const auto p = points.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) row[j] += p[j];
  }
  for (std::size_t g = 0; g < k; ++g) {
    if (counts[g] == 0) continue;
    for (double& v : c.row(g)) v /= static_cast<double>(counts[g]);
  }
  return c;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<std::size_t> pick(0, points.rows() - 1);
  const std::size_t first = pick(rng);
  std::copy(points.row(first).begin(), points.row(first).end(), centroids.row(0).begin());
  std::vector<double> d2(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) d2[i] = sq_dist(points.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = points.rows() - 1;
      for (std::size_t i = 0; i < points.rows(); ++i) {
        target -= d2[i];
        if (target < 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = pick(rng);
    }
    std::copy(points.row(chosen).begin(), points.row(chosen).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < points.rows(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(points.row(i), centroids.row(c)));
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iterations,
                    double tolerance) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
  if (points.rows() < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(points.rows()) + " points cannot form " +
                                std::to_string(k) + " clusters; use a smaller K'");
  }
  Rng rng = make_rng(seed, "kmeans");
  KMeansResult result;
  result.centroids = kmeanspp_seed(points, k, rng);
  std::vector<std::size_t> counts;
  for (std::size_t iter = 0; iter < max_iterations; ++iter) {
    auto assign = kernels::parallel::assign_nearest(points, result.centroids);
    result.labels = std::move(assign.labels);
    Matrix next = centroids_from_labels(points, result.labels, k, counts);

    for (std::size_t empty = 0; empty < k; ++empty) {
      if (counts[empty] != 0) continue;
      const std::size_t largest =
          static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::size_t far = points.rows();
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.rows(); ++i) {
        if (result.labels[i] != largest) continue;
        const double d = sq_dist(points.row(i), next.row(largest));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      result.labels[far] = empty;
      next = centroids_from_labels(points, result.labels, k, counts);
    }

    double moved = 0.0;
    for (std::size_t g = 0; g < k; ++g) moved = std::max(moved, std::sqrt(sq_dist(next.row(g), result.centroids.row(g))));
    result.centroids = std::move(next);
    result.iterations = iter + 1;
    if (moved <= tolerance) break;
  }
  return result;
}

std::vector<std::size_t> cluster_unknown(const Matrix& selected, std::size_t k_prime, std::size_t known_classes,
                                         std::uint64_t seed) {
  KMeansResult km = kmeans(selected, k_prime, seed);
  for (auto& l : km.labels) l += known_classes;
  return km.labels;
}

// ---------------------------------------------------------------------------

SyntheticSet build_synthetic_set(const Matrix& target_features, const LinearHead& source_head,
                                 const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t k = source_head.classes();
  if (k < 2) throw std::invalid_argument("build_synthetic_set: needs K >= 2");

  std::vector<SearchResult> known(k);
  std::vector<std::exception_ptr> errors(k);
  std::vector<bool> missing(k, false);
  const auto kk = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < kk; ++c) {
    const auto cls = static_cast<std::size_t>(c);
    try {
      known[cls] = generate_known(target_features, source_head, cls, cfg);
    } catch (const NoCandidatesError&) {
      missing[cls] = true;
    } catch (...) {
      errors[cls] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  SearchResult unknown = generate_unknown(target_features, source_head, cfg);
  std::vector<std::size_t> unknown_labels =
      cluster_unknown(unknown.selected, cfg.k_prime, k, derive_seed(cfg.seed, "cluster"));

  SyntheticSet set;
  set.known_classes = k;
  set.k_prime = cfg.k_prime;
  set.unknown_threshold = unknown.threshold;
  set.known_threshold = cfg.ce_threshold_frac * std::log(static_cast<double>(k));
  for (std::size_t c = 0; c < k; ++c) {
    if (missing[c]) {
      set.missing_known_classes.push_back(c);
      continue;
    }
    set.features.append_rows(known[c].selected);
    set.labels.insert(set.labels.end(), known[c].selected.rows(), c);
    set.provenance.insert(set.provenance.end(), known[c].selected.rows(), Provenance{false, c});
  }
  set.features.append_rows(unknown.selected);
  for (std::size_t label : unknown_labels) {
    set.labels.push_back(label);
    set.provenance.push_back(Provenance{true, label - k});
  }
  return set;
}

}  // namespace rrda
