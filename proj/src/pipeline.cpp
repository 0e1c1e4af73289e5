#include "rrda/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <stdexcept>

#include "rrda/rng.hpp"

namespace rrda {

RunConfig RunConfig::with_stage_seeds() const {
  RunConfig c = *this;
  c.scenario.seed = derive_seed(seed, "scenario");
  c.synth.seed = derive_seed(seed, "synth");
  c.head.seed = derive_seed(seed, "head");
  c.adapt.seed = derive_seed(seed, "adapt");
  return c;
}

RrdaResult run_rrda(const ModelSnapshot& source, UnlabeledView target, const RunConfig& config,
                    const std::vector<std::size_t>* eval_labels) {
  if (source.k_prime != 0) throw std::invalid_argument("run_rrda: expected a source model (K-way head)");
  if (target.size() == 0) throw std::invalid_argument("run_rrda: empty target data");
  const std::size_t k = source.head.classes();

  RrdaResult r;
  const Matrix features = source.encoder.forward(target.inputs());
  r.synthetic = build_synthetic_set(features, source.head, config.synth);

  const LinearHead initial =
      init_target_head(source.head, config.synth.k_prime, config.head_init, derive_seed(config.seed, "head-init"));
  HeadTrainResult trained = train_target_head(initial, r.synthetic, config.head);
  r.head_loss = std::move(trained.epoch_loss);
  r.target_model.encoder = source.encoder;
  r.target_model.head = std::move(trained.head);
  r.target_model.known_classes = k;
  r.target_model.k_prime = config.synth.k_prime;
  r.target_model.seed = config.seed;
  r.target_model.stage = "target-head";

  r.adapted = adapt(r.target_model, target, config.adapt, eval_labels);
  return r;
}

const BaselinePoint& ExperimentResult::best_baseline() const {
  if (baselines.empty()) throw std::logic_error("no baseline points");
  return *std::max_element(baselines.begin(), baselines.end(),
                           [](const auto& a, const auto& b) { return a.metrics.hos < b.metrics.hos; });
}

ExperimentResult run_experiment(const RunConfig& raw) {
  const RunConfig cfg = raw.with_stage_seeds();
  ExperimentResult ex;
  ex.scenario = generate_scenario(cfg.scenario);
  ex.source = train_source(ex.scenario.source.inputs, ex.scenario.source.labels, cfg.scenario.known_classes,
                           cfg.source, derive_seed(cfg.seed, "source"))
                  .snapshot;
  const auto& target = ex.scenario.target;
  ex.rrda = run_rrda(ex.source, UnlabeledView(target), cfg, &target.labels);
  ex.head_only = evaluate_model(ex.rrda.target_model, target.inputs, target.labels, cfg.known_accuracy);
  ex.adapted = evaluate_model(ex.rrda.adapted.model, target.inputs, target.labels, cfg.known_accuracy);
  for (double tau : cfg.baseline_taus) {
    ex.baselines.push_back({tau, threshold_baseline(ex.source, target.inputs, target.labels, tau, cfg.known_accuracy)});
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Sweeps

SweepKind parse_sweep_kind(const std::string& name) {
  if (name == "openness") return SweepKind::openness;
  if (name == "k-prime" || name == "k_prime") return SweepKind::k_prime;
  if (name == "threshold") return SweepKind::threshold;
  throw std::invalid_argument("unknown sweep kind '" + name + "' (openness, k-prime, threshold)");
}

std::string to_string(SweepKind kind) {
  switch (kind) {
    case SweepKind::openness: return "openness";
    case SweepKind::k_prime: return "k-prime";
    case SweepKind::threshold: return "threshold";
  }
  return "?";
}

std::vector<std::string> default_grid(SweepKind kind) {
  switch (kind) {
    case SweepKind::openness: return {"1", "2", "3", "4", "5", "6"};
    case SweepKind::k_prime: return {"1", "3", "6", "10", "15"};
    case SweepKind::threshold: return {"0.1/0.9", "0.2/0.8", "0.25/0.75", "0.3/0.7", "0.4/0.6", "0.5/0.5"};
  }
  return {};
}

namespace {

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad number '" + std::string(s) + "'");
  }
  return v;
}

std::size_t parse_count(std::string_view s) {
  std::size_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("bad count '" + std::string(s) + "'");
  }
  return v;
}

RunConfig config_for_point(SweepKind kind, const std::string& point, const RunConfig& base) {
  RunConfig c = base;
  switch (kind) {
    case SweepKind::openness:
      c.scenario.private_classes = parse_count(point);
      break;
    case SweepKind::k_prime:
      c.synth.k_prime = parse_count(point);
      break;
    case SweepKind::threshold: {
      const auto slash = point.find('/');
      if (slash == std::string::npos) throw std::invalid_argument("threshold point must look like 0.25/0.75");
      c.synth.ce_threshold_frac = parse_double(std::string_view(point).substr(0, slash));
      c.synth.ent_threshold_frac = parse_double(std::string_view(point).substr(slash + 1));
      break;
    }
  }
  return c;
}

}  // namespace

std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<std::string>& grid, const RunConfig& base) {
  if (grid.empty()) throw std::invalid_argument("sweep: empty grid");
  std::vector<SweepRow> rows(grid.size());
  const auto n = static_cast<std::ptrdiff_t>(grid.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto& row = rows[static_cast<std::size_t>(i)];
    row.point = grid[static_cast<std::size_t>(i)];
    try {
      const ExperimentResult ex = run_experiment(config_for_point(kind, row.point, base));
      row.metrics = ex.adapted;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.status = "failed";
      row.error = e.what();
    }
  }
  return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "point,os_star,unk,hos,status\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.metrics) {
      std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f", r.metrics->os_star, r.metrics->unk, r.metrics->hos);
    } else {
      std::snprintf(buf, sizeof(buf), ",,");
    }
    out += r.point + "," + buf + "," + r.status + "\n";
  }
  return out;
}

}  // namespace rrda
