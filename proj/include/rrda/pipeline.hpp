#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rrda/adapt.hpp"
#include "rrda/classifier.hpp"
#include "rrda/data.hpp"
#include "rrda/eval.hpp"
#include "rrda/model.hpp"
#include "rrda/synthgen.hpp"

namespace rrda {

/// Every knob of one end-to-end run. Stage seeds are derived from `seed` by
/// `with_stage_seeds`; the per-stage seed fields are overwritten there.
struct RunConfig {
  std::uint64_t seed = 0;
  ScenarioConfig scenario;
  SourceTrainConfig source;
  SynthConfig synth;
  HeadInit head_init = HeadInit::source;
  HeadTrainConfig head;
  AdaptConfig adapt;
  std::vector<double> baseline_taus = {0.3, 0.5, 0.7};
  KnownAccuracy known_accuracy = KnownAccuracy::per_class_mean;

  RunConfig with_stage_seeds() const;
};

struct RrdaResult {
  SyntheticSet synthetic;
  ModelSnapshot target_model;  // encoder from the source model, freshly trained (K+K')-way head
  std::vector<double> head_loss;
  AdaptResult adapted;
};

/// Synthetic generation -> target head training -> adaptation, from a
/// source model and unlabeled target inputs. `eval_labels` only feed the
/// per-epoch metric trace.
RrdaResult run_rrda(const ModelSnapshot& source, UnlabeledView target, const RunConfig& config,
                    const std::vector<std::size_t>* eval_labels = nullptr);

struct BaselinePoint {
  double tau = 0.0;
  OpenSetMetrics metrics;
};

struct ExperimentResult {
  Scenario scenario;
  ModelSnapshot source;
  RrdaResult rrda;
  OpenSetMetrics head_only;   // target head before adaptation
  OpenSetMetrics adapted;     // final model
  std::vector<BaselinePoint> baselines;
  const BaselinePoint& best_baseline() const;
};

/// Generates the scenario, trains the source model and runs the pipeline.
ExperimentResult run_experiment(const RunConfig& config);

enum class SweepKind { openness, k_prime, threshold };

SweepKind parse_sweep_kind(const std::string& name);
std::string to_string(SweepKind kind);
std::vector<std::string> default_grid(SweepKind kind);

struct SweepRow {
  std::string point;
  std::optional<OpenSetMetrics> metrics;
  std::string status;  // "ok" or "failed"
  std::string error;
};

/// One full experiment per grid point, all sharing the base seed. Failures are
/// recorded per row and the sweep continues. Rows come back in grid order.
std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<std::string>& grid, const RunConfig& base);

/// Header `point,os_star,unk,hos,status`.
std::string format_sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace rrda
