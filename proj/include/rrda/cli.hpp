#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rrda/eval.hpp"
#include "rrda/pipeline.hpp"

namespace rrda::cli {

namespace fs = std::filesystem;

/// Writes `source.feat` and `target.feat` (target keeps its labels for evaluation).
void gen_data(const RunConfig& config, const fs::path& out_dir);

/// Trains the source model on `<data_dir>/source.feat`; writes `<out_dir>/source.snap`.
void train_source_cmd(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir);

/// Runs synthesis, head training and adaptation. Writes `target_head.snap`,
/// `adapted.snap`, `synthetic.feat` and `trace.jsonl` under `out_dir`. Target
/// labels, when the file has them, only feed the metric trace.
void rrda_cmd(const RunConfig& config, const fs::path& source_snapshot, const fs::path& target_file,
              const fs::path& out_dir);

/// Metrics of a snapshot on a labeled target file; source snapshots need `tau`.
/// Prints the triple as percentages and writes `<out_dir>/metrics.csv`.
OpenSetMetrics eval_cmd(const RunConfig& config, const fs::path& snapshot, const fs::path& target_file,
                        std::optional<double> tau, const fs::path& out_dir, std::ostream& out);

/// Writes `<out_dir>/sweep-<kind>.csv`.
std::vector<SweepRow> sweep_cmd(const RunConfig& config, SweepKind kind, const std::vector<std::string>& grid,
                                const fs::path& out_dir, std::ostream& out);

/// Full command-line entry point. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rrda::cli
