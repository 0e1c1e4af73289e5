#include "rrda/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rrda/config.hpp"
#include "rrda/data.hpp"
#include "rrda/model.hpp"
#include "rrda/rng.hpp"

namespace rrda::cli {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw std::runtime_error(std::string(what) + " not found: " + path.string());
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * v);
  return buf;
}

}  // namespace

void gen_data(const RunConfig& config, const fs::path& out_dir) {
  const RunConfig cfg = config.with_stage_seeds();
  const Scenario s = generate_scenario(cfg.scenario);
  ensure_dir(out_dir);
  write_features(out_dir / "source.feat", s.source);
  write_features(out_dir / "target.feat", s.target);
}

void train_source_cmd(const RunConfig& config, const fs::path& data_dir, const fs::path& out_dir) {
  const fs::path file = data_dir / "source.feat";
  require_file(file, "source feature file");
  const FeatureFile data = read_features(file);
  if (!data.has_labels) throw std::runtime_error(file.string() + " has no labels");
  std::size_t classes = 0;
  for (auto l : data.labels) classes = std::max(classes, l + 1);
  const RunConfig cfg = config.with_stage_seeds();
  const auto result = train_source(data.features, data.labels, classes, cfg.source, derive_seed(cfg.seed, "source"));
  ensure_dir(out_dir);
  save_snapshot(result.snapshot, out_dir / "source.snap");
}

void rrda_cmd(const RunConfig& config, const fs::path& source_snapshot, const fs::path& target_file,
              const fs::path& out_dir) {
  require_file(source_snapshot, "source snapshot");
  require_file(target_file, "target feature file");
  const ModelSnapshot source = load_snapshot(source_snapshot);
  const FeatureFile target = read_features(target_file);
  const RunConfig cfg = config.with_stage_seeds();
  const RrdaResult r =
      run_rrda(source, UnlabeledView(target.features), cfg, target.has_labels ? &target.labels : nullptr);
  ensure_dir(out_dir);
  save_snapshot(r.target_model, out_dir / "target_head.snap");
  save_snapshot(r.adapted.model, out_dir / "adapted.snap");
  write_features(out_dir / "synthetic.feat", r.synthetic.features, &r.synthetic.labels);
  write_trace_jsonl(out_dir / "trace.jsonl", r.adapted.trace);
}

OpenSetMetrics eval_cmd(const RunConfig& config, const fs::path& snapshot, const fs::path& target_file,
                        std::optional<double> tau, const fs::path& out_dir, std::ostream& out) {
  require_file(snapshot, "snapshot");
  require_file(target_file, "target feature file");
  const ModelSnapshot model = load_snapshot(snapshot);
  const FeatureFile target = read_features(target_file);
  if (!target.has_labels) throw std::runtime_error(target_file.string() + " has no labels to evaluate against");
  OpenSetMetrics m;
  if (tau) {
    if (model.k_prime != 0) throw std::runtime_error("--tau applies to source snapshots only");
    m = threshold_baseline(model, target.features, target.labels, *tau, config.known_accuracy);
  } else {
    if (model.k_prime == 0) throw std::runtime_error("source snapshot has no unknown classes; pass --tau");
    m = evaluate_model(model, target.features, target.labels, config.known_accuracy);
  }
  out << "os_star " << percent(m.os_star) << "\nunk " << percent(m.unk) << "\nhos " << percent(m.hos) << "\n";
  ensure_dir(out_dir);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "os_star,unk,hos\n%.6f,%.6f,%.6f\n", m.os_star, m.unk, m.hos);
  write_text(out_dir / "metrics.csv", buf);
  return m;
}

std::vector<SweepRow> sweep_cmd(const RunConfig& config, SweepKind kind, const std::vector<std::string>& grid,
                                const fs::path& out_dir, std::ostream& out) {
  const auto rows = run_sweep(kind, grid.empty() ? default_grid(kind) : grid, config);
  ensure_dir(out_dir);
  const std::string csv = format_sweep_csv(rows);
  write_text(out_dir / ("sweep-" + to_string(kind) + ".csv"), csv);
  out << csv;
  for (const auto& r : rows) {
    if (r.status != "ok") out << "point " << r.point << " failed: " << r.error << "\n";
  }
  return rows;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Open-set source-free domain adaptation with synthetic unknown classes"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  app.add_option("--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed (overrides run.seed)");
  app.add_option("--set", overrides, "override, section.key=value (repeatable)");
  app.add_option("--out", out_dir, "output directory");

  auto* gen = app.add_subcommand("gen-data", "write source/target feature files");

  std::string data_dir;
  auto* train = app.add_subcommand("train-source", "train the source model");
  train->add_option("--data", data_dir, "directory holding source.feat (default: --out)");

  std::string source_path, target_path;
  auto* rrda = app.add_subcommand("rrda", "synthesize, train the target head, adapt");
  rrda->add_option("--source", source_path, "source snapshot")->required();
  rrda->add_option("--target", target_path, "target feature file")->required();

  std::string snapshot_path, eval_target;
  std::optional<double> tau;
  auto* eval = app.add_subcommand("eval", "open-set metrics of a snapshot");
  eval->add_option("--snapshot", snapshot_path, "model snapshot")->required();
  eval->add_option("--target", eval_target, "labeled target feature file")->required();
  eval->add_option("--tau", tau, "entropy threshold fraction (source snapshots)");

  std::string kind_name;
  std::vector<std::string> grid;
  auto* sweep = app.add_subcommand("sweep", "sensitivity sweep");
  sweep->add_option("kind", kind_name, "openness | k-prime | threshold")->required();
  sweep->add_option("--grid", grid, "grid points (default: built-in grid)")->delimiter(',');

  auto* show = app.add_subcommand("show-config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const auto& o : overrides) apply_override(cfg, o);
    if (seed) cfg.seed = *seed;

    const fs::path out_path(out_dir);
    if (*gen) {
      gen_data(cfg, out_path);
    } else if (*train) {
      train_source_cmd(cfg, data_dir.empty() ? out_path : fs::path(data_dir), out_path);
    } else if (*rrda) {
      rrda_cmd(cfg, source_path, target_path, out_path);
    } else if (*eval) {
      eval_cmd(cfg, snapshot_path, eval_target, tau, out_path, out);
    } else if (*sweep) {
      const auto rows = sweep_cmd(cfg, parse_sweep_kind(kind_name), grid, out_path, out);
      for (const auto& r : rows) {
        if (r.status != "ok") return 3;
      }
    } else if (*show) {
      out << format_config(cfg);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rrda::cli
