#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rrda/cli.hpp"
#include "rrda/config.hpp"

using namespace rrda;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("rrda_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rrda");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Small enough to run the whole chain in a few seconds.
const std::vector<std::string> kQuick = {
    "--set", "scenario.samples_per_class=60", "--set", "source.epochs=15",
    "--set", "classifier.epochs=10",          "--set", "adapt.epochs=3",
};

std::vector<std::string> with_quick(std::vector<std::string> args) {
  std::vector<std::string> all = kQuick;
  all.insert(all.end(), args.begin(), args.end());
  return all;
}

}  // namespace

TEST_CASE("config text round trip") {
  RunConfig c;
  c.seed = 42;
  c.scenario.rotation_deg = 12.5;
  c.scenario.translation = {0.25, -1.0};
  c.source.hidden_dims = {8, 4};
  c.synth.lambda_reg = 0.0;
  c.synth.optimize = false;
  c.head_init = HeadInit::random;
  c.adapt.method = AdaptMethod::aad;
  c.adapt.marginal = MarginalMode::dataset;
  c.adapt.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  c.baseline_taus = {0.2, 0.4};
  c.known_accuracy = KnownAccuracy::overall;

  const std::string text = format_config(c);
  const RunConfig back = parse_config(text);
  CHECK(format_config(back) == text);
  CHECK(back.seed == 42);
  CHECK(back.adapt.lr == c.adapt.lr);
  CHECK(back.scenario.translation == c.scenario.translation);
  CHECK(back.source.hidden_dims == c.source.hidden_dims);
  CHECK(back.adapt.method == AdaptMethod::aad);
  CHECK(back.head_init == HeadInit::random);
  CHECK_FALSE(back.synth.optimize);
  CHECK(back.baseline_taus == c.baseline_taus);

  CHECK(format_config(parse_config("")) == format_config(RunConfig{}));
  for (const auto& key : config_keys()) CHECK(text.find(key.substr(key.find('.') + 1) + " = ") != std::string::npos);
}

TEST_CASE("config parsing details") {
  const RunConfig c = parse_config(
      "# comment\n"
      "; another\n"
      "[run]\n"
      "seed = 7   # trailing\n"
      "\n"
      "[synth]\n"
      "k_prime = 5\n");
  CHECK(c.seed == 7);
  CHECK(c.synth.k_prime == 5);

  RunConfig o;
  apply_override(o, "adapt.method=aad");
  CHECK(o.adapt.method == AdaptMethod::aad);
  apply_override(o, "scenario.translation = 1, 2");
  CHECK(o.scenario.translation == std::vector<double>{1.0, 2.0});
}

TEST_CASE("config errors name the key and line") {
  try {
    parse_config("[run]\nseed = 1\n[synth]\nbogus = 3\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "synth.bogus");
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  try {
    parse_config("[synth]\nsteps = many\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "synth.steps");
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[run]\nseed\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[adapt]\nmethod = nrc\n"), ConfigError);
  RunConfig c;
  CHECK_THROWS_AS(apply_override(c, "run.seed"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "nosuch.key=1"), ConfigError);
}

TEST_CASE("gen-data writes both files deterministically") {
  TempDir a("gen_a"), b("gen_b");
  CHECK(run_cli({"--seed", "3", "--out", a.path.string(), "gen-data"}).code == 0);
  CHECK(run_cli({"--seed", "3", "--out", b.path.string(), "gen-data"}).code == 0);
  const std::string src = slurp(a.path / "source.feat");
  const std::string tgt = slurp(a.path / "target.feat");
  CHECK(src.rfind("osda-features v1 600 2 1\n", 0) == 0);
  CHECK(tgt.rfind("osda-features v1 1200 2 1\n", 0) == 0);
  CHECK(src == slurp(b.path / "source.feat"));
  CHECK(tgt == slurp(b.path / "target.feat"));

  TempDir c("gen_c");
  CHECK(run_cli({"--seed", "4", "--out", c.path.string(), "gen-data"}).code == 0);
  CHECK(src != slurp(c.path / "source.feat"));
}

TEST_CASE("bad config key fails with the key and line on stderr") {
  TempDir d("badcfg");
  const fs::path cfg = d.path / "bad.ini";
  std::ofstream(cfg) << "[scenario]\nknown_classes = 3\nwobble = 1\n";
  const auto r = run_cli({"--config", cfg.string(), "--out", d.path.string(), "gen-data"});
  CHECK(r.code != 0);
  CHECK(r.err.find("scenario.wobble") != std::string::npos);
  CHECK(r.err.find("line 3") != std::string::npos);
}

TEST_CASE("missing snapshot path exits non-zero") {
  TempDir d("missing");
  const auto r = run_cli({"--out", d.path.string(), "eval", "--snapshot", (d.path / "nope.snap").string(), "--target",
                          (d.path / "nope.feat").string()});
  CHECK(r.code != 0);
  CHECK(r.err.find("error:") == 0);
  CHECK(run_cli({"--out", d.path.string(), "rrda"}).code != 0);
}

TEST_CASE("full command chain is reproducible") {
  TempDir a("chain_a"), b("chain_b");
  for (const auto* dir : {&a, &b}) {
    const std::string out = dir->path.string();
    REQUIRE(run_cli(with_quick({"--seed", "7", "--out", out, "gen-data"})).code == 0);
    REQUIRE(run_cli(with_quick({"--seed", "7", "--out", out, "train-source"})).code == 0);
    REQUIRE(run_cli(with_quick({"--seed", "7", "--out", out, "rrda", "--source", out + "/source.snap", "--target",
                                out + "/target.feat"}))
                .code == 0);
  }
  for (const char* f : {"source.feat", "target.feat", "source.snap", "target_head.snap", "adapted.snap",
                        "synthetic.feat", "trace.jsonl"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(a.path / f));
    CHECK(slurp(a.path / f) == slurp(b.path / f));
  }

  const std::string out = a.path.string();
  const auto e1 = run_cli(with_quick({"--seed", "7", "--out", out, "eval", "--snapshot", out + "/adapted.snap",
                                      "--target", out + "/target.feat"}));
  REQUIRE(e1.code == 0);
  CHECK(e1.out.rfind("os_star ", 0) == 0);
  CHECK(e1.out.find("\nunk ") != std::string::npos);
  CHECK(e1.out.find("\nhos ") != std::string::npos);
  const std::string csv = slurp(a.path / "metrics.csv");
  const auto e2 = run_cli(with_quick({"--seed", "7", "--out", out, "eval", "--snapshot", out + "/adapted.snap",
                                      "--target", out + "/target.feat"}));
  CHECK(e1.out == e2.out);
  CHECK(csv == slurp(a.path / "metrics.csv"));

  // source snapshots are evaluated through the entropy threshold
  CHECK(run_cli({"--out", out, "eval", "--snapshot", out + "/source.snap", "--target", out + "/target.feat"}).code != 0);
  CHECK(run_cli({"--out", out, "eval", "--snapshot", out + "/source.snap", "--target", out + "/target.feat", "--tau",
                 "0.5"})
            .code == 0);
}

TEST_CASE("show-config reflects overrides") {
  const auto r = run_cli({"--seed", "9", "--set", "synth.k_prime=4", "show-config"});
  REQUIRE(r.code == 0);
  const RunConfig c = parse_config(r.out);
  CHECK(c.seed == 9);
  CHECK(c.synth.k_prime == 4);
}
