#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cdsim/config.hpp"
#include "cdsim/errors.hpp"
#include "cdsim/experiments.hpp"
#include "cdsim/random.hpp"

namespace cdsim {
namespace {

namespace fs = std::filesystem;

RunConfig from_yaml(const std::string& text) {
  return interpret(resolve_config(parse_yaml(text)));
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cdsim_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string first_line(const fs::path& file) {
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  return line;
}

TEST(Config, DefaultsDescribeAForwardRun) {
  const RunConfig c = from_yaml("{}");
  EXPECT_EQ(c.sweep.base.kind, ExperimentKind::forward);
  EXPECT_EQ(c.sweep.base.protocol, "I-I");
  EXPECT_EQ(c.sweep.base.tau, 10.0);
  EXPECT_EQ(c.sweep.base.n, 10000u);
  EXPECT_EQ(c.sweep.base.wait.kind, WaitPolicy::Kind::uniform);
  EXPECT_DOUBLE_EQ(c.sweep.base.wait.t_max, 20 * std::numbers::pi);
  EXPECT_EQ(c.sweep.axis, SweepAxis::none);
  EXPECT_EQ(c.cd.grid_size, 51u);
  EXPECT_EQ(c.cd.moments, MomentSource::reference_run);
  EXPECT_EQ(c.run_dir(), fs::path("out") / "forward" / "default");
}

TEST(Config, UnknownKeyNamesTheKey) {
  try {
    from_yaml("betaa_f: 0.3\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("betaa_f"), std::string::npos) << e.what();
  }
  try {
    from_yaml("cd:\n  muu: 1.0\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("cd.muu"), std::string::npos) << e.what();
  }
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_THROW(from_yaml("n: lots\n"), ConfigError);
  EXPECT_THROW(from_yaml("n: 2\n"), ConfigError);
  EXPECT_THROW(from_yaml("experiment: sideways\n"), ConfigError);
  EXPECT_THROW(from_yaml("protocol: X-X\n"), ConfigError);
  EXPECT_THROW(from_yaml("cd:\n  moments: guess\n"), ConfigError);
  EXPECT_THROW(from_yaml("label: a/b\n"), ConfigError);
  EXPECT_THROW(parse_yaml("a: [1, 2\n"), ConfigError);
}

TEST(Config, YamlScalarTyping) {
  const nlohmann::json j =
      parse_yaml("a: 1\nb: -2.5e-3\nc: .inf\nd: hello\ne: inf\nf: true\ng: '7'\nh: .5\n");
  EXPECT_TRUE(j["a"].is_number_integer());
  EXPECT_DOUBLE_EQ(j["b"].get<double>(), -2.5e-3);
  EXPECT_TRUE(std::isinf(j["c"].get<double>()));
  EXPECT_EQ(j["d"], "hello");
  EXPECT_EQ(j["e"], "inf");
  EXPECT_EQ(j["f"], true);
  EXPECT_EQ(j["g"], "7");
  EXPECT_DOUBLE_EQ(j["h"].get<double>(), 0.5);
  EXPECT_EQ(from_yaml("label: inf\n").label, "inf");
}

TEST(Config, Overrides) {
  nlohmann::json doc = resolve_config(parse_yaml("{}"));
  set_override(doc, "n", 123);
  set_override(doc, "cd.grid_size", 11);
  set_override(doc, "output.dir", "elsewhere");
  const RunConfig c = interpret(doc);
  EXPECT_EQ(c.sweep.base.n, 123u);
  EXPECT_EQ(c.cd.grid_size, 11u);
  EXPECT_EQ(c.out_dir, fs::path("elsewhere"));
  EXPECT_THROW(set_override(doc, "cd.nope", 1), ConfigError);
}

TEST(Config, SweepsAndWaits) {
  const RunConfig c = from_yaml(
      "experiment: cyclic\n"
      "wait: {kind: fixed, fixed: 10.0}\n"
      "sweep: {axis: tau, tau: [0.1, 1, 10]}\n");
  EXPECT_EQ(c.sweep.axis, SweepAxis::tau);
  EXPECT_EQ(c.sweep.tau, (std::vector<double>{0.1, 1.0, 10.0}));
  EXPECT_EQ(c.sweep.base.wait.kind, WaitPolicy::Kind::fixed);
  EXPECT_EQ(c.sweep.base.wait.t_min, 10.0);
  const RunConfig l = from_yaml(
      "experiment: linear_cycle\nmodel: H_NI\n"
      "sweep: {axis: beta_f_v, beta_f: [0.2, 0.4], v: [1e-3, 1e-4, 1e-5]}\n");
  EXPECT_EQ(expand(l.sweep).size(), 6u);
}

TEST(Config, ShippedConfigsInterpret) {
  const fs::path root = fs::path(CDSIM_SOURCE_DIR) / "configs";
  ASSERT_TRUE(fs::exists(root / "defaults.yaml"));
  EXPECT_EQ(parse_yaml(default_config_text()), default_config());
  int count = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.path().extension() != ".yaml") continue;
    SCOPED_TRACE(entry.path().string());
    EXPECT_NO_THROW(interpret(resolve_config(load_config_file(entry.path()))));
    ++count;
  }
  EXPECT_GE(count, 2);
}

TEST(WaitPolicyTest, DrawsAreBoundedAndDeterministic) {
  const WaitPolicy w = WaitPolicy::uniform(1.0, 3.0);
  const auto a = w.draw(1000, 5);
  EXPECT_EQ(a, w.draw(1000, 5));
  EXPECT_NE(a, w.draw(1000, 6));
  for (double t : a) {
    EXPECT_GE(t, 1.0);
    EXPECT_LE(t, 3.0);
  }
  for (double t : WaitPolicy::fixed(2.5).draw(10, 1)) EXPECT_EQ(t, 2.5);
  for (double t : WaitPolicy::none().draw(10, 1)) EXPECT_EQ(t, 0.0);
  EXPECT_THROW(WaitPolicy::uniform(3.0, 1.0).validate(), ConfigError);
  EXPECT_THROW(WaitPolicy::fixed(-1.0).validate(), ConfigError);
}

TEST(Sweep, ExpandSingletonAndSeeds) {
  SweepSpec s;
  s.base.seed = 77;
  auto one = expand(s);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].seed, derive_seed(77, 0));

  s.axis = SweepAxis::tau;
  s.tau = {0.5};
  EXPECT_EQ(expand(s).size(), 1u);
  s.tau = {0.1, 1.0, 10.0};
  const auto runs = expand(s);
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_EQ(runs[2].tau, 10.0);
  EXPECT_NE(runs[0].seed, runs[1].seed);
  s.common_seed = true;
  for (const auto& r : expand(s)) EXPECT_EQ(r.seed, 77u);

  s.tau.clear();
  EXPECT_THROW(expand(s), ConfigError);
}

TEST(Experiments, SeedDeterminism) {
  RunSpec spec;
  spec.protocol = "I-N";
  spec.tau = 0.5;
  spec.n = 64;
  spec.seed = 9;
  const RunRecord a = run(spec);
  const RunRecord b = run(spec);
  EXPECT_EQ(a.energies, b.energies);
  spec.seed = 10;
  EXPECT_NE(run(spec).energies, a.energies);
  ASSERT_EQ(a.energies.size(), 64u);
  const EnergyStats s = energy_stats(a.energies);
  EXPECT_EQ(s.variance, a.stats.variance);
  EXPECT_EQ(s.mean, a.stats.mean);
}

TEST(Experiments, ImmediateQuenchAndReturnLeavesTheShell) {
  const RunRecord r = run_cyclic(protocol_by_name("I-N"), 1e-6, 0, WaitPolicy::none(), 200, 3);
  EXPECT_LT(r.stats.variance, 1e-12);
  EXPECT_NEAR(r.stats.mean, 1.0, 1e-6);
}

TEST(Experiments, LinearCycleWithVanishingExcursion) {
  const RunRecord r = run_linear_cycle(nonintegrable_model(), 1e-6, 1e-3, 50, 4);
  EXPECT_LT(r.stats.variance, 1e-14);
  EXPECT_DOUBLE_EQ(r.tau_or_v(), 1e-3);
  EXPECT_DOUBLE_EQ(r.beta_f(), 1e-6);
}

TEST(Experiments, RunRejectsBadArguments) {
  RunSpec spec;
  spec.n = 10;
  spec.tau = -1.0;
  EXPECT_THROW(run(spec), OutOfRange);
  RunOptions o;
  o.dt_scale = 0.0;
  spec.tau = 1.0;
  EXPECT_THROW(run(spec, o), OutOfRange);
}

TEST(Experiments, SweepAggregatesFailures) {
  SweepSpec s;
  s.base.protocol = "I-I";
  s.base.n = 16;
  s.axis = SweepAxis::tau;
  s.tau = {0.2, -1.0, 0.1};
  const auto records = sweep(s);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_TRUE(records[0].ok());
  EXPECT_FALSE(records[1].ok());
  EXPECT_FALSE(records[1].error.empty());
  EXPECT_TRUE(records[2].ok());
  EXPECT_NE(summary_row(records[1]).find("nan"), std::string::npos);
}

TEST(Experiments, ConfigHashIsStable) {
  const nlohmann::json a = {{"x", 1}, {"y", "z"}};
  EXPECT_EQ(config_hash(a), config_hash(nlohmann::json::parse(a.dump())));
  EXPECT_EQ(config_hash(a).size(), 16u);
  EXPECT_NE(config_hash(a), config_hash({{"x", 2}, {"y", "z"}}));
}

TEST(Persistence, RunRoundTrip) {
  const fs::path dir = scratch("run");
  nlohmann::json doc = resolve_config(parse_yaml("protocol: I-N\ntau: 0.3\nn: 40\nseed: 5\n"));
  const RunConfig cfg = interpret(doc);
  const RunRecord r = run(cfg.sweep.base);
  write_run(dir, r, cfg.document);

  EXPECT_EQ(first_line(dir / "summary.csv"), kSummaryHeader);
  EXPECT_EQ(read_energies(dir / "energies.csv"), r.energies);

  std::ifstream in(dir / "manifest.json");
  const nlohmann::json m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("config"), cfg.document);
  EXPECT_EQ(m.at("config_hash"), config_hash(cfg.document));
  EXPECT_DOUBLE_EQ(m.at("record").at("stats").at("variance").get<double>(), r.stats.variance);

  // Re-running from the manifest reproduces the statistics.
  const RunRecord again = run(interpret(resolve_config(load_config_file(dir / "manifest.json"))).sweep.base);
  EXPECT_EQ(again.energies, r.energies);
  fs::remove_all(dir);
}

TEST(Persistence, SweepLayout) {
  const fs::path dir = scratch("sweep");
  const RunConfig cfg = from_yaml(
      "experiment: cyclic\nprotocol: I-I\nn: 12\n"
      "wait: {kind: none}\n"
      "sweep: {axis: tau, tau: [0.05, 0.1]}\n");
  const auto records = sweep(cfg.sweep);
  write_sweep(dir, records, cfg.document);

  std::ifstream in(dir / "summary.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], kSummaryHeader);
  EXPECT_EQ(lines[1].rfind("cyclic,I-I,", 0), 0u);
  for (const char* run_dir : {"run_000", "run_001"}) {
    EXPECT_TRUE(fs::exists(dir / run_dir / "energies.csv"));
    EXPECT_TRUE(fs::exists(dir / run_dir / "manifest.json"));
  }
  EXPECT_EQ(read_energies(dir / "run_001" / "energies.csv"), records[1].energies);

  // A per-run manifest leads back to the whole sweep's config.
  EXPECT_EQ(load_config_file(dir / "run_001" / "manifest.json"), cfg.document);
  EXPECT_EQ(load_config_file(dir / "manifest.json"), cfg.document);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace cdsim
