// cdsim: run experiments, tabulate gauge potentials, emit slow-driving
// predictions and run the self-check suite.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cdsim/agp.hpp"
#include "cdsim/config.hpp"
#include "cdsim/errors.hpp"
#include "cdsim/experiments.hpp"
#include "cdsim/swtheory.hpp"
#include "checks.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<long long> n;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool dump = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_config) {
  if (with_config) {
    cmd->add_option("config", f.config, "YAML config or a manifest.json to re-run")
        ->required();
  }
  cmd->add_option("--seed", f.seed, "Override the base seed");
  cmd->add_option("--n", f.n, "Override the number of trajectories");
  cmd->add_option("--threads", f.threads, "Cap the number of worker threads");
  cmd->add_option("--out", f.out, "Override the output root directory");
  cmd->add_flag("--dump-trajectories", f.dump,
                "Write strided trajectories of the first few points");
}

void apply_threads(const CommonFlags& f) {
  if (f.threads) {
    if (*f.threads < 1) throw cdsim::ConfigError("--threads must be at least 1");
    omp_set_num_threads(*f.threads);
  }
}

cdsim::RunConfig load(const CommonFlags& f) {
  nlohmann::json doc = cdsim::resolve_config(cdsim::load_config_file(f.config));
  if (f.seed) cdsim::set_override(doc, "seed", *f.seed);
  if (f.n) cdsim::set_override(doc, "n", *f.n);
  if (f.out) cdsim::set_override(doc, "output.dir", *f.out);
  if (f.dump) cdsim::set_override(doc, "output.dump_trajectories", true);
  return cdsim::interpret(doc);
}

void print_record(const cdsim::RunRecord& r) {
  if (r.ok()) {
    std::printf("%s  sigma2 = %.6e +- %.2e  (%.1fs)\n", cdsim::summary_row(r).c_str(),
                r.stats.variance, r.stats.std_error_of_variance, r.wall_seconds);
  } else {
    std::printf("%s  FAILED: %s\n", cdsim::summary_row(r).c_str(), r.error.c_str());
  }
}

int cmd_run(const CommonFlags& f) {
  apply_threads(f);
  const cdsim::RunConfig cfg = load(f);
  cdsim::RunOptions opts;
  opts.cd = cfg.cd;
  cdsim::TrajectoryDump dump;
  dump.max_points = cfg.dump_max_points;
  dump.stride = cfg.dump_stride;
  if (cfg.dump_trajectories) opts.dump = &dump;

  const auto dir = cfg.run_dir();
  int status = kExitOk;
  if (cfg.sweep.axis == cdsim::SweepAxis::none) {
    const cdsim::RunRecord r = cdsim::run(cfg.sweep.base, opts);
    cdsim::write_run(dir, r, cfg.document);
    print_record(r);
  } else {
    const auto records = cdsim::sweep(cfg.sweep, opts);
    cdsim::write_sweep(dir, records, cfg.document);
    for (const auto& r : records) {
      print_record(r);
      if (!r.ok()) status = kExitNumerical;
    }
  }
  if (opts.dump) cdsim::write_trajectories(dir / "trajectories.csv", dump);
  std::printf("wrote %s\n", dir.string().c_str());
  return status;
}

int cmd_agp(const CommonFlags& f) {
  apply_threads(f);
  const cdsim::RunConfig cfg = load(f);
  const auto& protocol = cdsim::protocol_by_name(cfg.sweep.base.protocol);
  cdsim::TabulateOptions t;
  t.order = cfg.agp_order;
  t.grid_size = cfg.cd.grid_size;
  t.mu = cfg.cd.mu;
  t.reference_tau = cfg.cd.reference_tau;
  t.seed = cfg.cd.seed;
  t.n = cfg.cd.reference_n;
  t.limits.max_degree = cfg.cd.max_degree;
  t.moments = cfg.cd.moments;
  const auto tables = cdsim::tabulate_orders(protocol, t);
  const cdsim::AgpTable& table = tables.back();

  // Per grid point: action by order, and whether it never increases.
  nlohmann::json grid = nlohmann::json::array();
  bool monotone = true;
  double worst_residual = 0.0;
  for (std::size_t k = 0; k < table.beta_grid.size(); ++k) {
    nlohmann::json actions = nlohmann::json::array();
    for (std::size_t l = 0; l < tables.size(); ++l) {
      const double a = tables[l].solutions[k].action_value;
      actions.push_back(a);
      if (l > 0 && a > tables[l - 1].solutions[k].action_value * (1.0 + 1e-10)) {
        monotone = false;
      }
    }
    const auto& s = table.solutions[k];
    if (s.zero_action > 0.0) {
      worst_residual = std::max(worst_residual, s.residual_norm / s.zero_action);
    }
    grid.push_back({{"beta", table.beta_grid[k]}, {"action_by_order", actions}});
  }

  nlohmann::json queries = nlohmann::json::array();
  for (double beta : cfg.agp_query_beta) {
    queries.push_back({{"beta", beta},
                       {"potential", cdsim::to_json(cdsim::agp_polynomial(table, beta))}});
  }

  const auto dir = cfg.out_dir / "agp" / cfg.label;
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "agp_table.json") << cdsim::to_json(table, cfg.agp_embed_basis).dump()
                                        << '\n';
  const nlohmann::json manifest = {{"software", {{"name", "cdsim"}, {"version", "1.0.0"}}},
                                   {"config", cfg.document},
                                   {"config_hash", cdsim::config_hash(cfg.document)},
                                   {"monotone_in_order", monotone},
                                   {"max_relative_residual", worst_residual},
                                   {"grid", grid},
                                   {"queries", queries}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  std::printf("%s order %d, %zu grid points: action monotone in order: %s, "
              "max residual_norm/||dH/dbeta||^2 = %.3e\nwrote %s\n",
              protocol.name.c_str(), table.order, table.beta_grid.size(),
              monotone ? "yes" : "no", worst_residual, dir.string().c_str());
  return kExitOk;
}

struct PredictFlags {
  std::string model = "H_I";
  std::vector<double> betas;
  std::string grid;
  double E0 = 1.0;
  std::string out;
};

int cmd_predict(const PredictFlags& f) {
  std::vector<double> betas = f.betas;
  if (!f.grid.empty()) {
    // lo:hi:count
    double lo = 0, hi = 0;
    long count = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(f.grid);
    if (!(is >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':' || count < 1 ||
        hi < lo) {
      throw cdsim::ConfigError("--grid expects lo:hi:count with lo <= hi, count >= 1");
    }
    for (long k = 0; k < count; ++k) {
      betas.push_back(count == 1 ? lo : lo + (hi - lo) * double(k) / double(count - 1));
    }
  }
  if (betas.empty()) throw cdsim::ConfigError("predict needs --beta or --grid");
  const auto pred = cdsim::sw_prediction(f.model);
  std::ostringstream csv;
  csv << "model,beta,sigma2_sw\n";
  csv.precision(10);
  for (double b : betas) {
    if (b < 0.0) throw cdsim::ConfigError("beta must be non-negative");
    csv << f.model << ',' << b << ',' << pred.variance(b, f.E0) << '\n';
  }
  if (f.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream(f.out) << csv.str();
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterdiabatic driving of classical nonlinear oscillators"};
  app.require_subcommand(1);

  CommonFlags run_flags, agp_flags, check_flags;
  auto* run = app.add_subcommand("run", "Run an experiment or sweep from a config");
  add_common(run, run_flags, true);
  auto* agp = app.add_subcommand("agp", "Tabulate the variational gauge potential");
  add_common(agp, agp_flags, true);

  PredictFlags pf;
  auto* predict = app.add_subcommand("predict", "Slow-driving variance predictions as CSV");
  predict->add_option("--model", pf.model, "H_I or H_NI");
  predict->add_option("--beta", pf.betas, "beta values");
  predict->add_option("--grid", pf.grid, "lo:hi:count uniform beta grid");
  predict->add_option("--E0", pf.E0, "shell energy");
  predict->add_option("--out", pf.out, "CSV file (default stdout)");

  auto* check = app.add_subcommand("check", "Run the invariant and oracle suite");
  check->add_option("--threads", check_flags.threads, "Cap the number of worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*agp) return cmd_agp(agp_flags);
    if (*predict) return cmd_predict(pf);
    if (*check) {
      apply_threads(check_flags);
      return cdsim_tools::run_checks(std::cout) ? kExitOk : kExitNumerical;
    }
  } catch (const cdsim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const cdsim::NonFinite& e) {
    std::fprintf(stderr, "numerical error (dynamics, point %zu): %s\n", e.point_index(),
                 e.what());
    return kExitNumerical;
  } catch (const cdsim::Error& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return kExitOk;
}
