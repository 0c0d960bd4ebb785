#include "cdsim/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdsim/errors.hpp"
#include "cdsim/random.hpp"

namespace cdsim {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

RunRecord finish_record(RunSpec spec, const Ensemble& final_state,
                        const PhasePolynomial& H, const RunOptions& opts,
                        Clock::time_point t0) {
  RunRecord r;
  r.spec = std::move(spec);
  r.energies = point_energies(final_state.points, H);
  r.stats = energy_stats(r.energies);
  r.wall_seconds = seconds_since(t0);
  nlohmann::json cfg = {{"spec", to_json(r.spec)},
                        {"cd",
                         {{"mu", opts.cd.mu},
                          {"grid_size", opts.cd.grid_size},
                          {"reference_tau", opts.cd.reference_tau},
                          {"reference_n", opts.cd.reference_n},
                          {"seed", opts.cd.seed},
                          {"max_degree", opts.cd.max_degree},
                          {"moments", to_string(opts.cd.moments)}}},
                        {"dt_scale", opts.dt_scale}};
  r.config_hash = config_hash(cfg);
  return r;
}

std::shared_ptr<const AgpTable> table_for(const ProtocolSpec& protocol,
                                          int cd_order, const RunOptions& opts) {
  if (cd_order < 0) throw OutOfRange("cd_order must be non-negative");
  if (cd_order == 0) return nullptr;
  AgpCache& cache = opts.cache ? *opts.cache : AgpCache::global();
  return cache.get(protocol, opts.cd, cd_order);
}

double leg_dt(const RampSchedule& schedule, double dt, const RunOptions& opts) {
  if (!(opts.dt_scale > 0.0)) throw OutOfRange("dt_scale must be positive");
  return (dt > 0.0 ? dt : default_dt(schedule)) * opts.dt_scale;
}

void set_leg(const RunOptions& opts, int leg) {
  if (opts.dump) {
    opts.dump->leg = leg;
    opts.dump->time_offset = 0.0;
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

}  // namespace

std::string_view to_string(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::forward: return "forward";
    case ExperimentKind::cyclic: return "cyclic";
    case ExperimentKind::linear_cycle: return "linear_cycle";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(std::string_view s) {
  if (s == "forward") return ExperimentKind::forward;
  if (s == "cyclic") return ExperimentKind::cyclic;
  if (s == "linear_cycle") return ExperimentKind::linear_cycle;
  throw ConfigError("unknown experiment '" + std::string(s) +
                    "' (expected forward, cyclic or linear_cycle)");
}

std::string_view to_string(WaitPolicy::Kind k) noexcept {
  switch (k) {
    case WaitPolicy::Kind::none: return "none";
    case WaitPolicy::Kind::fixed: return "fixed";
    case WaitPolicy::Kind::uniform: return "uniform";
  }
  return "?";
}

WaitPolicy::Kind wait_kind_from_string(std::string_view s) {
  if (s == "none") return WaitPolicy::Kind::none;
  if (s == "fixed") return WaitPolicy::Kind::fixed;
  if (s == "uniform") return WaitPolicy::Kind::uniform;
  throw ConfigError("unknown wait kind '" + std::string(s) +
                    "' (expected none, fixed or uniform)");
}

WaitPolicy WaitPolicy::randomized() {
  return uniform(0.0, 20.0 * std::numbers::pi);
}

void WaitPolicy::validate() const {
  switch (kind) {
    case Kind::none: return;
    case Kind::fixed:
      if (!(t_min >= 0.0) || !std::isfinite(t_min)) {
        throw ConfigError("fixed wait must be finite and non-negative");
      }
      return;
    case Kind::uniform:
      if (!(t_min >= 0.0) || !(t_max >= t_min) || !std::isfinite(t_max)) {
        throw ConfigError("uniform wait needs 0 <= min <= max < inf");
      }
      return;
  }
}

std::vector<double> WaitPolicy::draw(std::size_t n, std::uint64_t seed) const {
  validate();
  std::vector<double> w(n, 0.0);
  if (kind == Kind::fixed) std::fill(w.begin(), w.end(), t_min);
  if (kind == Kind::uniform) {
    for (std::size_t i = 0; i < n; ++i) {
      auto gen = make_stream(seed, Stream::wait_time, i);
      w[i] = std::uniform_real_distribution<double>(t_min, t_max)(gen);
    }
  }
  return w;
}

std::shared_ptr<const AgpTable> AgpCache::get(const ProtocolSpec& protocol,
                                              const CdSettings& cd, int order) {
  const nlohmann::json key_json = {protocol.name, cd.mu,   cd.grid_size,
                                   cd.reference_tau, cd.reference_n, cd.seed,
                                   cd.max_degree, to_string(cd.moments)};
  const std::string key = key_json.dump();
  std::lock_guard lock(mutex_);
  auto& tables = tables_[key];
  if (tables.size() < static_cast<std::size_t>(order)) {
    TabulateOptions opts;
    opts.order = order;
    opts.grid_size = cd.grid_size;
    opts.mu = cd.mu;
    opts.reference_tau = cd.reference_tau;
    opts.seed = cd.seed;
    opts.n = cd.reference_n;
    opts.limits.max_degree = cd.max_degree;
    opts.moments = cd.moments;
    tables.clear();
    for (auto& t : tabulate_orders(protocol, opts)) {
      tables.push_back(std::make_shared<const AgpTable>(std::move(t)));
    }
  }
  return tables[static_cast<std::size_t>(order - 1)];
}

AgpCache& AgpCache::global() {
  static AgpCache cache;
  return cache;
}

double RunRecord::tau_or_v() const noexcept {
  return spec.kind == ExperimentKind::linear_cycle ? spec.v : spec.tau;
}

double RunRecord::beta_f() const {
  if (spec.kind == ExperimentKind::linear_cycle) return spec.beta_f;
  return protocol_by_name(spec.protocol).beta_f;
}

RunRecord run_forward(const ProtocolSpec& protocol, double tau, int cd_order,
                      std::size_t n, std::uint64_t seed, const RunOptions& opts,
                      double dt) {
  if (!(tau > 0.0)) throw OutOfRange("tau must be positive");
  const auto t0 = Clock::now();
  const ModelSpec& model = *protocol.model;
  const auto table = table_for(protocol, cd_order, opts);
  const Ensemble start =
      sample_microcanonical(model, protocol.beta_i, protocol.E0, n, seed);
  const auto ramp = RampSchedule::smooth_sine(protocol.beta_i, protocol.beta_f, tau);
  const auto plan = EvolutionPlan::make(model, ramp, table, leg_dt(ramp, dt, opts));
  set_leg(opts, 0);
  const Ensemble end = evolve_ensemble(start, plan, 0.0, tau, opts.dump);

  RunSpec spec;
  spec.kind = ExperimentKind::forward;
  spec.protocol = protocol.name;
  spec.model = model.name;
  spec.tau = tau;
  spec.cd_order = cd_order;
  spec.n = n;
  spec.seed = seed;
  spec.dt = dt;
  return finish_record(spec, end, model.hamiltonian(protocol.beta_f), opts, t0);
}

RunRecord run_cyclic(const ProtocolSpec& protocol, double tau, int cd_order,
                     const WaitPolicy& wait, std::size_t n, std::uint64_t seed,
                     const RunOptions& opts, double dt) {
  if (!(tau > 0.0)) throw OutOfRange("tau must be positive");
  wait.validate();
  const auto t0 = Clock::now();
  const ModelSpec& model = *protocol.model;
  const auto table = table_for(protocol, cd_order, opts);
  Ensemble ens = sample_microcanonical(model, protocol.beta_i, protocol.E0, n, seed);

  const auto up = RampSchedule::smooth_sine(protocol.beta_i, protocol.beta_f, tau);
  set_leg(opts, 0);
  const double ramp_dt = leg_dt(up, dt, opts);
  ens = evolve_ensemble(ens, EvolutionPlan::make(model, up, table, ramp_dt), 0.0, tau,
                        opts.dump);
  if (wait.kind != WaitPolicy::Kind::none) {
    const auto durations = wait.draw(n, seed);
    const auto hold_schedule = RampSchedule::hold(protocol.beta_f);
    const auto hold = EvolutionPlan::make(model, hold_schedule, nullptr,
                                          leg_dt(hold_schedule, dt, opts));
    set_leg(opts, 1);
    ens = evolve_ensemble_hold(ens, hold, durations, opts.dump);
  }
  set_leg(opts, 2);
  ens = evolve_ensemble(ens, EvolutionPlan::make(model, reverse(up), table, ramp_dt),
                        0.0, tau, opts.dump);

  RunSpec spec;
  spec.kind = ExperimentKind::cyclic;
  spec.protocol = protocol.name;
  spec.model = model.name;
  spec.tau = tau;
  spec.cd_order = cd_order;
  spec.wait = wait;
  spec.n = n;
  spec.seed = seed;
  spec.dt = dt;
  return finish_record(spec, ens, model.hamiltonian(protocol.beta_i), opts, t0);
}

RunRecord run_linear_cycle(const ModelSpec& model, double beta_f, double v,
                           std::size_t n, std::uint64_t seed,
                           const RunOptions& opts, double dt) {
  if (!(v > 0.0)) throw OutOfRange("v must be positive");
  if (!(beta_f > 0.0)) throw OutOfRange("beta_f must be positive");
  const auto t0 = Clock::now();
  const auto up = RampSchedule::linear_at_speed(0.0, beta_f, v);
  Ensemble ens = sample_microcanonical(model, 0.0, 1.0, n, seed);
  set_leg(opts, 0);
  const double ramp_dt = leg_dt(up, dt, opts);
  ens = evolve_ensemble(ens, EvolutionPlan::make(model, up, nullptr, ramp_dt), 0.0,
                        up.tau(), opts.dump);
  set_leg(opts, 2);
  ens = evolve_ensemble(ens, EvolutionPlan::make(model, reverse(up), nullptr, ramp_dt),
                        0.0, up.tau(), opts.dump);

  RunSpec spec;
  spec.kind = ExperimentKind::linear_cycle;
  spec.protocol = "";
  spec.model = model.name;
  spec.tau = up.tau();
  spec.beta_f = beta_f;
  spec.v = v;
  spec.n = n;
  spec.seed = seed;
  spec.dt = dt;
  return finish_record(spec, ens, model.hamiltonian(0.0), opts, t0);
}

RunRecord run(const RunSpec& s, const RunOptions& opts) {
  switch (s.kind) {
    case ExperimentKind::forward:
      return run_forward(protocol_by_name(s.protocol), s.tau, s.cd_order, s.n,
                         s.seed, opts, s.dt);
    case ExperimentKind::cyclic:
      return run_cyclic(protocol_by_name(s.protocol), s.tau, s.cd_order, s.wait,
                        s.n, s.seed, opts, s.dt);
    case ExperimentKind::linear_cycle:
      return run_linear_cycle(model_by_name(s.model), s.beta_f, s.v, s.n, s.seed,
                              opts, s.dt);
  }
  throw Error("unreachable experiment kind");
}

std::string_view to_string(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::none: return "none";
    case SweepAxis::tau: return "tau";
    case SweepAxis::cd_order: return "cd_order";
    case SweepAxis::beta_f_v: return "beta_f_v";
    case SweepAxis::wait_policy: return "wait_policy";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "none") return SweepAxis::none;
  if (s == "tau") return SweepAxis::tau;
  if (s == "cd_order") return SweepAxis::cd_order;
  if (s == "beta_f_v") return SweepAxis::beta_f_v;
  if (s == "wait_policy") return SweepAxis::wait_policy;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

std::vector<RunSpec> expand(const SweepSpec& sw) {
  std::vector<RunSpec> out;
  auto require = [&](bool nonempty) {
    if (!nonempty) {
      throw ConfigError("sweep over " + std::string(to_string(sw.axis)) +
                        " needs at least one value");
    }
  };
  switch (sw.axis) {
    case SweepAxis::none:
      out.push_back(sw.base);
      break;
    case SweepAxis::tau:
      require(!sw.tau.empty());
      for (double t : sw.tau) {
        if (!std::isfinite(t)) throw ConfigError("sweep tau must be finite");
        out.push_back(sw.base);
        out.back().tau = t;
      }
      break;
    case SweepAxis::cd_order:
      require(!sw.cd_order.empty());
      for (int l : sw.cd_order) {
        out.push_back(sw.base);
        out.back().cd_order = l;
      }
      break;
    case SweepAxis::beta_f_v:
      require(!sw.beta_f.empty() && !sw.v.empty());
      for (double b : sw.beta_f) {
        for (double v : sw.v) {
          if (!std::isfinite(b) || !std::isfinite(v)) {
            throw ConfigError("sweep beta_f and v must be finite");
          }
          out.push_back(sw.base);
          out.back().beta_f = b;
          out.back().v = v;
        }
      }
      break;
    case SweepAxis::wait_policy:
      require(!sw.wait.empty());
      for (const auto& w : sw.wait) {
        out.push_back(sw.base);
        out.back().wait = w;
      }
      break;
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k].seed = sw.common_seed ? sw.base.seed : derive_seed(sw.base.seed, k);
  }
  return out;
}

std::vector<RunRecord> sweep(const SweepSpec& spec, const RunOptions& opts) {
  std::vector<RunRecord> records;
  for (const RunSpec& s : expand(spec)) {
    try {
      records.push_back(run(s, opts));
    } catch (const std::exception& e) {
      RunRecord failed;
      failed.spec = s;
      failed.error = e.what();
      failed.stats.mean = failed.stats.variance =
          failed.stats.std_error_of_variance = std::nan("");
      records.push_back(std::move(failed));
    }
  }
  return records;
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

nlohmann::json to_json(const RunSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"protocol", s.protocol},
          {"model", s.model},
          {"tau", s.tau},
          {"beta_f", s.beta_f},
          {"v", s.v},
          {"cd_order", s.cd_order},
          {"wait",
           {{"kind", to_string(s.wait.kind)},
            {"t_min", s.wait.t_min},
            {"t_max", s.wait.t_max}}},
          {"n", s.n},
          {"seed", s.seed},
          {"dt", s.dt}};
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j = {{"spec", to_json(r.spec)},
                      {"wall_seconds", r.wall_seconds},
                      {"config_hash", r.config_hash}};
  if (r.ok()) {
    j["stats"] = to_json(r.stats);
  } else {
    j["error"] = r.error;
  }
  return j;
}

std::string summary_row(const RunRecord& r) {
  const RunSpec& s = r.spec;
  std::ostringstream os;
  double bf = std::nan("");
  try {
    bf = r.beta_f();
  } catch (const std::exception&) {
  }
  os << to_string(s.kind) << ','
     << (s.kind == ExperimentKind::linear_cycle ? s.model : s.protocol) << ','
     << fmt(r.tau_or_v()) << ',' << fmt(bf) << ',' << s.cd_order << ','
     << to_string(s.wait.kind) << ',' << s.n << ','
     << fmt(r.ok() ? r.stats.variance : std::nan("")) << ','
     << fmt(r.ok() ? r.stats.std_error_of_variance : std::nan(""));
  return os.str();
}

namespace {

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  return out;
}

nlohmann::json software() { return {{"name", "cdsim"}, {"version", "1.0.0"}}; }

}  // namespace

void write_run(const std::filesystem::path& dir, const RunRecord& r,
               const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"software", software()},
                             {"config", config},
                             {"config_hash", config_hash(config)},
                             {"record", to_json(r)}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';

  auto energies = open_out(dir / "energies.csv");
  energies << "index,energy\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.energies.size(); ++i) {
    energies << i << ',' << r.energies[i] << '\n';
  }
  open_out(dir / "summary.csv") << kSummaryHeader << '\n' << summary_row(r) << '\n';
}

void write_sweep(const std::filesystem::path& dir,
                 const std::vector<RunRecord>& records,
                 const nlohmann::json& config) {
  std::filesystem::create_directories(dir);
  auto summary = open_out(dir / "summary.csv");
  summary << kSummaryHeader << '\n';
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t k = 0; k < records.size(); ++k) {
    std::ostringstream name;
    name << "run_" << std::setw(3) << std::setfill('0') << k;
    summary << summary_row(records[k]) << '\n';
    nlohmann::json entry = to_json(records[k]);
    entry["dir"] = name.str();
    runs.push_back(std::move(entry));
    write_run(dir / name.str(), records[k],
              {{"sweep_config", config}, {"run_index", k}});
  }
  nlohmann::json manifest = {{"software", software()},
                             {"config", config},
                             {"config_hash", config_hash(config)},
                             {"runs", runs}};
  open_out(dir / "manifest.json") << manifest.dump(2) << '\n';
}

void write_trajectories(const std::filesystem::path& file,
                        const TrajectoryDump& dump) {
  auto out = open_out(file);
  out << "leg,index,t,x,y,px,py,energy\n" << std::setprecision(17);
  for (const auto& s : dump.samples) {
    out << s.leg << ',' << s.index << ',' << s.t << ',' << s.z.x << ',' << s.z.y
        << ',' << s.z.px << ',' << s.z.py << ',' << s.energy << '\n';
  }
}

std::vector<double> read_energies(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::string line;
  std::getline(in, line);
  std::vector<double> e;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("malformed energies row: " + line);
    e.push_back(std::stod(line.substr(comma + 1)));
  }
  return e;
}

}  // namespace cdsim
