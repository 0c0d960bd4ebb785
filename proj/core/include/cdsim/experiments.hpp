#pragma once

// Named experiments (forward, cyclic, linear ramp-and-reverse), sweeps, and
// their on-disk results.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdsim/agp.hpp"
#include "cdsim/dynamics.hpp"
#include "cdsim/ensemble.hpp"
#include "cdsim/models.hpp"

namespace cdsim {

enum class ExperimentKind { forward, cyclic, linear_cycle };
std::string_view to_string(ExperimentKind k) noexcept;
ExperimentKind experiment_kind_from_string(std::string_view s);

/// Per-trajectory wait at beta_f between the two legs of a cyclic protocol.
struct WaitPolicy {
  enum class Kind { none, fixed, uniform };
  Kind kind = Kind::none;
  double t_min = 0.0;  // fixed: the wait; uniform: lower bound
  double t_max = 0.0;  // uniform: upper bound

  static WaitPolicy none() { return {}; }
  static WaitPolicy fixed(double T) { return {Kind::fixed, T, T}; }
  static WaitPolicy uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
  /// Default randomized wait: uniform on [0, 20 pi], about ten harmonic periods.
  static WaitPolicy randomized();

  void validate() const;
  /// One wait per trajectory, from that trajectory's own stream.
  std::vector<double> draw(std::size_t n, std::uint64_t seed) const;
};
std::string_view to_string(WaitPolicy::Kind k) noexcept;
WaitPolicy::Kind wait_kind_from_string(std::string_view s);

/// How gauge tables are built for CD-assisted runs.
struct CdSettings {
  double mu = -1.0;  // < 0 => default
  std::size_t grid_size = 51;
  double reference_tau = 10.0;
  std::size_t reference_n = 10000;
  std::uint64_t seed = 0;
  int max_degree = 40;
  MomentSource moments = MomentSource::reference_run;
};

/// Memoizes gauge tables per (protocol, settings); tables for every order up
/// to the largest requested are kept.
class AgpCache {
 public:
  std::shared_ptr<const AgpTable> get(const ProtocolSpec& protocol,
                                      const CdSettings& cd, int order);
  static AgpCache& global();

 private:
  std::mutex mutex_;
  std::map<std::string, std::vector<std::shared_ptr<const AgpTable>>> tables_;
};

/// Complete description of one run.
struct RunSpec {
  ExperimentKind kind = ExperimentKind::forward;
  std::string protocol = "I-I";  // forward / cyclic
  std::string model = "H_NI";    // linear_cycle
  double tau = 10.0;             // forward / cyclic
  double beta_f = 0.0;           // linear_cycle
  double v = 0.0;                // linear_cycle
  int cd_order = 0;
  WaitPolicy wait;
  std::size_t n = 10000;
  std::uint64_t seed = 1;
  double dt = 0.0;  // <= 0 => default_dt of each leg
};

struct RunOptions {
  CdSettings cd;
  AgpCache* cache = nullptr;       // null => AgpCache::global()
  TrajectoryDump* dump = nullptr;  // records the first trajectories
  /// Multiplies the step of every leg (explicit or default); 0.5 halves dt.
  double dt_scale = 1.0;
};

struct RunRecord {
  RunSpec spec;
  std::vector<double> energies;  // final energy per trajectory
  EnergyStats stats;
  double wall_seconds = 0.0;
  std::string config_hash;
  std::string error;  // non-empty for a failed run inside a sweep

  bool ok() const noexcept { return error.empty(); }
  /// tau for smooth-ramp experiments, v for linear ones.
  double tau_or_v() const noexcept;
  /// Final beta of the outgoing leg.
  double beta_f() const;
};

/// Sample the shell at beta_i (E0 = 1), ramp to beta_f in time tau with the
/// smooth schedule (CD of order cd_order if > 0), measure H(beta_f).
RunRecord run_forward(const ProtocolSpec& protocol, double tau, int cd_order,
                      std::size_t n, std::uint64_t seed,
                      const RunOptions& opts = {}, double dt = 0.0);

/// Forward ramp, per-trajectory hold at beta_f, reverse ramp; measure
/// H(beta_i). The reverse leg reuses the forward gauge table.
RunRecord run_cyclic(const ProtocolSpec& protocol, double tau, int cd_order,
                     const WaitPolicy& wait, std::size_t n, std::uint64_t seed,
                     const RunOptions& opts = {}, double dt = 0.0);

/// Linear ramp 0 -> beta_f at speed v and straight back; measure H(0).
RunRecord run_linear_cycle(const ModelSpec& model, double beta_f, double v,
                           std::size_t n, std::uint64_t seed,
                           const RunOptions& opts = {}, double dt = 0.0);

RunRecord run(const RunSpec& spec, const RunOptions& opts = {});

enum class SweepAxis { none, tau, cd_order, beta_f_v, wait_policy };
std::string_view to_string(SweepAxis a) noexcept;
SweepAxis sweep_axis_from_string(std::string_view s);

struct SweepSpec {
  RunSpec base;
  SweepAxis axis = SweepAxis::none;
  std::vector<double> tau;
  std::vector<int> cd_order;
  std::vector<double> beta_f;  // beta_f_v: cartesian product with v
  std::vector<double> v;
  std::vector<WaitPolicy> wait;
  /// false => run k uses derive_seed(base.seed, k); true => all use base.seed.
  bool common_seed = false;
};

/// Run specs of a sweep in order.
std::vector<RunSpec> expand(const SweepSpec& sweep);

/// One record per axis value. A failing run yields a record with `error`
/// set; the sweep continues.
std::vector<RunRecord> sweep(const SweepSpec& spec, const RunOptions& opts = {});

/// FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

nlohmann::json to_json(const RunSpec& s);
nlohmann::json to_json(const RunRecord& r);

inline constexpr const char* kSummaryHeader =
    "experiment,protocol,tau_or_v,beta_f,cd_order,wait_kind,n,sigma2,sigma2_err";
std::string summary_row(const RunRecord& r);

/// manifest.json, energies.csv and summary.csv for one run.
void write_run(const std::filesystem::path& dir, const RunRecord& r,
               const nlohmann::json& config);
/// Combined summary.csv and manifest.json, plus run_NNN/ per record.
void write_sweep(const std::filesystem::path& dir,
                 const std::vector<RunRecord>& records,
                 const nlohmann::json& config);
void write_trajectories(const std::filesystem::path& file,
                        const TrajectoryDump& dump);

/// Per-trajectory energies of an energies.csv.
std::vector<double> read_energies(const std::filesystem::path& file);

}  // namespace cdsim
