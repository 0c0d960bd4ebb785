// Acceptance suite: one PASS/FAIL line per criterion.
//
//   cdsim_acceptance [--only 1,6] [--fast] [--known-failure 10]
//
// --fast divides every ensemble size by ten (smoke runs; not authoritative).
// --known-failure lists criteria whose FAIL line is printed but does not
// change the exit status; each one is explained in the README.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdsim/agp.hpp"
#include "cdsim/experiments.hpp"
#include "cdsim/models.hpp"
#include "cdsim/random.hpp"
#include "cdsim/swtheory.hpp"
#include "checks.hpp"

namespace {

using namespace cdsim;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Tolerances, pinned.
constexpr double kSwRelTol = 0.15;          // 1, 2
constexpr double kReversibilityRatio = 1e-2;  // 3
constexpr double kIrreversibilitySigmas = 5.0;  // 4
constexpr double kErrorBars = 3.0;          // 5, 9, 11
constexpr double kMinDecayPerDecade = 0.10;  // 5: less than this is a plateau onset
constexpr double kCdFactor = 2.0;           // 6
constexpr double kCdHigherOrderTol = 0.20;  // 6
constexpr double kZeroVariance = 1e-8;      // 7, 9, 11
constexpr double kOracleResidual = 1e-10;   // 7
constexpr double kMonotoneSlack = 1e-10;    // 8
constexpr double kPlateauStep = 0.01;       // 8
constexpr int kMaxOrder = 7;                // 8
constexpr double kBlockTol = 0.02;          // 10
constexpr double kDtHalvingTol = 0.05;      // 12

constexpr std::uint64_t kSeed = 20240611;

struct Context {
  double n_scale = 1.0;
  AgpCache cache;
  std::map<std::string, RunRecord> memo;

  // Filled by criterion 9 for the dt certification.
  std::optional<std::pair<double, std::pair<double, double>>> inversion;  // beta_f, (v_fast, v_slow)

  std::size_t n(std::size_t full) const {
    return std::max<std::size_t>(50, static_cast<std::size_t>(double(full) * n_scale));
  }
  RunOptions options(double dt_scale = 1.0) {
    RunOptions o;
    o.cache = &cache;
    o.dt_scale = dt_scale;
    return o;
  }
  const RunRecord& remember(const std::string& key, const std::function<RunRecord()>& f) {
    auto it = memo.find(key);
    if (it == memo.end()) it = memo.emplace(key, f()).first;
    return it->second;
  }
};

double combined_se(const RunRecord& a, const RunRecord& b) {
  return std::hypot(a.stats.std_error_of_variance, b.stats.std_error_of_variance);
}

ProtocolSpec forward_to(const ModelSpec& model, double beta_f) {
  return {model.name + "->" + std::to_string(beta_f), &model, 0.0, beta_f, 1.0};
}

const RunRecord& cyclic_random(Context& c, const std::string& protocol, double tau,
                               std::size_t n) {
  return c.remember(fmt("cyclic %s %g uniform %zu", protocol.c_str(), tau, n), [&] {
    return run_cyclic(protocol_by_name(protocol), tau, 0, WaitPolicy::randomized(), n,
                      kSeed, c.options());
  });
}

const RunRecord& forward(Context& c, const std::string& protocol, double tau, int order,
                         std::size_t n) {
  return c.remember(fmt("forward %s %g %d %zu", protocol.c_str(), tau, order, n), [&] {
    return run_forward(protocol_by_name(protocol), tau, order, n, kSeed, c.options());
  });
}

// Exact slow-limit variance / SW prediction for H_I, from conservation of
// the radial action and angular momentum (quadrature in L, uniform on the
// shell). Shows how much of any miss is the higher-order term the SW
// formula leaves out.
double integrable_adiabatic_ratio(double beta_f) {
  if (beta_f == 0.03) return 0.93683;
  if (beta_f == 0.1) return 0.81662;
  return std::nan("");
}

Verdict sw_anchor(Context& c, const ModelSpec& model) {
  Verdict v{true, ""};
  const bool integrable = &model == &integrable_model();
  for (double beta_f : {0.03, 0.1}) {
    const auto r = run_forward(forward_to(model, beta_f), 10.0, 0, c.n(100000),
                               derive_seed(kSeed, 1), c.options());
    const double pred = sw_variance(model.name, beta_f);
    const double ratio = r.stats.variance / pred;
    const bool ok = std::abs(ratio - 1.0) <= kSwRelTol ||
                    std::abs(r.stats.variance - pred) <= kErrorBars * r.stats.std_error_of_variance;
    v.pass = v.pass && ok;
    v.detail += fmt("beta_f=%g: sigma2/beta_f^2 = %.4e vs %.4e (ratio %.3f +- %.3f", beta_f,
                    r.stats.variance / (beta_f * beta_f), pred / (beta_f * beta_f), ratio,
                    r.stats.std_error_of_variance / pred);
    if (integrable) v.detail += fmt("; exact slow limit %.3f", integrable_adiabatic_ratio(beta_f));
    v.detail += "); ";
  }
  return v;
}

Verdict criterion1(Context& c) { return sw_anchor(c, integrable_model()); }
Verdict criterion2(Context& c) { return sw_anchor(c, nonintegrable_model()); }

Verdict criterion3(Context& c) {
  const auto& slow = cyclic_random(c, "I-I", 10.0, c.n(10000));
  const auto& fast = cyclic_random(c, "I-I", 1e-4, c.n(10000));
  const double ratio = slow.stats.variance / fast.stats.variance;
  return {ratio <= kReversibilityRatio,
          fmt("cyclic I-I sigma2(tau=10) = %.3e, sigma2(tau=1e-4) = %.3e, ratio %.2e (need <= %g)",
              slow.stats.variance, fast.stats.variance, ratio, kReversibilityRatio)};
}

Verdict criterion4(Context& c) {
  const auto& in = cyclic_random(c, "I-N", 10.0, c.n(10000));
  const auto& ii = cyclic_random(c, "I-I", 10.0, c.n(10000));
  const auto& fwd = forward(c, "I-N", 10.0, 0, c.n(10000));
  const double sigmas = (in.stats.variance - ii.stats.variance) / combined_se(in, ii);
  const bool below = in.stats.variance < fwd.stats.variance;
  return {sigmas >= kIrreversibilitySigmas && below,
          fmt("cyclic I-N %.3e vs cyclic I-I %.3e: %.1f SE above (need %g); forward I-N %.3e "
              "(cyclic below: %s)",
              in.stats.variance, ii.stats.variance, sigmas, kIrreversibilitySigmas,
              fwd.stats.variance, below ? "yes" : "no")};
}

Verdict criterion5(Context& c) {
  const std::vector<double> taus = {0.1, 1.0, 10.0};
  std::vector<const RunRecord*> r;
  for (double t : taus) r.push_back(&forward(c, "N-N", t, 0, c.n(10000)));
  Verdict v{true, "forward N-N"};
  for (std::size_t k = 0; k < taus.size(); ++k) {
    v.detail += fmt(" %.3e(tau=%g)", r[k]->stats.variance, taus[k]);
  }
  for (std::size_t k = 0; k + 1 < taus.size(); ++k) {
    const double drop = r[k]->stats.variance - r[k + 1]->stats.variance;
    const double sigmas = drop / combined_se(*r[k], *r[k + 1]);
    const double rel = drop / r[k]->stats.variance;
    v.pass = v.pass && sigmas >= kErrorBars && rel >= kMinDecayPerDecade;
    v.detail += fmt("; %g->%g drop %.1f SE, %.0f%%", taus[k], taus[k + 1], sigmas, 100 * rel);
  }
  return v;
}

Verdict criterion6(Context& c) {
  const auto& slow = forward(c, "I-I", 10.0, 0, c.n(10000));
  std::vector<double> s2(kMaxOrder + 1, 0.0);
  for (int l = 3; l <= kMaxOrder; ++l) s2[l] = forward(c, "I-I", 1e-4, l, c.n(10000)).stats.variance;
  const double factor = s2[3] / slow.stats.variance;
  bool pass = factor <= kCdFactor && factor >= 1.0 / kCdFactor;
  std::string detail = fmt("unassisted tau=10 %.4e; CD tau=1e-4 l=3 %.4e (x%.3f)",
                           slow.stats.variance, s2[3], factor);
  for (int l = 4; l <= kMaxOrder; ++l) {
    const double change = s2[l] / s2[3] - 1.0;
    pass = pass && std::abs(change) < kCdHigherOrderTol;
    detail += fmt(", l=%d %+.1f%%", l, 100 * change);
  }
  return {pass, detail};
}

CdSettings shell_moments() {
  CdSettings cd;
  cd.moments = MomentSource::shell;
  return cd;
}

Verdict criterion7(Context& c) {
  const auto& p = protocol_by_name("harmonic-1d");
  const auto table = c.cache.get(p, shell_moments(), 1);
  double worst = 0.0;
  for (const auto& s : table->solutions) worst = std::max(worst, s.residual_norm / s.zero_action);
  RunOptions o = c.options();
  o.cd = shell_moments();
  const auto r = c.remember("harmonic", [&] { return run_forward(p, 1e-3, 1, c.n(10000), kSeed, o); });
  return {r.stats.variance < kZeroVariance && worst <= kOracleResidual,
          fmt("l=1 CD ramp tau=1e-3: sigma2 = %.3e (need < %g); max residual/||dH/dbeta||^2 = "
              "%.2e over %zu grid points",
              r.stats.variance, kZeroVariance, worst, table->solutions.size())};
}

Verdict criterion8(Context& c) {
  // One order past the last one studied, so that a plateau starting at 7
  // is a checked statement rather than a vacuous one.
  const int top = kMaxOrder + 1;
  Verdict v{true, ""};
  for (const char* name : {"I-I", "I-N", "N-N"}) {
    const auto& p = protocol_by_name(name);
    std::vector<std::shared_ptr<const AgpTable>> tables;
    for (int l = 1; l <= top; ++l) tables.push_back(c.cache.get(p, CdSettings{}, l));
    const std::size_t grid = tables[0]->beta_grid.size();

    int violations = 0;
    for (std::size_t k = 0; k < grid; ++k) {
      for (int l = 1; l < kMaxOrder; ++l) {
        const auto& a = tables[l - 1]->solutions[k];
        const double next = tables[l]->solutions[k].action_value;
        if (next > a.action_value + kMonotoneSlack * a.zero_action) ++violations;
      }
    }
    // Protocol-level action: sum over the grid.
    std::vector<double> total(top + 1, 0.0);
    for (int l = 1; l <= top; ++l) {
      for (const auto& s : tables[l - 1]->solutions) total[l] += s.action_value;
    }
    int onset = -1;
    for (int l = kMaxOrder; l >= 1; --l) {
      if ((total[l] - total[l + 1]) / total[l] < kPlateauStep) {
        onset = l;
      } else {
        break;
      }
    }
    const bool ok = violations == 0 && onset >= 1 && onset <= kMaxOrder;
    v.pass = v.pass && ok;
    v.detail += fmt("%s: %d monotonicity violations, plateau onset %s", name, violations,
                    onset > 0 ? std::to_string(onset).c_str() : "none");
    v.detail += fmt(" (step %d->%d %.2f%%); ", kMaxOrder, top,
                    100 * (total[kMaxOrder] - total[top]) / total[kMaxOrder]);
  }
  return v;
}

Verdict criterion9(Context& c) {
  const auto& model = nonintegrable_model();
  // Two decades, fastest first. Faster than ~5e-4 the kinks of the linear
  // ramp alone excite more than the zero-variance bound at beta_f = 0.02.
  const std::vector<double> v_grid = {3e-4, 1e-4, 3e-5, 1e-5, 3e-6};
  const double dt = 1e-2;  // certified under criterion 12
  const std::size_t n = c.n(500);
  // Runs above this many point-steps are skipped (and reported).
  const double budget = 4e9;
  std::uint64_t run_index = 0;
  auto cost = [&](double beta_f, double v) { return double(n) * 2.0 * beta_f / (v * dt); };
  auto linear = [&](double beta_f, double v) {
    return c.remember(fmt("linear %g %g %zu", beta_f, v, n), [&] {
      return run_linear_cycle(model, beta_f, v, n, derive_seed(kSeed, 100 + run_index++),
                              c.options(), dt);
    });
  };

  std::string detail;
  bool small_ok = true;
  double small_worst = 0.0;
  for (double beta_f : {0.02, 0.05}) {
    for (double v : v_grid) {
      const double s2 = linear(beta_f, v).stats.variance;
      small_worst = std::max(small_worst, s2);
      small_ok = small_ok && s2 < kZeroVariance;
    }
  }
  detail += fmt("beta_f<=0.05: max sigma2 %.2e over v in [3e-6,3e-4] (need < %g); ",
                small_worst, kZeroVariance);

  bool found = false;
  int skipped = 0;
  for (double beta_f : {1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2}) {
    std::vector<RunRecord> seen;
    for (double v : v_grid) {
      if (cost(beta_f, v) > budget) {
        ++skipped;
        continue;
      }
      const RunRecord r = linear(beta_f, v);
      for (const auto& fast : seen) {
        const double sigmas = (r.stats.variance - fast.stats.variance) / combined_se(r, fast);
        if (sigmas >= kErrorBars) {
          found = true;
          c.inversion = {beta_f, {fast.spec.v, v}};
          detail += fmt("inversion at beta_f=%g: sigma2(v=%g) = %.3e > sigma2(v=%g) = %.3e by "
                        "%.1f SE",
                        beta_f, v, r.stats.variance, fast.spec.v, fast.stats.variance, sigmas);
          break;
        }
      }
      if (found) break;
      seen.push_back(r);
    }
    if (found) break;
  }
  if (!found) detail += "no inversion found";
  if (skipped) detail += fmt(" (%d runs over budget skipped)", skipped);
  return {small_ok && found, detail};
}

Verdict criterion10(Context&) {
  Verdict v{true, ""};
  const std::vector<int> Ns = {25, 50, 100, 200, 400};
  for (const char* m : {"H_I", "H_NI"}) {
    const auto conv = block_convergence(m, Ns);
    const double at200 = conv.ratio[3];
    const bool ok = std::abs(at200 - 1.0) <= kBlockTol && conv.exponent >= 0.8 &&
                    conv.exponent <= 1.2;
    v.pass = v.pass && ok;
    v.detail += fmt("%s: ratio(N=200) %.6f (|dev| %.4f%%, need <= %g%%), exponent %.3f; ", m,
                    at200, 100 * std::abs(at200 - 1.0), 100 * kBlockTol, conv.exponent);
  }
  return v;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> g;
  for (int k = 0; k < count; ++k) {
    g.push_back(lo * std::pow(hi / lo, double(k) / double(count - 1)));
  }
  return g;
}

Verdict criterion11(Context& c) {
  const auto& p = protocol_by_name("I-I");
  std::string detail;

  // Fixed wait: look for a rise between neighbouring tau beyond error bars.
  const double T = 10.0;
  const auto taus = log_grid(1e-2, 10.0, 13);
  double best = 0.0, at = 0.0;
  std::optional<RunRecord> prev;
  for (double tau : taus) {
    const auto& r = c.remember(fmt("cyclic fixed %g", tau), [&] {
      return run_cyclic(p, tau, 0, WaitPolicy::fixed(T), c.n(2000), kSeed, c.options());
    });
    if (prev) {
      const double sigmas = (r.stats.variance - prev->stats.variance) / combined_se(r, *prev);
      if (sigmas > best) best = sigmas, at = tau;
    }
    prev = r;
  }
  const bool fixed_ok = best >= kErrorBars;
  detail += fmt("fixed T=%g: largest rise %.1f SE (at tau=%.3g); ", T, best, at);

  // Randomized wait: strictly decreasing for tau >= 1.
  bool random_ok = true;
  const std::vector<double> slow = {1.0, std::sqrt(10.0), 10.0};
  const RunRecord* last = nullptr;
  detail += "randomized";
  for (double tau : slow) {
    const auto& r = cyclic_random(c, "I-I", tau, c.n(10000));
    detail += fmt(" %.2e", r.stats.variance);
    if (last) {
      const double sigmas = (last->stats.variance - r.stats.variance) / combined_se(r, *last);
      random_ok = random_ok && sigmas >= kErrorBars;
    }
    last = &r;
  }
  detail += fmt(" (decreasing: %s); ", random_ok ? "yes" : "no");

  const auto& zero = c.remember("cyclic none 1e-4", [&] {
    return run_cyclic(p, 1e-4, 0, WaitPolicy::none(), c.n(10000), kSeed, c.options());
  });
  const bool zero_ok = zero.stats.variance < kZeroVariance;
  detail += fmt("zero wait tau=1e-4: %.2e", zero.stats.variance);
  return {fixed_ok && random_ok && zero_ok, detail};
}

Verdict criterion12(Context& c) {
  bool pass = true;
  std::string detail;
  for (const auto& r : cdsim_tools::evaluate_checks()) {
    if (r.name == "jacobi_identity" || r.name == "angular_momentum" ||
        r.name == "energy_drift" || r.name == "step_halving") {
      pass = pass && r.pass;
      detail += r.name + (r.pass ? " ok" : " FAILED") + " (" + r.detail + "); ";
    }
  }

  // Every statistic above, re-run at a reduced size with the same seed at
  // the production step and at half of it.
  const std::size_t n = c.n(1000);
  const auto& II = protocol_by_name("I-I");
  const auto& IN = protocol_by_name("I-N");
  const auto& NN = protocol_by_name("N-N");
  using Run = std::function<RunRecord(const RunOptions&)>;
  struct Stat {
    std::string name;
    Run run;
    bool threshold;  // true: only "stays below the zero-variance bound" is certified
  };
  std::vector<Stat> stats = {
      {"1:fwd H_I b=0.1", [&](auto& o) { return run_forward(forward_to(integrable_model(), 0.1), 10.0, 0, n, kSeed, o); }, false},
      {"2:fwd H_NI b=0.1", [&](auto& o) { return run_forward(forward_to(nonintegrable_model(), 0.1), 10.0, 0, n, kSeed, o); }, false},
      {"3:cyc I-I 10", [&](auto& o) { return run_cyclic(II, 10.0, 0, WaitPolicy::randomized(), n, kSeed, o); }, false},
      {"3:cyc I-I 1e-4", [&](auto& o) { return run_cyclic(II, 1e-4, 0, WaitPolicy::randomized(), n, kSeed, o); }, false},
      {"4:cyc I-N 10", [&](auto& o) { return run_cyclic(IN, 10.0, 0, WaitPolicy::randomized(), n, kSeed, o); }, false},
      {"4:fwd I-N 10", [&](auto& o) { return run_forward(IN, 10.0, 0, n, kSeed, o); }, false},
      {"5:fwd N-N 0.1", [&](auto& o) { return run_forward(NN, 0.1, 0, n, kSeed, o); }, false},
      {"5:fwd N-N 1", [&](auto& o) { return run_forward(NN, 1.0, 0, n, kSeed, o); }, false},
      {"5:fwd N-N 10", [&](auto& o) { return run_forward(NN, 10.0, 0, n, kSeed, o); }, false},
      {"6:fwd I-I 10", [&](auto& o) { return run_forward(II, 10.0, 0, n, kSeed, o); }, false},
      {"6:CD l=3", [&](auto& o) { return run_forward(II, 1e-4, 3, n, kSeed, o); }, false},
      {"6:CD l=7", [&](auto& o) { return run_forward(II, 1e-4, 7, n, kSeed, o); }, false},
      {"7:harmonic CD", [&](auto& o) { auto oo = o; oo.cd = shell_moments(); return run_forward(protocol_by_name("harmonic-1d"), 1e-3, 1, n, kSeed, oo); }, true},
      {"11:fixed 1", [&](auto& o) { return run_cyclic(II, 1.0, 0, WaitPolicy::fixed(10.0), n, kSeed, o); }, false},
      {"11:fixed 1.78", [&](auto& o) { return run_cyclic(II, 1.778, 0, WaitPolicy::fixed(10.0), n, kSeed, o); }, false},
      {"11:random 1", [&](auto& o) { return run_cyclic(II, 1.0, 0, WaitPolicy::randomized(), n, kSeed, o); }, false},
      {"11:random 3.16", [&](auto& o) { return run_cyclic(II, std::sqrt(10.0), 0, WaitPolicy::randomized(), n, kSeed, o); }, false},
      {"11:zero wait", [&](auto& o) { return run_cyclic(II, 1e-4, 0, WaitPolicy::none(), n, kSeed, o); }, true},
      {"9:small beta_f", [&](auto& o) { return run_linear_cycle(nonintegrable_model(), 0.02, 3e-4, n, kSeed, o, 1e-2); }, true},
  };
  if (c.inversion) {
    const auto [beta_f, vs] = *c.inversion;
    for (double v : {vs.first, vs.second}) {
      stats.push_back({fmt("9:linear b=%g v=%g", beta_f, v), [&, beta_f, v](auto& o) {
                         return run_linear_cycle(nonintegrable_model(), beta_f, v, c.n(300), kSeed, o, 1e-2);
                       }, false});
    }
  }

  double worst = 0.0;
  std::string worst_name;
  bool thresholds_ok = true;
  for (const auto& s : stats) {
    const double a = s.run(c.options(1.0)).stats.variance;
    const double b = s.run(c.options(0.5)).stats.variance;
    if (s.threshold) {
      thresholds_ok = thresholds_ok && a < kZeroVariance && b < kZeroVariance;
      continue;
    }
    const double rel = std::abs(b - a) / a;
    if (rel > worst) worst = rel, worst_name = s.name;
  }
  pass = pass && thresholds_ok && worst < kDtHalvingTol;
  detail += fmt("dt-halving over %zu statistics: worst relative change %.2e (%s), "
                "zero-variance bounds hold at dt/2: %s",
                stats.size(), worst, worst_name.c_str(), thresholds_ok ? "yes" : "no");
  return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only, known;
  bool fast = false;
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--known-failure", known, "Criteria whose failure is documented")->delimiter(',');
  app.add_flag("--fast", fast, "Ten times smaller ensembles (smoke run)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict(Context&)>>> criteria = {
      {"SW anchor, integrable", criterion1},
      {"SW anchor, nonintegrable", criterion2},
      {"I-I reversibility", criterion3},
      {"I-N partial irreversibility", criterion4},
      {"N-N slow decay", criterion5},
      {"CD efficacy", criterion6},
      {"exact gauge potential oracle", criterion7},
      {"variational monotonicity and plateau", criterion8},
      {"anti-adiabatic inversion", criterion9},
      {"quantum-block convergence", criterion10},
      {"wait-time phenomenology", criterion11},
      {"numerics certification", criterion12},
  };

  Context ctx;
  if (fast) {
    ctx.n_scale = 0.1;
    std::printf("NOTE --fast: ensembles reduced tenfold; results are not authoritative\n");
  }
  const std::set<int> selected(only.begin(), only.end());
  const std::set<int> allowed(known.begin(), known.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second(ctx);
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool excused = !v.pass && allowed.count(id);
    if (!v.pass && !excused) ++failures;
    std::printf("%s %2d %s: %s [%.0fs]%s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first,
                v.detail.c_str(), secs, excused ? " (known failure, see README)" : "");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
