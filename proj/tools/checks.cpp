#include "checks.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cdsim/agp.hpp"
#include "cdsim/dynamics.hpp"
#include "cdsim/ensemble.hpp"
#include "cdsim/models.hpp"
#include "cdsim/polynomial.hpp"
#include "cdsim/swtheory.hpp"

namespace cdsim_tools {

namespace {

using namespace cdsim;

PhasePolynomial random_integer_poly(std::mt19937_64& gen, int max_deg, int terms) {
  std::uniform_int_distribution<int> e(0, max_deg);
  std::uniform_int_distribution<int> c(-5, 5);
  std::vector<PhasePolynomial::Term> bag;
  for (int k = 0; k < terms; ++k) {
    int ex = e(gen), ey = e(gen), epx = e(gen), epy = e(gen);
    while (ex + ey + epx + epy > max_deg) {
      if (ex) --ex; else if (ey) --ey; else if (epx) --epx; else --epy;
    }
    bag.push_back({Monomial(ex, ey, epx, epy), double(c(gen))});
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

struct Outcome {
  bool pass;
  std::string detail;
};

Outcome jacobi() {
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_integer_poly(gen, 4, 5);
    const auto b = random_integer_poly(gen, 4, 5);
    const auto c = random_integer_poly(gen, 4, 5);
    const auto s = poisson_bracket(a, poisson_bracket(b, c)) +
                   poisson_bracket(b, poisson_bracket(c, a)) +
                   poisson_bracket(c, poisson_bracket(a, b));
    if (!s.is_zero()) return {false, "nonzero cyclic sum in trial " + std::to_string(trial)};
  }
  return {true, "20 random integer triples, cyclic sum exactly zero"};
}

Outcome angular_momentum_conserved() {
  for (double beta : {0.0, 0.229, 1.0, 5.0}) {
    const auto br = poisson_bracket(angular_momentum(), integrable_model().hamiltonian(beta));
    if (!br.is_zero()) return {false, "{L, H_I} != 0 at beta=" + std::to_string(beta)};
  }
  return {true, "{L, H_I} = 0 symbolically"};
}

Outcome harmonic_oracle() {
  const double beta = 0.5;
  const auto& m = harmonic_1d_model();
  const auto basis = build_basis(m, beta, 1);
  const auto ens = sample_microcanonical(m, beta, 1.0, 2000, 3);
  const auto s = solve_variational(basis, ens, 0.0);
  const double expected = 1.0 / (4.0 * (1.0 + beta));
  const double rel = std::abs(s.gamma[0] - expected) / expected;
  const double res = s.residual_norm / s.zero_action;
  char buf[160];
  std::snprintf(buf, sizeof buf, "gamma1 rel. error %.2e, residual/||dH||^2 %.2e", rel, res);
  return {rel < 1e-8 && res <= 1e-10, buf};
}

Outcome energy_drift() {
  double worst = 0.0;
  for (const auto* model : {&integrable_model(), &nonintegrable_model()}) {
    for (double beta : {0.0, 0.229, 1.0, 5.0, 8.85}) {
      const auto ens = sample_microcanonical(*model, beta, 1.0, 8, 11);
      const auto plan = EvolutionPlan::make(*model, RampSchedule::hold(beta));
      const auto H = model->hamiltonian(beta);
      std::vector<double> durations(ens.size(), 100.0);
      const auto end = evolve_ensemble_hold(ens, plan, durations);
      for (std::size_t i = 0; i < ens.size(); ++i) {
        const double e0 = evaluate(H, ens.points[i]);
        worst = std::max(worst, std::abs(evaluate(H, end.points[i]) - e0) / std::abs(e0));
      }
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "max relative drift over t=100: %.2e", worst);
  return {worst < 1e-9, buf};
}

Outcome step_halving() {
  const auto& p = protocol_by_name("I-I");
  const auto plan = EvolutionPlan::make(*p.model, RampSchedule::smooth_sine(0.0, 0.229, 1.0),
                                        nullptr, 1e-2);
  const auto r = convergence_check({0.6, 0.5, 0.8, -0.4}, plan, 1.0);
  char buf[120];
  std::snprintf(buf, sizeof buf, "dt=1e-2 error ratio %.2f (fourth order: 16)", r.ratio());
  return {r.ratio() > 12.0 && r.ratio() < 20.0, buf};
}

Outcome sw_values() {
  const double a = sw_variance("H_I", 0.229);
  const double b = sw_variance("H_NI", 1.0);
  char buf[120];
  std::snprintf(buf, sizeof buf, "H_I(0.229) = %.4e, H_NI(1) = %.4e", a, b);
  return {std::abs(a - 7.284e-5) < 5e-8 && std::abs(b - 2.431e-3) < 5e-7, buf};
}

Outcome quantum_block() {
  std::string detail;
  bool ok = true;
  for (const char* m : {"H_I", "H_NI"}) {
    const auto c = block_convergence(m, {25, 50, 100, 200, 400});
    char buf[120];
    std::snprintf(buf, sizeof buf, "%s ratio(200)=%.5f p=%.3f limit=%.5f", m, c.ratio[3],
                  c.exponent, c.extrapolated);
    detail += (detail.empty() ? "" : "; ") + std::string(buf);
    ok = ok && c.exponent > 0.8 && c.exponent < 1.2 && std::abs(c.extrapolated - 1.0) < 1e-3;
  }
  return {ok, detail};
}

}  // namespace

std::vector<CheckResult> evaluate_checks() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> checks = {
      {"jacobi_identity", jacobi},
      {"angular_momentum", angular_momentum_conserved},
      {"harmonic_agp_oracle", harmonic_oracle},
      {"energy_drift", energy_drift},
      {"step_halving", step_halving},
      {"sw_coefficients", sw_values},
      {"quantum_block_convergence", quantum_block},
  };
  std::vector<CheckResult> results;
  for (const auto& [name, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    results.push_back({name, o.pass, o.detail});
  }
  return results;
}

bool run_checks(std::ostream& out) {
  bool all = true;
  for (const auto& r : evaluate_checks()) {
    all = all && r.pass;
    out << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
  }
  return all;
}

}  // namespace cdsim_tools
