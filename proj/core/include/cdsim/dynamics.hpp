#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "cdsim/ensemble.hpp"
#include "cdsim/models.hpp"
#include "cdsim/poly_eval.hpp"

namespace cdsim {

struct AgpTable;

/// Default integrator step: 1e-3, or tau/1000 when that is smaller.
double default_dt(const RampSchedule& schedule);

/// Everything needed to integrate H_CD(t) = H(beta(t)) + beta'(t) A_beta.
struct EvolutionPlan {
  const ModelSpec* model = nullptr;
  RampSchedule schedule = RampSchedule::hold(0.0);
  std::shared_ptr<const AgpTable> cd;  // null => unassisted
  double dt = 1e-3;

  /// dt <= 0 selects default_dt(schedule). Validates dt <= tau/100.
  static EvolutionPlan make(const ModelSpec& model, RampSchedule schedule,
                            std::shared_ptr<const AgpTable> cd = nullptr,
                            double dt = 0.0);
};

/// One recorded trajectory sample.
struct TrajectorySample {
  int leg = 0;  // copied from TrajectoryDump::leg
  double t = 0.0;
  std::size_t index = 0;
  PhasePoint z;
  double energy = 0.0;  // H(beta(t)) without the CD term
};

/// Strided trajectory recording for the first `max_points` ensemble members.
struct TrajectoryDump {
  std::size_t max_points = 4;
  std::size_t stride = 100;
  double time_offset = 0.0;  // added to the recorded times
  int leg = 0;               // caller-defined segment tag, e.g. forward/hold/reverse
  std::vector<TrajectorySample> samples;
};

/// Precompiled flow field for a plan. The gradient polynomials of H0 and V
/// are compiled once; with a gauge table, one block per beta-grid interval
/// holds the gradients of the tabulated potentials at both interval
/// endpoints, blended linearly in beta.
class FlowField {
 public:
  explicit FlowField(const EvolutionPlan& plan);

  /// dz/dt for every point of `pts` at schedule time t, written
  /// column-major into out (4 * n entries: dx, dy, dpx, dpy).
  void derivative(double t, const PointColumns& pts, std::span<double> out) const;
  /// Same at fixed beta with beta' = 0.
  void derivative_at_beta(double beta, const PointColumns& pts,
                          std::span<double> out) const;

  const EvolutionPlan& plan() const noexcept { return plan_; }

 private:
  struct Interval {
    PolynomialBlock block;  // 16 columns: H0, V, A_left, A_right flows
  };
  void derivative_impl(double beta, double beta_dot, const PointColumns& pts,
                       std::span<double> out) const;

  EvolutionPlan plan_;
  PolynomialBlock base_;  // 8 columns: flows of H0 and V
  std::vector<Interval> intervals_;
  std::vector<double> grid_;
};

/// Classical RK4 with fixed step dt and a final partial step landing on t1.
/// Throws NonFinite if any coordinate blows up.
PhasePoint evolve_point(const PhasePoint& z0, const EvolutionPlan& plan,
                        double t0, double t1);

/// Evolves every point from t0 to t1; metadata beta is set to beta(t1).
Ensemble evolve_ensemble(const Ensemble& e, const EvolutionPlan& plan,
                         double t0, double t1, TrajectoryDump* dump = nullptr);

/// Evolves point i for durations[i] at the fixed beta of a hold plan.
Ensemble evolve_ensemble_hold(const Ensemble& e, const EvolutionPlan& plan,
                              std::span<const double> durations,
                              TrajectoryDump* dump = nullptr);

struct ConvergenceReport {
  double dt = 0.0;
  double discrepancy = 0.0;       // max |z(dt) - z(dt/2)|
  double discrepancy_half = 0.0;  // max |z(dt/2) - z(dt/4)|
  /// discrepancy / discrepancy_half; about 16 for a fourth-order scheme.
  double ratio() const noexcept {
    return discrepancy_half > 0.0 ? discrepancy / discrepancy_half : 0.0;
  }
};

ConvergenceReport convergence_check(const PhasePoint& z0,
                                    const EvolutionPlan& plan, double t1);

}  // namespace cdsim
