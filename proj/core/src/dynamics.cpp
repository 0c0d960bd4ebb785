#include "cdsim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "cdsim/agp.hpp"
#include "cdsim/errors.hpp"

namespace cdsim {

namespace {

constexpr std::size_t kChunk = 512;
constexpr std::size_t kFiniteCheckEvery = 2048;

// Hamilton's equations as polynomials: (dH/dpx, dH/dpy, -dH/dx, -dH/dy).
std::array<PhasePolynomial, 4> flow(const PhasePolynomial& H) {
  return {partial(H, Var::px), partial(H, Var::py), -partial(H, Var::x),
          -partial(H, Var::y)};
}

struct Workspace {
  explicit Workspace(std::size_t n)
      : k1(4 * n), k2(4 * n), k3(4 * n), k4(4 * n), tmp(n) {}
  std::vector<double> k1, k2, k3, k4;
  PointBuffer tmp;
};

PointColumns columns(const PointBuffer& buf, std::size_t n) {
  PointColumns c = buf.view();
  c.n = n;
  return c;
}

// One RK4 step on the first n points of z. `h` yields the step of point i;
// `deriv(c, cols, out)` evaluates the field at stage offset c in {0, 1/2, 1}.
template <class StepOf, class Deriv>
void rk4_step(PointBuffer& z, std::size_t n, StepOf h, Deriv&& deriv,
              Workspace& w) {
  const std::size_t stride = z.size();
  auto stage = [&](const std::vector<double>& k, double c) {
    for (int v = 0; v < 4; ++v) {
      const double* zc = z.column(static_cast<Var>(v));
      double* tc = w.tmp.column(static_cast<Var>(v));
      const double* kc = k.data() + static_cast<std::size_t>(v) * n;
      for (std::size_t i = 0; i < n; ++i) tc[i] = zc[i] + c * h(i) * kc[i];
    }
  };
  (void)stride;
  deriv(0.0, columns(z, n), std::span<double>(w.k1.data(), 4 * n));
  stage(w.k1, 0.5);
  deriv(0.5, columns(w.tmp, n), std::span<double>(w.k2.data(), 4 * n));
  stage(w.k2, 0.5);
  deriv(0.5, columns(w.tmp, n), std::span<double>(w.k3.data(), 4 * n));
  stage(w.k3, 1.0);
  deriv(1.0, columns(w.tmp, n), std::span<double>(w.k4.data(), 4 * n));
  for (int v = 0; v < 4; ++v) {
    double* zc = z.column(static_cast<Var>(v));
    const std::size_t off = static_cast<std::size_t>(v) * n;
    for (std::size_t i = 0; i < n; ++i) {
      zc[i] += h(i) / 6.0 *
               (w.k1[off + i] + 2.0 * w.k2[off + i] + 2.0 * w.k3[off + i] +
                w.k4[off + i]);
    }
  }
}

// Index of the first non-finite point among the first n, or n.
std::size_t first_non_finite(const PointBuffer& z, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (Var v : kAllVars) {
      if (!std::isfinite(z.column(v)[i])) return i;
    }
  }
  return n;
}

std::size_t step_count(double duration, double dt) {
  if (!(duration > 0.0)) return 0;
  return static_cast<std::size_t>(std::ceil(duration / dt * (1.0 - 1e-12)));
}

void record(TrajectoryDump* dump, const PointBuffer& z, std::size_t count,
            std::size_t global_offset, double t, const PhasePolynomial& H,
            const std::vector<std::size_t>* order = nullptr) {
  if (!dump) return;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t gi = global_offset + (order ? (*order)[i] : i);
    if (gi >= dump->max_points) continue;
    const PhasePoint p = z.point(i);
    const TrajectorySample sample{dump->leg, t + dump->time_offset, gi, p,
                                  evaluate(H, p)};
#pragma omp critical(cdsim_dump)
    dump->samples.push_back(sample);
  }
}

// Evolves chunk [begin, begin + n) of pts in place over [t0, t1].
void advance_chunk(const FlowField& field, std::vector<PhasePoint>& pts,
                   std::size_t begin, std::size_t n, double t0, double t1,
                   TrajectoryDump* dump) {
  const EvolutionPlan& plan = field.plan();
  PointBuffer z(std::span<const PhasePoint>(pts.data() + begin, n));
  Workspace w(n);
  const double dt = plan.dt;
  const std::size_t steps = step_count(t1 - t0, dt);
  const bool recording = dump && begin < dump->max_points;
  auto energy_at = [&](double t) {
    return plan.model->hamiltonian(plan.schedule.beta_at(t));
  };
  if (recording) record(dump, z, n, begin, t0, energy_at(t0));
  for (std::size_t s = 0; s < steps; ++s) {
    const double t = t0 + static_cast<double>(s) * dt;
    const double h = (s + 1 == steps) ? t1 - t : dt;
    rk4_step(
        z, n, [h](std::size_t) { return h; },
        [&](double c, const PointColumns& cols, std::span<double> out) {
          field.derivative(t + c * h, cols, out);
        },
        w);
    if ((s + 1) % kFiniteCheckEvery == 0 || s + 1 == steps) {
      const std::size_t bad = first_non_finite(z, n);
      if (bad < n) {
        throw NonFinite("trajectory left the finite range at t=" +
                            std::to_string(t + h),
                        begin + bad);
      }
    }
    if (recording && ((s + 1) % dump->stride == 0 || s + 1 == steps)) {
      record(dump, z, n, begin, t + h, energy_at(t + h));
    }
  }
  for (std::size_t i = 0; i < n; ++i) pts[begin + i] = z.point(i);
}

// Autonomous evolution at fixed beta with a per-point duration.
void advance_chunk_hold(const FlowField& field, std::vector<PhasePoint>& pts,
                        std::size_t begin, std::size_t n,
                        std::span<const double> durations,
                        TrajectoryDump* dump) {
  const EvolutionPlan& plan = field.plan();
  const double beta = plan.schedule.beta_i();
  const double dt = plan.dt;
  // Longest first so the active points always form a prefix.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> steps(n);
  for (std::size_t i = 0; i < n; ++i) {
    steps[i] = step_count(durations[begin + i], dt);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return steps[a] > steps[b];
  });

  PointBuffer z(n);
  std::vector<double> last_h(n);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    z.set_point(r, pts[begin + i]);
    const double d = durations[begin + i];
    last_h[r] = steps[i] ? d - static_cast<double>(steps[i] - 1) * dt : 0.0;
  }
  std::vector<std::size_t> sorted_steps(n);
  for (std::size_t r = 0; r < n; ++r) sorted_steps[r] = steps[order[r]];

  Workspace w(n);
  const bool recording = dump && begin < dump->max_points;
  const PhasePolynomial H = plan.model->hamiltonian(beta);
  if (recording) record(dump, z, n, begin, 0.0, H, &order);
  const std::size_t max_steps = n ? sorted_steps[0] : 0;
  std::size_t active = n;
  for (std::size_t s = 0; s < max_steps; ++s) {
    while (active > 0 && sorted_steps[active - 1] <= s) --active;
    rk4_step(
        z, active,
        [&](std::size_t r) { return s + 1 == sorted_steps[r] ? last_h[r] : dt; },
        [&](double, const PointColumns& cols, std::span<double> out) {
          field.derivative_at_beta(beta, cols, out);
        },
        w);
    if ((s + 1) % kFiniteCheckEvery == 0 || s + 1 == max_steps) {
      const std::size_t bad = first_non_finite(z, active);
      if (bad < active) {
        throw NonFinite("trajectory left the finite range during hold",
                        begin + order[bad]);
      }
    }
    if (recording && (s + 1) % dump->stride == 0) {
      record(dump, z, active, begin, static_cast<double>(s + 1) * dt, H, &order);
    }
  }
  for (std::size_t r = 0; r < n; ++r) pts[begin + order[r]] = z.point(r);
}

template <class ChunkFn>
void for_each_chunk(std::size_t n, ChunkFn&& fn) {
  const std::ptrdiff_t nchunks =
      static_cast<std::ptrdiff_t>((n + kChunk - 1) / kChunk);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t c = 0; c < nchunks; ++c) {
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t count = std::min(kChunk, n - begin);
    try {
      fn(begin, count);
    } catch (...) {
#pragma omp critical(cdsim_chunk_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace

double default_dt(const RampSchedule& schedule) {
  const double tau = schedule.tau();
  if (!std::isfinite(tau) || schedule.kind() == RampKind::hold) return 1e-3;
  return std::min(1e-3, tau / 1000.0);
}

EvolutionPlan EvolutionPlan::make(const ModelSpec& model, RampSchedule schedule,
                                  std::shared_ptr<const AgpTable> cd,
                                  double dt) {
  EvolutionPlan p;
  p.model = &model;
  p.schedule = schedule;
  p.cd = std::move(cd);
  p.dt = dt > 0.0 ? dt : default_dt(schedule);
  const double tau = schedule.tau();
  if (schedule.kind() != RampKind::hold && std::isfinite(tau) &&
      p.dt > tau / 100.0 * (1.0 + 1e-12)) {
    throw OutOfRange("dt must not exceed tau/100");
  }
  return p;
}

FlowField::FlowField(const EvolutionPlan& plan) : plan_(plan) {
  if (!plan.model) throw Error("EvolutionPlan without a model");
  const auto fH0 = flow(plan.model->H0);
  const auto fV = flow(plan.model->V);
  std::vector<PhasePolynomial> cols(fH0.begin(), fH0.end());
  cols.insert(cols.end(), fV.begin(), fV.end());
  base_ = PolynomialBlock(cols);

  if (plan.cd && plan.cd->order > 0) {
    const AgpTable& t = *plan.cd;
    grid_ = t.beta_grid;
    intervals_.reserve(grid_.size() - 1);
    for (std::size_t k = 0; k + 1 < grid_.size(); ++k) {
      const PhasePolynomial left =
          linear_combination(t.solutions[k].gamma, t.basis.at(k));
      const PhasePolynomial right =
          linear_combination(t.solutions[k + 1].gamma, t.basis.at(k + 1));
      std::vector<PhasePolynomial> all = cols;
      for (const auto& p : flow(left)) all.push_back(p);
      for (const auto& p : flow(right)) all.push_back(p);
      intervals_.push_back({PolynomialBlock(all)});
    }
  }
}

void FlowField::derivative_impl(double beta, double beta_dot,
                                const PointColumns& pts,
                                std::span<double> out) const {
  thread_local std::vector<double> coef;
  if (intervals_.empty() || beta_dot == 0.0) {
    const auto src = base_.coefficients();
    const std::size_t m = base_.monomial_count();
    coef.resize(4 * m);
    for (std::size_t j = 0; j < m; ++j) {
      const double* r = src.data() + 8 * j;
      for (int c = 0; c < 4; ++c) coef[4 * j + c] = r[c] + beta * r[4 + c];
    }
    base_.evaluate(pts, coef, 4, out);
    return;
  }
  const GridLocation loc = locate(grid_, std::clamp(beta, grid_.front(), grid_.back()));
  const PolynomialBlock& block = intervals_[loc.interval].block;
  const auto src = block.coefficients();
  const std::size_t m = block.monomial_count();
  const double wl = beta_dot * (1.0 - loc.weight);
  const double wr = beta_dot * loc.weight;
  coef.resize(4 * m);
  for (std::size_t j = 0; j < m; ++j) {
    const double* r = src.data() + 16 * j;
    for (int c = 0; c < 4; ++c) {
      coef[4 * j + c] = r[c] + beta * r[4 + c] + wl * r[8 + c] + wr * r[12 + c];
    }
  }
  block.evaluate(pts, coef, 4, out);
}

void FlowField::derivative(double t, const PointColumns& pts,
                           std::span<double> out) const {
  derivative_impl(plan_.schedule.beta_at(t), plan_.schedule.beta_dot_at(t), pts,
                  out);
}

void FlowField::derivative_at_beta(double beta, const PointColumns& pts,
                                   std::span<double> out) const {
  derivative_impl(beta, 0.0, pts, out);
}

PhasePoint evolve_point(const PhasePoint& z0, const EvolutionPlan& plan,
                        double t0, double t1) {
  if (!(t0 < t1)) throw OutOfRange("evolve_point requires t0 < t1");
  const FlowField field(plan);
  std::vector<PhasePoint> pts{z0};
  advance_chunk(field, pts, 0, 1, t0, t1, nullptr);
  return pts[0];
}

Ensemble evolve_ensemble(const Ensemble& e, const EvolutionPlan& plan,
                         double t0, double t1, TrajectoryDump* dump) {
  if (t1 < t0) throw OutOfRange("evolve_ensemble requires t0 <= t1");
  Ensemble out = e;
  out.meta.beta = plan.schedule.beta_at(t1);
  if (t1 == t0) return out;
  const FlowField field(plan);
  for_each_chunk(out.points.size(), [&](std::size_t begin, std::size_t n) {
    advance_chunk(field, out.points, begin, n, t0, t1, dump);
  });
  return out;
}

Ensemble evolve_ensemble_hold(const Ensemble& e, const EvolutionPlan& plan,
                              std::span<const double> durations,
                              TrajectoryDump* dump) {
  if (plan.schedule.kind() != RampKind::hold) {
    throw Error("evolve_ensemble_hold requires a hold schedule");
  }
  if (durations.size() != e.size()) {
    throw Error("evolve_ensemble_hold: one duration per point required");
  }
  for (double d : durations) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw OutOfRange("invalid hold duration");
  }
  Ensemble out = e;
  out.meta.beta = plan.schedule.beta_i();
  const FlowField field(plan);
  for_each_chunk(out.points.size(), [&](std::size_t begin, std::size_t n) {
    advance_chunk_hold(field, out.points, begin, n, durations, dump);
  });
  return out;
}

ConvergenceReport convergence_check(const PhasePoint& z0,
                                    const EvolutionPlan& plan, double t1) {
  ConvergenceReport r;
  r.dt = plan.dt;
  if (!(t1 > 0.0)) return r;
  auto run = [&](double dt) {
    EvolutionPlan p = plan;
    p.dt = dt;
    return evolve_point(z0, p, 0.0, t1);
  };
  auto dist = [](const PhasePoint& a, const PhasePoint& b) {
    double d = 0.0;
    for (Var v : kAllVars) d = std::max(d, std::abs(a[v] - b[v]));
    return d;
  };
  const PhasePoint a = run(plan.dt);
  const PhasePoint b = run(plan.dt / 2.0);
  const PhasePoint c = run(plan.dt / 4.0);
  r.discrepancy = dist(a, b);
  r.discrepancy_half = dist(b, c);
  return r;
}

}  // namespace cdsim
