#include "cdsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cdsim/errors.hpp"

namespace cdsim {

namespace {

using P = PhasePolynomial;

P harmonic_2d() {
  return P::from_terms({{Monomial(2, 0, 0, 0), 0.5},
                        {Monomial(0, 2, 0, 0), 0.5},
                        {Monomial(0, 0, 2, 0), 0.5},
                        {Monomial(0, 0, 0, 2), 0.5}});
}

ModelSpec make_model(std::string name, P H0, P V, int dof) {
  ModelSpec m;
  m.name = std::move(name);
  m.H0 = std::move(H0);
  m.dH_dbeta = V;
  m.V = std::move(V);
  m.dof = dof;
  return m;
}

}  // namespace

PhasePolynomial ModelSpec::hamiltonian(double beta) const {
  return add(H0, scale(V, beta));
}

const ModelSpec& integrable_model() {
  static const ModelSpec m = make_model(
      "H_I", harmonic_2d(),
      P::from_terms({{Monomial(4, 0, 0, 0), 0.25},
                     {Monomial(2, 2, 0, 0), 0.5},
                     {Monomial(0, 4, 0, 0), 0.25}}),
      2);
  return m;
}

const ModelSpec& nonintegrable_model() {
  static const ModelSpec m = make_model(
      "H_NI", harmonic_2d(), P::monomial(2, 2, 0, 0, 0.5), 2);
  return m;
}

const ModelSpec& harmonic_1d_model() {
  static const ModelSpec m = make_model(
      "harmonic_1d",
      P::from_terms({{Monomial(2, 0, 0, 0), 0.5}, {Monomial(0, 0, 2, 0), 0.5}}),
      P::monomial(2, 0, 0, 0, 0.5), 1);
  return m;
}

const ModelSpec& model_by_name(std::string_view name) {
  if (name == "H_I") return integrable_model();
  if (name == "H_NI") return nonintegrable_model();
  if (name == "harmonic_1d") return harmonic_1d_model();
  throw ConfigError("unknown model '" + std::string(name) + "'");
}

PhasePolynomial angular_momentum() {
  return P::from_terms(
      {{Monomial(1, 0, 0, 1), 1.0}, {Monomial(0, 1, 1, 0), -1.0}});
}

const std::vector<ProtocolSpec>& named_protocols() {
  static const std::vector<ProtocolSpec> list{
      {"I-I", &integrable_model(), 0.0, 0.229, 1.0},
      {"I-N", &nonintegrable_model(), 0.0, 1.0, 1.0},
      {"N-N", &nonintegrable_model(), 5.0, 8.85, 1.0},
  };
  return list;
}

const ProtocolSpec& protocol_by_name(std::string_view name) {
  for (const auto& p : named_protocols()) {
    if (p.name == name) return p;
  }
  static const ProtocolSpec harmonic{"harmonic-1d", &harmonic_1d_model(), 0.0,
                                     1.0, 1.0};
  if (name == harmonic.name) return harmonic;
  throw ConfigError("unknown protocol '" + std::string(name) + "'");
}

std::string_view to_string(RampKind k) noexcept {
  switch (k) {
    case RampKind::smooth_sine: return "smooth_sine";
    case RampKind::linear: return "linear";
    case RampKind::hold: return "hold";
  }
  return "?";
}

RampSchedule RampSchedule::smooth_sine(double beta_i, double beta_f,
                                       double tau) {
  if (!(tau > 0.0)) throw OutOfRange("ramp duration must be positive");
  return {RampKind::smooth_sine, beta_i, beta_f, tau};
}

RampSchedule RampSchedule::linear(double beta_i, double beta_f, double tau) {
  if (!(tau > 0.0)) throw OutOfRange("ramp duration must be positive");
  return {RampKind::linear, beta_i, beta_f, tau};
}

RampSchedule RampSchedule::linear_at_speed(double beta_i, double beta_f,
                                           double v) {
  if (!(v > 0.0)) throw OutOfRange("ramp speed must be positive");
  return linear(beta_i, beta_f, std::abs(beta_f - beta_i) / v);
}

RampSchedule RampSchedule::hold(double beta, double tau) {
  if (!(tau >= 0.0)) throw OutOfRange("hold duration must be non-negative");
  return {RampKind::hold, beta, beta, tau};
}

double RampSchedule::velocity() const noexcept {
  return kind_ == RampKind::linear ? (beta_f_ - beta_i_) / tau_ : 0.0;
}

double RampSchedule::clamp_time(double t) const {
  const double slack = std::isfinite(tau_) ? 1e-9 * tau_ : 0.0;
  if (!(t >= -slack && t <= tau_ + slack)) {
    throw OutOfRange("time " + std::to_string(t) + " outside schedule [0, " +
                     std::to_string(tau_) + "]");
  }
  return std::clamp(t, 0.0, tau_);
}

double RampSchedule::beta_at(double t) const {
  t = clamp_time(t);
  switch (kind_) {
    case RampKind::hold:
      return beta_i_;
    case RampKind::linear:
      return beta_i_ + (beta_f_ - beta_i_) * (t / tau_);
    case RampKind::smooth_sine: {
      constexpr double pi = std::numbers::pi;
      const double s = std::sin(pi * t / (2.0 * tau_));
      const double g = std::sin(0.5 * pi * s * s);
      return (beta_f_ - beta_i_) * g * g + beta_i_;
    }
  }
  return beta_i_;
}

double RampSchedule::beta_dot_at(double t) const {
  t = clamp_time(t);
  switch (kind_) {
    case RampKind::hold:
      return 0.0;
    case RampKind::linear:
      return (beta_f_ - beta_i_) / tau_;
    case RampKind::smooth_sine: {
      // d/dt sin^2(g(u)), g = (pi/2) sin^2 u, u = pi t / (2 tau).
      constexpr double pi = std::numbers::pi;
      const double u = pi * t / (2.0 * tau_);
      const double s = std::sin(u);
      const double g = 0.5 * pi * s * s;
      return (beta_f_ - beta_i_) * (pi * pi / (4.0 * tau_)) *
             std::sin(2.0 * g) * std::sin(2.0 * u);
    }
  }
  return 0.0;
}

double RampSchedule::time_at_beta(double beta) const {
  const double lo = std::min(beta_i_, beta_f_);
  const double hi = std::max(beta_i_, beta_f_);
  const double slack = 1e-12 * std::max(1.0, std::abs(hi));
  if (!(beta >= lo - slack && beta <= hi + slack)) {
    throw OutOfRange("beta " + std::to_string(beta) + " outside schedule range");
  }
  if (kind_ == RampKind::hold || beta_f_ == beta_i_) return 0.0;
  const double r = std::clamp((beta - beta_i_) / (beta_f_ - beta_i_), 0.0, 1.0);
  if (kind_ == RampKind::linear) return r * tau_;
  constexpr double pi = std::numbers::pi;
  const double g = std::asin(std::sqrt(r));
  const double s = std::clamp(2.0 * g / pi, 0.0, 1.0);
  return 2.0 * tau_ * std::asin(std::sqrt(s)) / pi;
}

RampSchedule RampSchedule::reversed() const {
  // Both closed forms are symmetric under t -> tau - t with swapped endpoints.
  return {kind_, beta_f_, beta_i_, tau_};
}

}  // namespace cdsim
