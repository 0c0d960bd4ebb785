#pragma once

#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "cdsim/polynomial.hpp"

namespace cdsim {

/// Hamiltonian family H(beta) = H0 + beta * V.
struct ModelSpec {
  std::string name;
  PhasePolynomial H0;
  PhasePolynomial V;
  PhasePolynomial dH_dbeta;  // equals V for these linear families
  int dof = 2;               // 1 => only (x, p_x) are active

  PhasePolynomial hamiltonian(double beta) const;
};

/// H_I = (p_x^2+p_y^2)/2 + (x^2+y^2)/2 + beta (x^2+y^2)^2 / 4.
const ModelSpec& integrable_model();
/// H_NI = (p_x^2+p_y^2)/2 + (x^2+y^2)/2 + beta x^2 y^2 / 2.
const ModelSpec& nonintegrable_model();
/// One-dimensional test family H = p^2/2 + (1+beta) x^2/2 whose gauge
/// potential is known in closed form.
const ModelSpec& harmonic_1d_model();

/// Looks up "H_I", "H_NI" or "harmonic_1d". Throws ConfigError otherwise.
const ModelSpec& model_by_name(std::string_view name);

/// Angular momentum L = x p_y - y p_x.
PhasePolynomial angular_momentum();

struct ProtocolSpec {
  std::string name;
  const ModelSpec* model = nullptr;
  double beta_i = 0.0;
  double beta_f = 0.0;
  double E0 = 1.0;
};

/// The three driving protocols I-I, I-N and N-N.
const std::vector<ProtocolSpec>& named_protocols();
/// Named protocols plus "harmonic-1d" (beta 0 -> 1 on the 1D test family).
const ProtocolSpec& protocol_by_name(std::string_view name);

enum class RampKind { smooth_sine, linear, hold };

std::string_view to_string(RampKind k) noexcept;

/// Closed-form driving schedule beta(t) on [0, tau].
class RampSchedule {
 public:
  /// beta(t) = (beta_f - beta_i) sin^2[(pi/2) sin^2(pi t / 2 tau)] + beta_i.
  static RampSchedule smooth_sine(double beta_i, double beta_f, double tau);
  static RampSchedule linear(double beta_i, double beta_f, double tau);
  /// Linear ramp at speed v > 0; tau = |beta_f - beta_i| / v.
  static RampSchedule linear_at_speed(double beta_i, double beta_f, double v);
  static RampSchedule hold(double beta,
                           double tau = std::numeric_limits<double>::infinity());

  RampKind kind() const noexcept { return kind_; }
  double tau() const noexcept { return tau_; }
  double beta_i() const noexcept { return beta_i_; }
  double beta_f() const noexcept { return beta_f_; }
  /// (beta_f - beta_i) / tau for linear schedules, 0 otherwise.
  double velocity() const noexcept;

  /// Throws OutOfRange unless 0 <= t <= tau (up to 1e-9 tau of slack).
  double beta_at(double t) const;
  double beta_dot_at(double t) const;

  /// Inverse of beta_at for monotone ramps. Throws OutOfRange if beta lies
  /// outside [min(beta_i, beta_f), max(beta_i, beta_f)].
  double time_at_beta(double beta) const;

  RampSchedule reversed() const;

 private:
  RampSchedule(RampKind k, double bi, double bf, double tau)
      : kind_(k), beta_i_(bi), beta_f_(bf), tau_(tau) {}
  double clamp_time(double t) const;

  RampKind kind_;
  double beta_i_;
  double beta_f_;
  double tau_;
};

/// reverse(s).beta_at(t) == s.beta_at(tau - t).
inline RampSchedule reverse(const RampSchedule& s) { return s.reversed(); }

}  // namespace cdsim
