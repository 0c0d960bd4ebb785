#pragma once

// Slow-driving (Schrieffer-Wolff) predictions for the energy variance and a
// quantum fixed-N block computation that converges to them.

#include <string>
#include <string_view>
#include <vector>

namespace cdsim {

/// sigma_E^2 = coefficient * E0^4 / (m^4 omega^8) * beta^2.
struct SwPrediction {
  std::string model;
  double coefficient = 0.0;
  double variance(double beta, double E0 = 1.0, double m = 1.0,
                  double omega = 1.0) const;
};

/// 1/720 for H_I and 7/2880 for H_NI. Throws ConfigError otherwise.
SwPrediction sw_prediction(std::string_view model);

double sw_variance(std::string_view model, double beta, double E0 = 1.0,
                   double m = 1.0, double omega = 1.0);

/// The block n_x + n_y = N with effective hbar = 1/N, so that hbar N equals
/// the classical action E0 / omega = 1.
struct QuantumBlockSpec {
  int N = 2;
  std::string model = "H_I";
  double hbar_eff() const { return 1.0 / N; }
};

/// Rotating-frame perturbation in units of hbar^2 / (8 m^2 omega^2), as a
/// row-major (N+1) x (N+1) matrix over |n_x, N - n_x>, n_x = 0..N.
std::vector<double> quantum_block_matrix(const QuantumBlockSpec& spec);

struct BlockMoments {
  double mean = 0.0;       // block average of the diagonal
  double raw = 0.0;        // block average of <n|V^2|n>
  double connected = 0.0;  // raw - mean^2
};

/// Block moments of the perturbation in classical units (hbar = 1/N).
BlockMoments quantum_block_moments(const QuantumBlockSpec& spec);

/// Connected block variance in classical units; tends to the model's
/// coefficient as N grows.
double quantum_block_variance(const QuantumBlockSpec& spec);

struct BlockConvergence {
  std::vector<int> N;
  std::vector<double> ratio;  // quantum_block_variance / coefficient
  double exponent = 0.0;      // p in |ratio - 1| ~ c N^-p, least squares
  double extrapolated = 0.0;  // Richardson limit from the last two N, as a ratio
};

BlockConvergence block_convergence(std::string_view model,
                                   const std::vector<int>& Ns);

}  // namespace cdsim
