#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdsim/models.hpp"
#include "cdsim/polynomial.hpp"

namespace cdsim {

struct EnsembleMeta {
  std::uint64_t seed = 0;
  std::string sampler;
  std::string model;
  double beta = 0.0;
  double E0 = 1.0;
  double shell_width = 0.0;
};

struct Ensemble {
  std::vector<PhasePoint> points;
  EnsembleMeta meta;

  std::size_t size() const noexcept { return points.size(); }
};

struct EnergyStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased, n - 1 denominator
  std::size_t count = 0;
  double std_error_of_variance = 0.0;  // jackknife; 0 when count < 3
};

/// Default rejection shell width relative to E0.
inline constexpr double kDefaultShellWidthFraction = 1e-3;

/// Uniform points on the isotropic-oscillator shell sum(z_i^2) = 2 E0 in
/// 2*dof dimensions (the exact microcanonical measure at beta = 0).
Ensemble sample_harmonic_shell(double E0, std::size_t n, std::uint64_t seed,
                               int dof = 2);

/// Rejection sampling in the box |z_i| <= sqrt(2 E0), accepting points with
/// |H(beta, z) - E0| <= shell_width / 2. Throws RejectionStall if the
/// acceptance rate drops below 1e-6.
Ensemble sample_general_shell(const ModelSpec& model, double beta, double E0,
                              std::size_t n, double shell_width,
                              std::uint64_t seed);

/// Exact sampler for a one-degree-of-freedom H = a p_x^2 + b x^2: uniform
/// angle on the ellipse H = E0, which is the microcanonical measure.
Ensemble sample_quadratic_1d_shell(const ModelSpec& model, double beta, double E0,
                                   std::size_t n, std::uint64_t seed);

/// Exact shell sampler where one exists (beta = 0, or a quadratic
/// one-dimensional H), otherwise rejection with
/// shell_width = kDefaultShellWidthFraction * E0 unless given.
Ensemble sample_microcanonical(const ModelSpec& model, double beta, double E0,
                               std::size_t n, std::uint64_t seed,
                               double shell_width = 0.0);

/// H evaluated at every point of the ensemble, in point order.
std::vector<double> point_energies(std::span<const PhasePoint> points,
                                   const PhasePolynomial& H);

EnergyStats energy_stats(std::span<const double> energies);
EnergyStats energy_stats(const Ensemble& e, const PhasePolynomial& H);

/// Writes `<stem>.csv` (x,y,px,py per line) and `<stem>.json` (metadata).
void write_ensemble(const std::filesystem::path& stem, const Ensemble& e);
Ensemble read_ensemble(const std::filesystem::path& stem);

nlohmann::json to_json(const EnsembleMeta& m);
EnsembleMeta ensemble_meta_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnergyStats& s);

}  // namespace cdsim
