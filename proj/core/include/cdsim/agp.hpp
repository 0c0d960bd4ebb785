#pragma once

// Variational adiabatic gauge potential in a Chebyshev basis of nested
// Poisson brackets.

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cdsim/ensemble.hpp"
#include "cdsim/models.hpp"
#include "cdsim/polynomial.hpp"

namespace cdsim {

/// Chebyshev chain Q_0 = dH/dbeta, Q_1 = {H, Q_0},
/// Q_{n+1} = 2 {H, Q_n} - Q_{n-1}. Returns Q_0 .. Q_last.
std::vector<PhasePolynomial> chebyshev_chain(const PhasePolynomial& H,
                                             const PhasePolynomial& Q0,
                                             int last,
                                             const AlgebraLimits& limits = {});

struct AgpBasis {
  double beta = 0.0;
  int order = 0;
  PhasePolynomial hamiltonian;      // H(beta)
  PhasePolynomial Q0;               // dH/dbeta
  std::vector<PhasePolynomial> Q;   // Q_1, Q_3, ..., Q_{2l-1}
  std::vector<PhasePolynomial> QH;  // {Q_{2k-1}, H} for each element of Q
};

/// Throws DegreeOverflow when the chain exceeds limits.max_degree.
AgpBasis build_basis(const ModelSpec& model, double beta, int order,
                     const AlgebraLimits& limits = {});

struct AgpSolution {
  double beta = 0.0;
  std::vector<double> gamma;
  double action_value = 0.0;   // ||G||^2 + mu^2 ||A||^2 at the optimum
  double residual_norm = 0.0;  // ||G||^2 at the optimum
  double mu = 0.0;             // regularization actually used
  double zero_action = 0.0;    // ||dH/dbeta||^2, the action of A = 0
  double rcond = 0.0;          // reciprocal condition of the scaled system
  int rank = 0;                // basis directions kept; the rest have gamma 0
};

/// mu with mu^2 = 1e-8 ||{Q_1, H}||^2 / ||Q_1||^2 on the given ensemble.
double default_mu(const AgpBasis& basis, const Ensemble& moments);

/// Minimizes ||dH/dbeta - {A, H}||^2 + mu^2 ||A||^2 over A = sum_k gamma_k
/// Q_{2k-1}, with ||O||^2 the connected second moment over `moments`.
/// mu < 0 selects default_mu. Basis directions that are numerically dependent
/// on earlier ones are dropped (gamma 0). With mu = 0 any such drop throws
/// SingularSystem; with mu > 0 the regularization is raised if even the
/// reduced system cannot be factored. Throws MomentMismatch if the ensemble was taken at
/// a different beta.
AgpSolution solve_variational(const AgpBasis& basis, const Ensemble& moments,
                              double mu = -1.0);

/// Solutions for every truncation order 1..basis.order on a common mu, so the
/// action values are nested minima.
std::vector<AgpSolution> solve_variational_nested(const AgpBasis& basis,
                                                  const Ensemble& moments,
                                                  double mu = -1.0);

/// Where the expectation values of a table come from.
enum class MomentSource {
  reference_run,  // snapshots of one slow unassisted ramp
  shell,          // a fresh microcanonical sample at each grid beta
};
std::string_view to_string(MomentSource m) noexcept;
MomentSource moment_source_from_string(std::string_view s);

/// Tabulated gauge potential along a protocol.
struct AgpTable {
  struct Provenance {
    MomentSource moments = MomentSource::reference_run;
    std::uint64_t seed = 0;
    double reference_tau = 10.0;
    std::size_t n = 0;
    double reference_dt = 0.0;
  };

  std::string model;
  std::string protocol;
  int order = 0;
  std::vector<double> beta_grid;  // ascending
  std::vector<AgpSolution> solutions;
  /// Odd basis elements per grid point; may be empty for order 0.
  std::vector<std::vector<PhasePolynomial>> basis;
  Provenance provenance;
};

struct TabulateOptions {
  int order = 3;
  std::size_t grid_size = 51;
  double mu = -1.0;  // < 0 => default_mu at each grid point
  double reference_tau = 10.0;
  std::uint64_t seed = 0;
  std::size_t n = 10000;
  double dt = 0.0;  // <= 0 => default_dt of the reference ramp
  MomentSource moments = MomentSource::reference_run;
  AlgebraLimits limits;
};

/// Runs one unassisted smooth ramp of duration reference_tau from beta_i to
/// beta_f, snapshots the ensemble when beta(t) reaches each grid value, and
/// solves the variational problem there. With MomentSource::shell each grid
/// point instead gets its own microcanonical sample.
AgpTable tabulate(const ProtocolSpec& protocol, const TabulateOptions& opts);

/// Tables for orders 1..opts.order sharing one reference run and one mu per
/// grid point.
std::vector<AgpTable> tabulate_orders(const ProtocolSpec& protocol,
                                      const TabulateOptions& opts);

/// Linear blend (1 - w) A_k + w A_{k+1} of the tabulated potentials at the
/// grid points bracketing beta, each A_j = sum gamma(j) Q(beta_j) in its own
/// basis. Exact tabulated combination on grid points. Throws OutOfRange
/// outside the grid.
PhasePolynomial agp_polynomial(const AgpTable& table, double beta);

/// Index k of the grid interval [grid[k], grid[k+1]] containing beta, and the
/// interpolation weight of the right endpoint.
struct GridLocation {
  std::size_t interval = 0;
  double weight = 0.0;
};
GridLocation locate(const std::vector<double>& grid, double beta);

nlohmann::json to_json(const AgpSolution& s);
nlohmann::json to_json(const AgpTable& t, bool embed_basis = true);
/// Rebuilds the basis from the model when the JSON carries none.
AgpTable agp_table_from_json(const nlohmann::json& j,
                             const AlgebraLimits& limits = {});

}  // namespace cdsim
