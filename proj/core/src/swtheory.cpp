#include "cdsim/swtheory.hpp"

#include <cmath>

#include "cdsim/errors.hpp"

namespace cdsim {

namespace {

bool is_integrable(std::string_view model) {
  if (model == "H_I") return true;
  if (model == "H_NI") return false;
  throw ConfigError("no slow-driving prediction for model '" + std::string(model) +
                    "'");
}

}  // namespace

double SwPrediction::variance(double beta, double E0, double m,
                              double omega) const {
  if (!(beta >= 0.0)) throw OutOfRange("beta must be non-negative");
  if (!(E0 > 0.0 && m > 0.0 && omega > 0.0)) {
    throw OutOfRange("E0, m and omega must be positive");
  }
  return coefficient * std::pow(E0, 4) / (std::pow(m, 4) * std::pow(omega, 8)) *
         beta * beta;
}

SwPrediction sw_prediction(std::string_view model) {
  return {std::string(model), is_integrable(model) ? 1.0 / 720.0 : 7.0 / 2880.0};
}

double sw_variance(std::string_view model, double beta, double E0, double m,
                   double omega) {
  return sw_prediction(model).variance(beta, E0, m, omega);
}

std::vector<double> quantum_block_matrix(const QuantumBlockSpec& spec) {
  if (spec.N < 2) throw OutOfRange("quantum block needs N >= 2");
  const bool integrable = is_integrable(spec.model);
  const int N = spec.N;
  const std::size_t dim = static_cast<std::size_t>(N + 1);
  std::vector<double> M(dim * dim, 0.0);
  for (int nx = 0; nx <= N; ++nx) {
    const double a = nx;
    const double b = N - nx;
    const std::size_t i = static_cast<std::size_t>(nx);
    // Time-averaged diagonal part after normal ordering.
    M[i * dim + i] = integrable
                         ? 3 * a * a + 3 * b * b + 4 * a * b + 5 * a + 5 * b + 3
                         : 4 * a * b + 2 * a + 2 * b + 1;
    // (a_x^dag)^2 a_y^2 |nx, ny> = sqrt(ny (ny-1) (nx+1) (nx+2)) |nx+2, ny-2>.
    if (nx + 2 <= N) {
      const double h = std::sqrt(b * (b - 1) * (a + 1) * (a + 2));
      const std::size_t j = i + 2;
      M[j * dim + i] = h;
      M[i * dim + j] = h;
    }
  }
  return M;
}

BlockMoments quantum_block_moments(const QuantumBlockSpec& spec) {
  const auto M = quantum_block_matrix(spec);
  const std::size_t dim = static_cast<std::size_t>(spec.N + 1);
  double trace = 0.0;
  double frob = 0.0;
  for (std::size_t i = 0; i < dim; ++i) {
    trace += M[i * dim + i];
    for (std::size_t j = 0; j < dim; ++j) frob += M[i * dim + j] * M[i * dim + j];
  }
  // hbar^2 / 8 with hbar = 1 / N.
  const double unit = 1.0 / (8.0 * double(spec.N) * spec.N);
  BlockMoments m;
  m.mean = unit * trace / double(dim);
  m.raw = unit * unit * frob / double(dim);
  m.connected = m.raw - m.mean * m.mean;
  return m;
}

double quantum_block_variance(const QuantumBlockSpec& spec) {
  return quantum_block_moments(spec).connected;
}

BlockConvergence block_convergence(std::string_view model,
                                   const std::vector<int>& Ns) {
  const double coef = sw_prediction(model).coefficient;
  BlockConvergence c;
  for (int N : Ns) {
    c.N.push_back(N);
    c.ratio.push_back(quantum_block_variance({N, std::string(model)}) / coef);
  }
  // Least-squares slope of log|ratio - 1| against log N.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (std::size_t i = 0; i < c.N.size(); ++i) {
    const double d = std::abs(c.ratio[i] - 1.0);
    if (!(d > 0.0)) continue;
    const double x = std::log(double(c.N[i]));
    const double y = std::log(d);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  if (k >= 2) c.exponent = -(k * sxy - sx * sy) / (k * sxx - sx * sx);
  if (c.N.size() >= 2) {
    const std::size_t a = c.N.size() - 2;
    const std::size_t b = c.N.size() - 1;
    const double Na = c.N[a];
    const double Nb = c.N[b];
    c.extrapolated = (Nb * c.ratio[b] - Na * c.ratio[a]) / (Nb - Na);
  } else if (!c.ratio.empty()) {
    c.extrapolated = c.ratio.back();
  }
  return c;
}

}  // namespace cdsim
