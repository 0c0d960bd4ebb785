#include "cdsim/agp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "cdsim/dynamics.hpp"
#include "cdsim/errors.hpp"
#include "cdsim/poly_eval.hpp"
#include "cdsim/random.hpp"

namespace cdsim {

namespace {

// Scaled systems with a smaller reciprocal condition number are treated as
// singular.
constexpr double kMinRcond = 1e-12;
constexpr double kMuGrowth = 100.0;
constexpr int kMaxMuBumps = 12;
constexpr double kDefaultMuScale = 1e-8;

// Population moments of the basis columns over an ensemble.
struct Moments {
  int order = 0;
  std::size_t n = 0;
  // Column layout: 0 = dH/dbeta, 1..l = Q, l+1..2l = {Q, H}.
  std::vector<double> values;  // column-major, n per column
  Eigen::MatrixXd cov;

  const double* column(std::size_t c) const { return values.data() + c * n; }
  std::size_t q(int k) const { return 1 + static_cast<std::size_t>(k); }
  std::size_t r(int k) const { return 1 + static_cast<std::size_t>(order + k); }
};

Moments compute_moments(const AgpBasis& basis, const Ensemble& moments) {
  const double tol = 1e-9 * std::max(1.0, std::abs(basis.beta));
  if (std::abs(moments.meta.beta - basis.beta) > tol) {
    throw MomentMismatch("moment ensemble taken at beta=" +
                         std::to_string(moments.meta.beta) +
                         " but basis built at beta=" + std::to_string(basis.beta));
  }
  if (moments.size() < 2) throw OutOfRange("moment ensemble too small");

  Moments m;
  m.order = basis.order;
  m.n = moments.size();
  std::vector<PhasePolynomial> cols;
  cols.reserve(1 + 2 * basis.Q.size());
  cols.push_back(basis.Q0);
  cols.insert(cols.end(), basis.Q.begin(), basis.Q.end());
  cols.insert(cols.end(), basis.QH.begin(), basis.QH.end());
  const std::size_t nc = cols.size();

  const PolynomialBlock block(cols);
  const PointBuffer buf(moments.points);
  m.values.resize(nc * m.n);
  block.evaluate(buf.view(), m.values);

  std::vector<double> mean(nc, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    const double* v = m.column(c);
    double s = 0.0;
    for (std::size_t i = 0; i < m.n; ++i) s += v[i];
    mean[c] = s / static_cast<double>(m.n);
  }
  for (std::size_t c = 0; c < nc; ++c) {
    double* v = m.values.data() + c * m.n;
    for (std::size_t i = 0; i < m.n; ++i) v[i] -= mean[c];
  }
  const Eigen::Map<const Eigen::MatrixXd> X(m.values.data(),
                                            static_cast<Eigen::Index>(m.n),
                                            static_cast<Eigen::Index>(nc));
  m.cov = (X.transpose() * X) / static_cast<double>(m.n);
  return m;
}

double mu_from_moments(const Moments& m) {
  if (m.order < 1) return 0.0;
  const double qq = m.cov(m.q(0), m.q(0));
  const double rr = m.cov(m.r(0), m.r(0));
  if (!(qq > 0.0)) return 0.0;
  return std::sqrt(kDefaultMuScale * rr / qq);
}

struct Attempt {
  bool ok = false;
  Eigen::VectorXd gamma;  // zero on dropped directions
  double rcond = 0.0;
  int rank = 0;
};

// Regularized normal equations restricted to the columns in `active`,
// Jacobi-equilibrated and factored with LDLT.
struct BlockFactor {
  bool ok = false;
  double rcond = 0.0;
  Eigen::VectorXd gamma;
};

BlockFactor factor_block(const Moments& m, const std::vector<int>& active,
                         double mu) {
  const Eigen::Index L = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd M(L, L);
  Eigen::VectorXd b(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    const int aj = active[static_cast<std::size_t>(j)];
    b(j) = m.cov(m.r(aj), 0);
    for (Eigen::Index k = 0; k < L; ++k) {
      const int ak = active[static_cast<std::size_t>(k)];
      M(j, k) = m.cov(m.r(aj), m.r(ak)) + mu * mu * m.cov(m.q(aj), m.q(ak));
    }
  }
  BlockFactor f;
  Eigen::VectorXd d(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    if (!(M(j, j) > 0.0) || !std::isfinite(M(j, j))) return f;
    d(j) = 1.0 / std::sqrt(M(j, j));
  }
  const Eigen::MatrixXd S = d.asDiagonal() * M * d.asDiagonal();
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return f;
  // Eigen's solve zeroes exactly vanishing pivots, so rcond() alone can miss
  // an exactly dependent column; the pivot ratio catches it.
  const Eigen::VectorXd D = ldlt.vectorD().cwiseAbs();
  const double pivots = D.maxCoeff() > 0.0 ? D.minCoeff() / D.maxCoeff() : 0.0;
  f.rcond = std::min(ldlt.rcond(), pivots);
  if (!(f.rcond >= kMinRcond)) return f;
  f.gamma = d.asDiagonal() * ldlt.solve(d.asDiagonal() * b);
  f.ok = f.gamma.allFinite();
  return f;
}

// Truncation l. Basis directions are admitted in index order and skipped when
// they make the scaled system singular, which happens when the Krylov space
// closes (e.g. a harmonic H has finitely many frequencies). Admission is
// greedy, so the admitted set at l extends the one at l - 1.
Attempt solve_block(const Moments& m, int l, double mu) {
  Attempt a;
  a.gamma = Eigen::VectorXd::Zero(l);
  std::vector<int> active;
  BlockFactor best;
  for (int j = 0; j < l; ++j) {
    active.push_back(j);
    BlockFactor f = factor_block(m, active, mu);
    if (f.ok) {
      best = std::move(f);
    } else {
      active.pop_back();
    }
  }
  if (active.empty() || !best.ok) return a;
  for (std::size_t k = 0; k < active.size(); ++k) {
    a.gamma(active[k]) = best.gamma(static_cast<Eigen::Index>(k));
  }
  a.rcond = best.rcond;
  a.rank = static_cast<int>(active.size());
  a.ok = true;
  return a;
}

double population_variance(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  const double mean = s / static_cast<double>(v.size());
  double q = 0.0;
  for (double x : v) q += (x - mean) * (x - mean);
  return q / static_cast<double>(v.size());
}

AgpSolution finish(const Moments& m, const AgpBasis& basis, int l, double mu,
                   const Attempt& a) {
  AgpSolution s;
  s.beta = basis.beta;
  s.mu = mu;
  s.rcond = a.rcond;
  s.rank = a.rank;
  s.gamma.assign(a.gamma.data(), a.gamma.data() + a.gamma.size());
  s.zero_action = m.cov(0, 0);
  // Direct evaluation of both norms avoids cancellation in the quadratic form.
  std::vector<double> G(m.column(0), m.column(0) + m.n);
  std::vector<double> A(m.n, 0.0);
  for (int k = 0; k < l; ++k) {
    const double g = s.gamma[static_cast<std::size_t>(k)];
    const double* r = m.column(m.r(k));
    const double* q = m.column(m.q(k));
    for (std::size_t i = 0; i < m.n; ++i) {
      G[i] -= g * r[i];
      A[i] += g * q[i];
    }
  }
  s.residual_norm = population_variance(G);
  s.action_value = s.residual_norm + mu * mu * population_variance(A);
  return s;
}

std::vector<AgpSolution> nested_from_moments(const Moments& m,
                                             const AgpBasis& basis, double mu) {
  if (mu < 0.0) mu = mu_from_moments(m);
  for (int bump = 0; bump <= kMaxMuBumps; ++bump) {
    std::vector<Attempt> attempts;
    bool ok = true;
    for (int l = 1; l <= m.order && ok; ++l) {
      attempts.push_back(solve_block(m, l, mu));
      ok = attempts.back().ok;
    }
    if (ok && mu == 0.0 && attempts.back().rank < m.order) ok = false;
    if (ok) {
      std::vector<AgpSolution> out;
      for (int l = 1; l <= m.order; ++l) {
        out.push_back(finish(m, basis, l, mu, attempts[static_cast<std::size_t>(l - 1)]));
      }
      return out;
    }
    if (mu == 0.0) {
      throw SingularSystem("variational system singular at beta=" +
                           std::to_string(basis.beta) + " with mu=0");
    }
    mu *= kMuGrowth;
  }
  throw SingularSystem("variational system singular at beta=" +
                       std::to_string(basis.beta) +
                       " after raising mu to " + std::to_string(mu));
}

std::vector<double> ascending_grid(double a, double b, std::size_t size) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  std::vector<double> g(size);
  for (std::size_t k = 0; k < size; ++k) {
    g[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(size - 1);
  }
  g.front() = lo;
  g.back() = hi;
  return g;
}

}  // namespace

std::string_view to_string(MomentSource m) noexcept {
  return m == MomentSource::shell ? "shell" : "reference_run";
}

MomentSource moment_source_from_string(std::string_view s) {
  if (s == "reference_run") return MomentSource::reference_run;
  if (s == "shell") return MomentSource::shell;
  throw ConfigError("unknown moment source '" + std::string(s) +
                    "' (expected reference_run or shell)");
}

std::vector<PhasePolynomial> chebyshev_chain(const PhasePolynomial& H,
                                             const PhasePolynomial& Q0, int last,
                                             const AlgebraLimits& limits) {
  if (last < 0) throw OutOfRange("chebyshev_chain: negative length");
  std::vector<PhasePolynomial> chain{Q0};
  for (int n = 0; n < last; ++n) {
    PhasePolynomial next = poisson_bracket(H, chain.back(), limits);
    if (n > 0) next = 2.0 * next - chain[static_cast<std::size_t>(n - 1)];
    chain.push_back(std::move(next));
  }
  return chain;
}

AgpBasis build_basis(const ModelSpec& model, double beta, int order,
                     const AlgebraLimits& limits) {
  if (order < 0) throw OutOfRange("AGP order must be non-negative");
  AgpBasis b;
  b.beta = beta;
  b.order = order;
  b.hamiltonian = model.hamiltonian(beta);
  b.Q0 = model.dH_dbeta;
  if (order == 0) return b;
  // bracket[n] = {H, Q_n}; the chain and the {Q, H} columns both reuse it.
  std::vector<PhasePolynomial> chain{b.Q0};
  for (int n = 0; n < 2 * order; ++n) {
    PhasePolynomial br = poisson_bracket(b.hamiltonian, chain.back(), limits);
    if (n % 2 == 1) b.QH.push_back(-br);
    if (n + 1 < 2 * order) {
      if (n > 0) br = 2.0 * br - chain[static_cast<std::size_t>(n - 1)];
      chain.push_back(std::move(br));
    }
  }
  for (int k = 1; k <= order; ++k) {
    b.Q.push_back(chain[static_cast<std::size_t>(2 * k - 1)]);
  }
  return b;
}

double default_mu(const AgpBasis& basis, const Ensemble& moments) {
  return mu_from_moments(compute_moments(basis, moments));
}

AgpSolution solve_variational(const AgpBasis& basis, const Ensemble& moments,
                              double mu) {
  if (basis.order < 1) throw OutOfRange("solve_variational needs order >= 1");
  const Moments m = compute_moments(basis, moments);
  if (mu < 0.0) mu = mu_from_moments(m);
  for (int bump = 0; bump <= kMaxMuBumps; ++bump) {
    const Attempt a = solve_block(m, basis.order, mu);
    if (a.ok && (mu > 0.0 || a.rank == basis.order)) return finish(m, basis, basis.order, mu, a);
    if (mu == 0.0) {
      throw SingularSystem("variational system singular at beta=" +
                           std::to_string(basis.beta) + " with mu=0");
    }
    mu *= kMuGrowth;
  }
  throw SingularSystem("variational system singular at beta=" +
                       std::to_string(basis.beta));
}

std::vector<AgpSolution> solve_variational_nested(const AgpBasis& basis,
                                                  const Ensemble& moments,
                                                  double mu) {
  if (basis.order < 1) throw OutOfRange("solve_variational needs order >= 1");
  return nested_from_moments(compute_moments(basis, moments), basis, mu);
}

std::vector<AgpTable> tabulate_orders(const ProtocolSpec& protocol,
                                      const TabulateOptions& opts) {
  if (opts.order < 1) throw OutOfRange("tabulate: order must be >= 1");
  if (opts.grid_size < 2) throw OutOfRange("tabulate: grid_size must be >= 2");
  if (!(opts.reference_tau > 0.0)) throw OutOfRange("tabulate: reference_tau must be positive");
  const ModelSpec& model = *protocol.model;

  const std::vector<double> grid =
      ascending_grid(protocol.beta_i, protocol.beta_f, opts.grid_size);
  const RampSchedule ramp = RampSchedule::smooth_sine(
      protocol.beta_i, protocol.beta_f, opts.reference_tau);
  const EvolutionPlan plan = EvolutionPlan::make(model, ramp, nullptr, opts.dt);

  const std::uint64_t ref_seed =
      derive_seed(opts.seed, static_cast<std::uint64_t>(Stream::reference));
  std::vector<AgpTable> tables(static_cast<std::size_t>(opts.order));
  for (int l = 1; l <= opts.order; ++l) {
    AgpTable& t = tables[static_cast<std::size_t>(l - 1)];
    t.model = model.name;
    t.protocol = protocol.name;
    t.order = l;
    t.beta_grid = grid;
    t.solutions.resize(grid.size());
    t.basis.resize(grid.size());
    t.provenance = {opts.moments, opts.seed, opts.reference_tau, opts.n, plan.dt};
  }

  auto solve_at = [&](std::size_t k, const Ensemble& snapshot) {
    const AgpBasis basis = build_basis(model, grid[k], opts.order, opts.limits);
    std::vector<AgpSolution> nested;
    try {
      nested = nested_from_moments(compute_moments(basis, snapshot), basis, opts.mu);
    } catch (const SingularSystem& e) {
      throw SingularSystem(std::string(e.what()) + " (grid point " + std::to_string(k) + ")");
    }
    for (int l = 1; l <= opts.order; ++l) {
      AgpTable& t = tables[static_cast<std::size_t>(l - 1)];
      t.solutions[k] = nested[static_cast<std::size_t>(l - 1)];
      t.basis[k].assign(basis.Q.begin(), basis.Q.begin() + l);
    }
  };

  if (opts.moments == MomentSource::shell) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
      Ensemble snap = sample_microcanonical(model, grid[k], protocol.E0, opts.n,
                                            derive_seed(ref_seed, k));
      snap.meta.beta = grid[k];
      solve_at(k, snap);
    }
    return tables;
  }

  // Visit grid points in the order the ramp reaches them.
  Ensemble ens = sample_microcanonical(model, protocol.beta_i, protocol.E0,
                                       opts.n, ref_seed);
  const bool ascending = protocol.beta_f >= protocol.beta_i;
  double t_prev = 0.0;
  for (std::size_t s = 0; s < grid.size(); ++s) {
    const std::size_t k = ascending ? s : grid.size() - 1 - s;
    const double t_k = (s == 0) ? 0.0
                       : (s + 1 == grid.size()) ? opts.reference_tau
                                                : ramp.time_at_beta(grid[k]);
    if (t_k > t_prev) ens = evolve_ensemble(ens, plan, t_prev, t_k);
    t_prev = std::max(t_prev, t_k);
    ens.meta.beta = grid[k];
    solve_at(k, ens);
  }
  return tables;
}

AgpTable tabulate(const ProtocolSpec& protocol, const TabulateOptions& opts) {
  auto tables = tabulate_orders(protocol, opts);
  return std::move(tables.back());
}

GridLocation locate(const std::vector<double>& grid, double beta) {
  if (grid.size() < 2) throw OutOfRange("beta grid needs at least two points");
  const double span = grid.back() - grid.front();
  const double slack = 1e-12 * std::max(1.0, std::abs(span));
  if (beta < grid.front() - slack || beta > grid.back() + slack) {
    throw OutOfRange("beta=" + std::to_string(beta) + " outside the AGP grid [" +
                     std::to_string(grid.front()) + ", " +
                     std::to_string(grid.back()) + "]");
  }
  beta = std::clamp(beta, grid.front(), grid.back());
  const auto it = std::upper_bound(grid.begin(), grid.end(), beta);
  std::size_t k = static_cast<std::size_t>(std::distance(grid.begin(), it));
  k = std::min(k == 0 ? 0 : k - 1, grid.size() - 2);
  GridLocation loc;
  loc.interval = k;
  loc.weight = (beta - grid[k]) / (grid[k + 1] - grid[k]);
  return loc;
}

PhasePolynomial agp_polynomial(const AgpTable& table, double beta) {
  if (table.order == 0) return {};
  const GridLocation loc = locate(table.beta_grid, beta);
  const std::size_t k = loc.interval;
  const PhasePolynomial left =
      linear_combination(table.solutions[k].gamma, table.basis[k]);
  if (loc.weight == 0.0) return left;
  const PhasePolynomial right =
      linear_combination(table.solutions[k + 1].gamma, table.basis[k + 1]);
  if (loc.weight == 1.0) return right;
  return (1.0 - loc.weight) * left + loc.weight * right;
}

nlohmann::json to_json(const AgpSolution& s) {
  return {{"beta", s.beta},
          {"gamma", s.gamma},
          {"action_value", s.action_value},
          {"residual_norm", s.residual_norm},
          {"mu", s.mu},
          {"zero_action", s.zero_action},
          {"rcond", s.rcond},
          {"rank", s.rank}};
}

nlohmann::json to_json(const AgpTable& t, bool embed_basis) {
  nlohmann::json j;
  j["model"] = t.model;
  j["protocol"] = t.protocol;
  j["order"] = t.order;
  j["beta_grid"] = t.beta_grid;
  j["solutions"] = nlohmann::json::array();
  for (const auto& s : t.solutions) j["solutions"].push_back(to_json(s));
  j["provenance"] = {{"moments", to_string(t.provenance.moments)},
                     {"seed", t.provenance.seed},
                     {"reference_tau", t.provenance.reference_tau},
                     {"n", t.provenance.n},
                     {"reference_dt", t.provenance.reference_dt}};
  if (embed_basis) {
    nlohmann::json b = nlohmann::json::array();
    for (const auto& polys : t.basis) {
      nlohmann::json row = nlohmann::json::array();
      for (const auto& p : polys) row.push_back(to_json(p));
      b.push_back(std::move(row));
    }
    j["basis"] = std::move(b);
  }
  return j;
}

AgpTable agp_table_from_json(const nlohmann::json& j, const AlgebraLimits& limits) {
  AgpTable t;
  t.model = j.at("model").get<std::string>();
  t.protocol = j.at("protocol").get<std::string>();
  t.order = j.at("order").get<int>();
  t.beta_grid = j.at("beta_grid").get<std::vector<double>>();
  for (const auto& s : j.at("solutions")) {
    AgpSolution sol;
    sol.beta = s.at("beta").get<double>();
    sol.gamma = s.at("gamma").get<std::vector<double>>();
    sol.action_value = s.at("action_value").get<double>();
    sol.residual_norm = s.at("residual_norm").get<double>();
    sol.mu = s.at("mu").get<double>();
    sol.zero_action = s.value("zero_action", 0.0);
    sol.rcond = s.value("rcond", 0.0);
    sol.rank = s.value("rank", static_cast<int>(sol.gamma.size()));
    t.solutions.push_back(std::move(sol));
  }
  if (t.solutions.size() != t.beta_grid.size()) {
    throw Error("AGP table: one solution per grid point required");
  }
  const auto& p = j.at("provenance");
  t.provenance.moments =
      moment_source_from_string(p.value("moments", std::string("reference_run")));
  t.provenance.seed = p.at("seed").get<std::uint64_t>();
  t.provenance.reference_tau = p.at("reference_tau").get<double>();
  t.provenance.n = p.at("n").get<std::size_t>();
  t.provenance.reference_dt = p.value("reference_dt", 0.0);
  if (j.contains("basis")) {
    for (const auto& row : j.at("basis")) {
      std::vector<PhasePolynomial> polys;
      for (const auto& q : row) polys.push_back(polynomial_from_json(q));
      t.basis.push_back(std::move(polys));
    }
  } else if (t.order > 0) {
    const ModelSpec& model = model_by_name(t.model);
    for (double beta : t.beta_grid) {
      t.basis.push_back(build_basis(model, beta, t.order, limits).Q);
    }
  }
  if (t.order > 0 && t.basis.size() != t.beta_grid.size()) {
    throw Error("AGP table: basis does not match the grid");
  }
  return t;
}

}  // namespace cdsim
