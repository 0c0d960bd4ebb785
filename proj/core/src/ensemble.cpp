#include "cdsim/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdsim/errors.hpp"
#include "cdsim/poly_eval.hpp"
#include "cdsim/random.hpp"

namespace cdsim {

namespace {

constexpr double kMinAcceptance = 1e-6;

// Neumaier-compensated sum in index order.
struct CompensatedSum {
  double sum = 0.0;
  double c = 0.0;
  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      c += (sum - t) + v;
    } else {
      c += (v - t) + sum;
    }
    sum = t;
  }
  double value() const { return sum + c; }
};

}  // namespace

Ensemble sample_harmonic_shell(double E0, std::size_t n, std::uint64_t seed,
                               int dof) {
  if (!(E0 > 0.0)) throw OutOfRange("E0 must be positive");
  if (n < 2) throw OutOfRange("ensemble size must be at least 2");
  if (dof != 1 && dof != 2) throw OutOfRange("dof must be 1 or 2");

  Ensemble e;
  e.points.resize(n);
  e.meta = {seed, dof == 2 ? "harmonic_shell" : "harmonic_shell_1d",
            "", 0.0, E0, 0.0};
  const double radius = std::sqrt(2.0 * E0);
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    auto gen = make_stream(seed, Stream::sampling, static_cast<std::uint64_t>(i));
    std::normal_distribution<double> normal(0.0, 1.0);
    PhasePoint z;
    double r2 = 0.0;
    do {
      z.x = normal(gen);
      z.px = normal(gen);
      if (dof == 2) {
        z.y = normal(gen);
        z.py = normal(gen);
      }
      r2 = z.x * z.x + z.y * z.y + z.px * z.px + z.py * z.py;
    } while (r2 == 0.0);
    const double s = radius / std::sqrt(r2);
    for (Var v : kAllVars) z[v] *= s;
    e.points[static_cast<std::size_t>(i)] = z;
  }
  return e;
}

Ensemble sample_general_shell(const ModelSpec& model, double beta, double E0,
                              std::size_t n, double shell_width,
                              std::uint64_t seed) {
  if (!(E0 > 0.0)) throw OutOfRange("E0 must be positive");
  if (n < 2) throw OutOfRange("ensemble size must be at least 2");
  if (!(shell_width > 0.0)) throw OutOfRange("shell_width must be positive");

  const PhasePolynomial H = model.hamiltonian(beta);
  const double half = 0.5 * shell_width;
  const double box = std::sqrt(2.0 * E0);
  // A single point may not need more proposals than this before the overall
  // acceptance rate is known to be below the stall threshold.
  const std::uint64_t per_point_cap =
      static_cast<std::uint64_t>(1.0 / kMinAcceptance) * 10;

  Ensemble e;
  e.points.resize(n);
  e.meta = {seed, "rejection_box", model.name, beta, E0, shell_width};

  std::atomic<bool> stalled{false};
  std::atomic<std::uint64_t> attempts{0};
  const std::ptrdiff_t count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 64)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    if (stalled.load(std::memory_order_relaxed)) continue;
    auto gen = make_stream(seed, Stream::sampling, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> unif(-box, box);
    std::uint64_t tries = 0;
    PhasePoint z;
    for (;;) {
      ++tries;
      z.x = unif(gen);
      z.px = unif(gen);
      if (model.dof == 2) {
        z.y = unif(gen);
        z.py = unif(gen);
      }
      if (std::abs(evaluate(H, z) - E0) <= half) break;
      if (tries >= per_point_cap) {
        stalled = true;
        break;
      }
    }
    attempts += tries;
    e.points[static_cast<std::size_t>(i)] = z;
  }
  const double rate = static_cast<double>(n) / static_cast<double>(attempts.load());
  if (stalled || rate < kMinAcceptance) {
    throw RejectionStall("shell sampler acceptance below 1e-6 for model " +
                         model.name + " at beta=" + std::to_string(beta) +
                         ", E0=" + std::to_string(E0) +
                         ", width=" + std::to_string(shell_width));
  }
  return e;
}

Ensemble sample_quadratic_1d_shell(const ModelSpec& model, double beta,
                                   double E0, std::size_t n, std::uint64_t seed) {
  if (!(E0 > 0.0)) throw OutOfRange("E0 must be positive");
  if (n < 2) throw OutOfRange("ensemble size must be at least 2");
  const PhasePolynomial H = model.hamiltonian(beta);
  const double a = H.coefficient(Monomial(0, 0, 2, 0));
  const double b = H.coefficient(Monomial(2, 0, 0, 0));
  const bool quadratic = model.dof == 1 && H.size() == 2 && a > 0.0 && b > 0.0;
  if (!quadratic) {
    throw OutOfRange("sample_quadratic_1d_shell needs H = a px^2 + b x^2 with a, b > 0");
  }
  Ensemble e;
  e.points.resize(n);
  e.meta = {seed, "quadratic_1d_shell", model.name, beta, E0, 0.0};
  const double rx = std::sqrt(E0 / b);
  const double rp = std::sqrt(E0 / a);
  for (std::size_t i = 0; i < n; ++i) {
    auto gen = make_stream(seed, Stream::sampling, i);
    const double theta =
        std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(gen);
    e.points[i] = {rx * std::cos(theta), 0.0, rp * std::sin(theta), 0.0};
  }
  return e;
}

Ensemble sample_microcanonical(const ModelSpec& model, double beta, double E0,
                               std::size_t n, std::uint64_t seed,
                               double shell_width) {
  if (beta == 0.0) {
    Ensemble e = sample_harmonic_shell(E0, n, seed, model.dof);
    e.meta.model = model.name;
    return e;
  }
  if (model.dof == 1 && model.H0.degree() <= 2 && model.V.degree() <= 2) {
    return sample_quadratic_1d_shell(model, beta, E0, n, seed);
  }
  if (shell_width <= 0.0) shell_width = kDefaultShellWidthFraction * E0;
  return sample_general_shell(model, beta, E0, n, shell_width, seed);
}

std::vector<double> point_energies(std::span<const PhasePoint> points,
                                   const PhasePolynomial& H) {
  const PolynomialBlock block(std::span<const PhasePolynomial>(&H, 1));
  return block.evaluate(points);
}

EnergyStats energy_stats(std::span<const double> energies) {
  const std::size_t n = energies.size();
  if (n == 0) throw OutOfRange("energy_stats on an empty sample");
  EnergyStats s;
  s.count = n;
  CompensatedSum sum;
  for (double v : energies) sum.add(v);
  s.mean = sum.value() / static_cast<double>(n);
  if (n < 2) return s;

  CompensatedSum sq;
  for (double v : energies) sq.add((v - s.mean) * (v - s.mean));
  const double S2 = sq.value();
  s.variance = S2 / static_cast<double>(n - 1);
  if (n < 3) return s;

  // Leave-one-out variances in closed form:
  // var_{-i} = (S2 - d_i^2 n / (n - 1)) / (n - 2), d_i = e_i - mean.
  const double nd = static_cast<double>(n);
  std::vector<double> loo(n);
  CompensatedSum loo_sum;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = energies[i] - s.mean;
    loo[i] = (S2 - d * d * nd / (nd - 1.0)) / (nd - 2.0);
    loo_sum.add(loo[i]);
  }
  const double loo_mean = loo_sum.value() / nd;
  CompensatedSum dev;
  for (double v : loo) dev.add((v - loo_mean) * (v - loo_mean));
  s.std_error_of_variance = std::sqrt(std::max(0.0, (nd - 1.0) / nd * dev.value()));
  return s;
}

EnergyStats energy_stats(const Ensemble& e, const PhasePolynomial& H) {
  const auto en = point_energies(e.points, H);
  return energy_stats(en);
}

nlohmann::json to_json(const EnsembleMeta& m) {
  return {{"seed", m.seed},         {"sampler", m.sampler}, {"model", m.model},
          {"beta", m.beta},         {"E0", m.E0},
          {"shell_width", m.shell_width}};
}

EnsembleMeta ensemble_meta_from_json(const nlohmann::json& j) {
  EnsembleMeta m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.sampler = j.at("sampler").get<std::string>();
  m.model = j.at("model").get<std::string>();
  m.beta = j.at("beta").get<double>();
  m.E0 = j.at("E0").get<double>();
  m.shell_width = j.at("shell_width").get<double>();
  return m;
}

nlohmann::json to_json(const EnergyStats& s) {
  return {{"mean", s.mean},
          {"variance", s.variance},
          {"count", s.count},
          {"std_error_of_variance", s.std_error_of_variance}};
}

void write_ensemble(const std::filesystem::path& stem, const Ensemble& e) {
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path meta = stem;
  meta += ".json";
  std::ofstream out(csv);
  if (!out) throw Error("cannot open " + csv.string());
  out.precision(17);
  out << "x,y,px,py\n";
  for (const auto& z : e.points) {
    out << z.x << ',' << z.y << ',' << z.px << ',' << z.py << '\n';
  }
  std::ofstream m(meta);
  if (!m) throw Error("cannot open " + meta.string());
  nlohmann::json j = to_json(e.meta);
  j["count"] = e.points.size();
  m << j.dump(2) << '\n';
}

Ensemble read_ensemble(const std::filesystem::path& stem) {
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::filesystem::path meta = stem;
  meta += ".json";
  Ensemble e;
  std::ifstream m(meta);
  if (!m) throw Error("cannot open " + meta.string());
  e.meta = ensemble_meta_from_json(nlohmann::json::parse(m));
  std::ifstream in(csv);
  if (!in) throw Error("cannot open " + csv.string());
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    PhasePoint z;
    char comma = 0;
    row >> z.x >> comma >> z.y >> comma >> z.px >> comma >> z.py;
    if (!row) throw Error("malformed ensemble row: " + line);
    e.points.push_back(z);
  }
  return e;
}

}  // namespace cdsim
