#include "cdsim/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cdsim/errors.hpp"

namespace cdsim {

namespace {

using Term = PhasePolynomial::Term;

// Sort contributions by monomial and then by magnitude, and sum positive and
// negative parts separately. The result depends only on the multiset of
// (monomial, value) pairs, and negating every contribution negates the result
// exactly.
std::vector<Term> canonicalize(std::vector<Term> bag) {
  std::sort(bag.begin(), bag.end(), [](const Term& a, const Term& b) {
    if (a.mono != b.mono) return a.mono < b.mono;
    return std::abs(a.coef) < std::abs(b.coef);
  });

  std::vector<Term> out;
  out.reserve(bag.size());
  double max_abs = 0.0;
  for (std::size_t i = 0; i < bag.size();) {
    const Monomial m = bag[i].mono;
    double pos = 0.0;
    double neg = 0.0;
    for (; i < bag.size() && bag[i].mono == m; ++i) {
      if (bag[i].coef > 0.0) {
        pos += bag[i].coef;
      } else {
        neg += bag[i].coef;
      }
    }
    const double c = pos + neg;
    if (c != 0.0) {
      out.push_back({m, c});
      max_abs = std::max(max_abs, std::abs(c));
    }
  }

  const double cutoff = PhasePolynomial::kRelativeDropTolerance * max_abs;
  std::erase_if(out, [cutoff](const Term& t) { return std::abs(t.coef) < cutoff; });
  return out;
}

void check_limits(const AlgebraLimits& limits) {
  if (limits.max_degree < 0 || limits.max_degree > Monomial::kMaxExponent) {
    throw Error("AlgebraLimits.max_degree must lie in [0, " +
                std::to_string(Monomial::kMaxExponent) + "]");
  }
}

void append_products(std::vector<Term>& bag, const PhasePolynomial& a,
                     const PhasePolynomial& b, double sign,
                     const AlgebraLimits& limits) {
  if (a.is_zero() || b.is_zero()) return;
  const int deg = a.degree() + b.degree();
  if (deg > limits.max_degree) throw DegreeOverflow(deg, limits.max_degree);
  bag.reserve(bag.size() + a.size() * b.size());
  for (const Term& ta : a.terms()) {
    for (const Term& tb : b.terms()) {
      bag.push_back({ta.mono * tb.mono, sign * (ta.coef * tb.coef)});
    }
  }
}

}  // namespace

const char* var_name(Var v) noexcept {
  switch (v) {
    case Var::x: return "x";
    case Var::y: return "y";
    case Var::px: return "px";
    case Var::py: return "py";
  }
  return "?";
}

double& PhasePoint::operator[](Var v) noexcept {
  switch (v) {
    case Var::x: return x;
    case Var::y: return y;
    case Var::px: return px;
    default: return py;
  }
}

double PhasePoint::operator[](Var v) const noexcept {
  switch (v) {
    case Var::x: return x;
    case Var::y: return y;
    case Var::px: return px;
    default: return py;
  }
}

bool PhasePoint::is_finite() const noexcept {
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(px) &&
         std::isfinite(py);
}

Monomial::Monomial(int ex, int ey, int epx, int epy) {
  for (int e : {ex, ey, epx, epy}) {
    if (e < 0 || e > kMaxExponent) {
      throw Error("monomial exponent out of range: " + std::to_string(e));
    }
  }
  const auto u = [](int e) { return static_cast<std::uint64_t>(e); };
  key_ = (u(ex + ey + epx + epy) << 32) | (u(ex) << 24) | (u(ey) << 16) |
         (u(epx) << 8) | u(epy);
}

std::array<int, 4> Monomial::exponents() const noexcept {
  return {exponent(Var::x), exponent(Var::y), exponent(Var::px),
          exponent(Var::py)};
}

PhasePolynomial PhasePolynomial::from_terms(std::vector<Term> terms) {
  PhasePolynomial p;
  p.terms_ = canonicalize(std::move(terms));
  return p;
}

PhasePolynomial PhasePolynomial::constant(double c) {
  return from_terms({{Monomial{}, c}});
}

PhasePolynomial PhasePolynomial::variable(Var v) {
  return from_terms({{Monomial{}.raised(v), 1.0}});
}

PhasePolynomial PhasePolynomial::monomial(Monomial m, double coef) {
  return from_terms({{m, coef}});
}

PhasePolynomial PhasePolynomial::monomial(int ex, int ey, int epx, int epy,
                                          double coef) {
  return from_terms({{Monomial(ex, ey, epx, epy), coef}});
}

int PhasePolynomial::degree() const noexcept {
  // Terms are graded, so the last term carries the largest degree.
  return terms_.empty() ? -1 : terms_.back().mono.degree();
}

double PhasePolynomial::coefficient(Monomial m) const noexcept {
  auto it = std::lower_bound(
      terms_.begin(), terms_.end(), m,
      [](const Term& t, Monomial key) { return t.mono < key; });
  return (it != terms_.end() && it->mono == m) ? it->coef : 0.0;
}

double PhasePolynomial::max_abs_coefficient() const noexcept {
  double m = 0.0;
  for (const Term& t : terms_) m = std::max(m, std::abs(t.coef));
  return m;
}

PhasePolynomial add(const PhasePolynomial& a, const PhasePolynomial& b) {
  std::vector<Term> bag(a.terms().begin(), a.terms().end());
  bag.insert(bag.end(), b.terms().begin(), b.terms().end());
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial subtract(const PhasePolynomial& a, const PhasePolynomial& b) {
  std::vector<Term> bag(a.terms().begin(), a.terms().end());
  for (const Term& t : b.terms()) bag.push_back({t.mono, -t.coef});
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial scale(const PhasePolynomial& a, double factor) {
  std::vector<Term> bag;
  bag.reserve(a.size());
  for (const Term& t : a.terms()) bag.push_back({t.mono, factor * t.coef});
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial linear_combination(std::span<const double> weights,
                                   std::span<const PhasePolynomial> polys) {
  if (weights.size() != polys.size()) {
    throw Error("linear_combination: weight/polynomial count mismatch");
  }
  std::vector<Term> bag;
  for (std::size_t k = 0; k < polys.size(); ++k) {
    for (const Term& t : polys[k].terms()) {
      bag.push_back({t.mono, weights[k] * t.coef});
    }
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial multiply(const PhasePolynomial& a, const PhasePolynomial& b,
                         const AlgebraLimits& limits) {
  check_limits(limits);
  std::vector<Term> bag;
  append_products(bag, a, b, 1.0, limits);
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial partial(const PhasePolynomial& a, Var v) {
  std::vector<Term> bag;
  bag.reserve(a.size());
  for (const Term& t : a.terms()) {
    const int e = t.mono.exponent(v);
    if (e > 0) bag.push_back({t.mono.lowered(v), e * t.coef});
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial poisson_bracket(const PhasePolynomial& a,
                                const PhasePolynomial& b,
                                const AlgebraLimits& limits) {
  check_limits(limits);
  std::vector<Term> bag;
  for (Var q : {Var::x, Var::y}) {
    const Var p = conjugate(q);
    append_products(bag, partial(a, q), partial(b, p), 1.0, limits);
    append_products(bag, partial(a, p), partial(b, q), -1.0, limits);
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

double evaluate(const PhasePolynomial& a, const PhasePoint& z) {
  if (a.is_zero()) return 0.0;
  const int deg = a.degree();
  std::array<std::array<double, Monomial::kMaxExponent + 1>, 4> pow;
  for (Var v : kAllVars) {
    auto& table = pow[static_cast<int>(v)];
    table[0] = 1.0;
    for (int k = 1; k <= deg; ++k) table[k] = table[k - 1] * z[v];
  }
  double sum = 0.0;
  for (const Term& t : a.terms()) {
    const auto e = t.mono.exponents();
    sum += t.coef * pow[0][e[0]] * pow[1][e[1]] * pow[2][e[2]] * pow[3][e[3]];
  }
  return sum;
}

PhasePolynomial reverse_momenta(const PhasePolynomial& a) {
  std::vector<Term> bag;
  bag.reserve(a.size());
  for (const Term& t : a.terms()) {
    bag.push_back({t.mono, (t.mono.momentum_degree() % 2) ? -t.coef : t.coef});
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

PhasePolynomial operator+(const PhasePolynomial& a, const PhasePolynomial& b) {
  return add(a, b);
}
PhasePolynomial operator-(const PhasePolynomial& a, const PhasePolynomial& b) {
  return subtract(a, b);
}
PhasePolynomial operator-(const PhasePolynomial& a) { return scale(a, -1.0); }
PhasePolynomial operator*(double s, const PhasePolynomial& a) {
  return scale(a, s);
}
PhasePolynomial operator*(const PhasePolynomial& a, const PhasePolynomial& b) {
  return multiply(a, b);
}

nlohmann::json to_json(const PhasePolynomial& p) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : p.terms()) {
    const auto e = t.mono.exponents();
    arr.push_back({e[0], e[1], e[2], e[3], t.coef});
  }
  return arr;
}

PhasePolynomial polynomial_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error("polynomial JSON must be an array");
  std::vector<Term> bag;
  bag.reserve(j.size());
  for (const auto& rec : j) {
    if (!rec.is_array() || rec.size() != 5) {
      throw Error("polynomial term must be [e_x, e_y, e_px, e_py, coef]");
    }
    bag.push_back({Monomial(rec[0].get<int>(), rec[1].get<int>(),
                            rec[2].get<int>(), rec[3].get<int>()),
                   rec[4].get<double>()});
  }
  return PhasePolynomial::from_terms(std::move(bag));
}

std::string to_string(const PhasePolynomial& p) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  os.precision(17);
  bool first = true;
  for (const auto& t : p.terms()) {
    if (!first) os << (t.coef < 0 ? " - " : " + ");
    else if (t.coef < 0) os << "-";
    first = false;
    os << std::abs(t.coef);
    for (Var v : kAllVars) {
      const int e = t.mono.exponent(v);
      if (e == 1) os << "*" << var_name(v);
      else if (e > 1) os << "*" << var_name(v) << "^" << e;
    }
  }
  return os.str();
}

}  // namespace cdsim
