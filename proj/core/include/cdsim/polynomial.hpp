#pragma once

// Sparse polynomial algebra over the phase-space coordinates (x, y, p_x, p_y).

#include <array>
#include <compare>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace cdsim {

enum class Var : std::uint8_t { x = 0, y = 1, px = 2, py = 3 };

inline constexpr std::array<Var, 4> kAllVars{Var::x, Var::y, Var::px, Var::py};

/// Conjugate partner of a coordinate: x <-> p_x, y <-> p_y.
constexpr Var conjugate(Var v) noexcept {
  return static_cast<Var>((static_cast<int>(v) + 2) % 4);
}

const char* var_name(Var v) noexcept;

struct PhasePoint {
  double x = 0.0;
  double y = 0.0;
  double px = 0.0;
  double py = 0.0;

  double& operator[](Var v) noexcept;
  double operator[](Var v) const noexcept;
  bool is_finite() const noexcept;
  friend bool operator==(const PhasePoint&, const PhasePoint&) = default;
};

/// Exponent quadruple packed into a single graded-lexicographic key:
/// bits 32..39 hold the total degree, bits 24/16/8/0 the exponents of
/// x, y, p_x, p_y. Comparing keys compares monomials in graded-lex order and
/// adding keys multiplies monomials.
class Monomial {
 public:
  static constexpr int kMaxExponent = 120;

  constexpr Monomial() = default;
  Monomial(int ex, int ey, int epx, int epy);

  static constexpr Monomial from_key(std::uint64_t key) noexcept {
    Monomial m;
    m.key_ = key;
    return m;
  }

  int exponent(Var v) const noexcept {
    return static_cast<int>((key_ >> shift(v)) & 0xffu);
  }
  int degree() const noexcept { return static_cast<int>(key_ >> 32); }
  std::uint64_t key() const noexcept { return key_; }
  std::array<int, 4> exponents() const noexcept;

  /// Total momentum degree e_px + e_py.
  int momentum_degree() const noexcept {
    return exponent(Var::px) + exponent(Var::py);
  }

  Monomial operator*(Monomial other) const noexcept {
    return from_key(key_ + other.key_);
  }
  /// Lower the exponent of v by one. Caller guarantees exponent(v) > 0.
  Monomial lowered(Var v) const noexcept {
    return from_key(key_ - (std::uint64_t{1} << 32) -
                    (std::uint64_t{1} << shift(v)));
  }
  Monomial raised(Var v) const noexcept {
    return from_key(key_ + (std::uint64_t{1} << 32) +
                    (std::uint64_t{1} << shift(v)));
  }

  friend constexpr auto operator<=>(Monomial a, Monomial b) noexcept {
    return a.key_ <=> b.key_;
  }
  friend constexpr bool operator==(Monomial a, Monomial b) noexcept {
    return a.key_ == b.key_;
  }

 private:
  static constexpr int shift(Var v) noexcept {
    return 24 - 8 * static_cast<int>(v);
  }
  std::uint64_t key_ = 0;
};

/// Limits applied to products and brackets.
struct AlgebraLimits {
  int max_degree = 40;
};

/// Immutable sparse polynomial in canonical form: terms sorted by graded-lex
/// monomial order, no duplicate monomials, no zero coefficients, and no
/// coefficient below 1e-15 times the largest coefficient magnitude.
class PhasePolynomial {
 public:
  struct Term {
    Monomial mono;
    double coef = 0.0;
    friend bool operator==(const Term&, const Term&) = default;
  };

  static constexpr double kRelativeDropTolerance = 1e-15;

  PhasePolynomial() = default;

  /// Builds a canonical polynomial from arbitrary terms. Duplicate monomials
  /// are summed with a summation order that depends only on the multiset of
  /// contributions, never on their input order.
  static PhasePolynomial from_terms(std::vector<Term> terms);
  static PhasePolynomial constant(double c);
  static PhasePolynomial variable(Var v);
  static PhasePolynomial monomial(Monomial m, double coef = 1.0);
  /// Convenience: monomial from exponents.
  static PhasePolynomial monomial(int ex, int ey, int epx, int epy,
                                  double coef = 1.0);

  std::span<const Term> terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }
  bool is_zero() const noexcept { return terms_.empty(); }
  /// Largest total degree; -1 for the zero polynomial.
  int degree() const noexcept;
  double coefficient(Monomial m) const noexcept;
  double max_abs_coefficient() const noexcept;

  friend bool operator==(const PhasePolynomial&,
                         const PhasePolynomial&) = default;

 private:
  std::vector<Term> terms_;
};

PhasePolynomial add(const PhasePolynomial& a, const PhasePolynomial& b);
PhasePolynomial subtract(const PhasePolynomial& a, const PhasePolynomial& b);
PhasePolynomial scale(const PhasePolynomial& a, double factor);
/// sum_k weights[k] * polys[k] with order-independent accumulation.
PhasePolynomial linear_combination(std::span<const double> weights,
                                   std::span<const PhasePolynomial> polys);

/// Throws DegreeOverflow if a product monomial exceeds limits.max_degree.
PhasePolynomial multiply(const PhasePolynomial& a, const PhasePolynomial& b,
                         const AlgebraLimits& limits = {});

PhasePolynomial partial(const PhasePolynomial& a, Var v);

/// {a, b} = sum_j da/dq_j db/dp_j - da/dp_j db/dq_j with q = (x, y) and
/// p = (p_x, p_y), so that dz/dt = {z, H}. The bracket is assembled from a
/// single signed product pool, which makes {a,b} == -{b,a} hold exactly.
PhasePolynomial poisson_bracket(const PhasePolynomial& a,
                                const PhasePolynomial& b,
                                const AlgebraLimits& limits = {});

double evaluate(const PhasePolynomial& a, const PhasePoint& z);

/// Momentum reversal p -> -p.
PhasePolynomial reverse_momenta(const PhasePolynomial& a);

PhasePolynomial operator+(const PhasePolynomial& a, const PhasePolynomial& b);
PhasePolynomial operator-(const PhasePolynomial& a, const PhasePolynomial& b);
PhasePolynomial operator-(const PhasePolynomial& a);
PhasePolynomial operator*(double s, const PhasePolynomial& a);
PhasePolynomial operator*(const PhasePolynomial& a, const PhasePolynomial& b);

/// JSON array of [e_x, e_y, e_px, e_py, coefficient] records in canonical
/// order.
nlohmann::json to_json(const PhasePolynomial& p);
PhasePolynomial polynomial_from_json(const nlohmann::json& j);

std::string to_string(const PhasePolynomial& p);

}  // namespace cdsim
