#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdsim/polynomial.hpp"

namespace cdsim {

/// Structure-of-arrays view of n phase points.
struct PointColumns {
  std::array<const double*, 4> coord{};  // x, y, p_x, p_y
  std::size_t n = 0;
};

/// A set of polynomials compiled onto one shared monomial table.
///
/// Every monomial in the table is its parent times x_v or x_v^2 for a single
/// variable, so a batch of points is evaluated with one multiply per monomial
/// followed by one fused multiply-add per (monomial, output column). The
/// coefficient matrix is row-major, monomials by polynomials; callers can pass
/// their own matrix of the same row count to evaluate linear combinations of
/// the compiled polynomials without recompiling.
class PolynomialBlock {
 public:
  static constexpr std::size_t kBatch = 32;

  PolynomialBlock() = default;
  explicit PolynomialBlock(std::span<const PhasePolynomial> polys);

  std::size_t polynomial_count() const noexcept { return ncols_; }
  std::size_t monomial_count() const noexcept { return factor_.size(); }
  std::span<const double> coefficients() const noexcept { return coef_; }

  /// out has ncols * pts.n entries, column-major (out[col * n + i]).
  void evaluate(const PointColumns& pts, std::span<const double> coef,
                std::size_t ncols, std::span<double> out) const;

  /// Uses the compiled coefficients. Output column-major as above.
  void evaluate(const PointColumns& pts, std::span<double> out) const;

  /// Convenience for array-of-structs input. Output is point-major
  /// (out[i * polynomial_count() + col]).
  std::vector<double> evaluate(std::span<const PhasePoint> pts) const;

 private:
  void evaluate_batch(const PointColumns& pts, std::size_t begin,
                      std::size_t count, const double* coef,
                      std::size_t ncols, double* out) const;

  // factor_[j] in 0..7 selects x, y, px, py, x^2, y^2, px^2, py^2.
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint8_t> factor_;
  std::vector<std::uint8_t> active_;
  std::vector<double> coef_;
  std::size_t ncols_ = 0;
};

/// Column-major copy of an array of points.
class PointBuffer {
 public:
  PointBuffer() = default;
  explicit PointBuffer(std::span<const PhasePoint> pts);
  explicit PointBuffer(std::size_t n);

  std::size_t size() const noexcept { return n_; }
  double* column(Var v) noexcept { return data_.data() + index(v) * n_; }
  const double* column(Var v) const noexcept {
    return data_.data() + index(v) * n_;
  }
  PointColumns view() const noexcept;
  PhasePoint point(std::size_t i) const noexcept;
  void set_point(std::size_t i, const PhasePoint& z) noexcept;
  std::vector<PhasePoint> to_points() const;

 private:
  static std::size_t index(Var v) noexcept { return static_cast<std::size_t>(v); }
  std::vector<double> data_;
  std::size_t n_ = 0;
};

}  // namespace cdsim
