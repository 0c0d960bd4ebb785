#include "cdsim/poly_eval.hpp"

#include <algorithm>
#include <unordered_map>

#include "cdsim/errors.hpp"

namespace cdsim {

namespace {

// Parent of m obtained by dividing out x_v^power; power is 1 or 2.
Monomial divide(Monomial m, Var v, int power) {
  Monomial r = m.lowered(v);
  return power == 2 ? r.lowered(v) : r;
}

}  // namespace

PolynomialBlock::PolynomialBlock(std::span<const PhasePolynomial> polys)
    : ncols_(polys.size()) {
  // Collect monomials, then close the set under the parent relation,
  // preferring parents that are already present.
  std::unordered_map<std::uint64_t, std::size_t> present;
  std::vector<Monomial> monos{Monomial{}};
  present.emplace(Monomial{}.key(), 0);
  for (const auto& p : polys) {
    for (const auto& t : p.terms()) {
      if (present.emplace(t.mono.key(), monos.size()).second) {
        monos.push_back(t.mono);
      }
    }
  }

  struct Link {
    Monomial parent;
    std::uint8_t factor;
  };
  std::unordered_map<std::uint64_t, Link> links;
  // Process from the highest degree down so newly added parents are handled.
  std::vector<Monomial> work = monos;
  std::sort(work.begin(), work.end());
  while (!work.empty()) {
    const Monomial m = work.back();
    work.pop_back();
    if (m.degree() == 0 || links.contains(m.key())) continue;
    bool found = false;
    for (int power : {2, 1}) {
      for (Var v : kAllVars) {
        if (m.exponent(v) < power) continue;
        const Monomial par = divide(m, v, power);
        if (present.contains(par.key())) {
          links[m.key()] = {par, static_cast<std::uint8_t>(
                                     static_cast<int>(v) + (power == 2 ? 4 : 0))};
          found = true;
          break;
        }
      }
      if (found) break;
    }
    if (!found) {
      Var v = Var::x;
      for (Var cand : kAllVars) {
        if (m.exponent(cand) > 0) {
          v = cand;
          break;
        }
      }
      const int power = m.exponent(v) >= 2 ? 2 : 1;
      const Monomial par = divide(m, v, power);
      present.emplace(par.key(), monos.size());
      monos.push_back(par);
      links[m.key()] = {par, static_cast<std::uint8_t>(
                                 static_cast<int>(v) + (power == 2 ? 4 : 0))};
      // Keep the worklist sorted so the new parent is processed in order.
      work.insert(std::upper_bound(work.begin(), work.end(), par), par);
    }
  }

  std::sort(monos.begin(), monos.end());
  std::unordered_map<std::uint64_t, std::uint32_t> row;
  for (std::size_t j = 0; j < monos.size(); ++j) {
    row[monos[j].key()] = static_cast<std::uint32_t>(j);
  }
  parent_.assign(monos.size(), 0);
  factor_.assign(monos.size(), 0);
  for (std::size_t j = 1; j < monos.size(); ++j) {
    const Link& l = links.at(monos[j].key());
    parent_[j] = row.at(l.parent.key());
    factor_[j] = l.factor;
  }

  coef_.assign(monos.size() * ncols_, 0.0);
  active_.assign(monos.size(), 0);
  for (std::size_t c = 0; c < ncols_; ++c) {
    for (const auto& t : polys[c].terms()) {
      const std::uint32_t j = row.at(t.mono.key());
      coef_[j * ncols_ + c] = t.coef;
      active_[j] = 1;
    }
  }
}

void PolynomialBlock::evaluate_batch(const PointColumns& pts,
                                     std::size_t begin, std::size_t count,
                                     const double* coef, std::size_t ncols,
                                     double* out) const {
  const std::size_t m = factor_.size();
  // Per-thread scratch; sized for the monomial table of this block.
  thread_local std::vector<double> scratch;
  thread_local std::vector<double> acc;
  scratch.resize(m * kBatch);
  acc.assign(ncols * kBatch, 0.0);

  alignas(64) double factors[8][kBatch];
  for (std::size_t b = 0; b < kBatch; ++b) {
    for (int v = 0; v < 4; ++v) {
      const double z = b < count ? pts.coord[v][begin + b] : 0.0;
      factors[v][b] = z;
      factors[v + 4][b] = z * z;
    }
  }

  double* ws = scratch.data();
  for (std::size_t b = 0; b < kBatch; ++b) ws[b] = 1.0;
  if (active_[0]) {
    for (std::size_t c = 0; c < ncols; ++c) {
      const double k = coef[c];
      double* a = acc.data() + c * kBatch;
      for (std::size_t b = 0; b < kBatch; ++b) a[b] += k;
    }
  }
  for (std::size_t j = 1; j < m; ++j) {
    const double* __restrict par = ws + parent_[j] * kBatch;
    const double* __restrict f = factors[factor_[j]];
    double* __restrict cur = ws + j * kBatch;
#pragma omp simd
    for (std::size_t b = 0; b < kBatch; ++b) cur[b] = par[b] * f[b];
    if (!active_[j]) continue;
    const double* krow = coef + j * ncols;
    for (std::size_t c = 0; c < ncols; ++c) {
      const double k = krow[c];
      if (k == 0.0) continue;
      double* __restrict a = acc.data() + c * kBatch;
#pragma omp simd
      for (std::size_t b = 0; b < kBatch; ++b) a[b] += k * cur[b];
    }
  }

  for (std::size_t c = 0; c < ncols; ++c) {
    for (std::size_t b = 0; b < count; ++b) {
      out[c * pts.n + begin + b] = acc[c * kBatch + b];
    }
  }
}

void PolynomialBlock::evaluate(const PointColumns& pts,
                               std::span<const double> coef,
                               std::size_t ncols,
                               std::span<double> out) const {
  if (coef.size() != factor_.size() * ncols) {
    throw Error("PolynomialBlock::evaluate: coefficient matrix shape mismatch");
  }
  if (out.size() < ncols * pts.n) {
    throw Error("PolynomialBlock::evaluate: output too small");
  }
  if (factor_.empty()) {
    std::fill(out.begin(), out.begin() + ncols * pts.n, 0.0);
    return;
  }
  const std::ptrdiff_t nbatch =
      static_cast<std::ptrdiff_t>((pts.n + kBatch - 1) / kBatch);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t bi = 0; bi < nbatch; ++bi) {
    const std::size_t begin = static_cast<std::size_t>(bi) * kBatch;
    const std::size_t count = std::min(kBatch, pts.n - begin);
    evaluate_batch(pts, begin, count, coef.data(), ncols, out.data());
  }
}

void PolynomialBlock::evaluate(const PointColumns& pts,
                               std::span<double> out) const {
  evaluate(pts, coef_, ncols_, out);
}

std::vector<double> PolynomialBlock::evaluate(
    std::span<const PhasePoint> pts) const {
  PointBuffer buf(pts);
  std::vector<double> colmajor(ncols_ * pts.size());
  evaluate(buf.view(), colmajor);
  std::vector<double> out(colmajor.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t c = 0; c < ncols_; ++c) {
      out[i * ncols_ + c] = colmajor[c * pts.size() + i];
    }
  }
  return out;
}

PointBuffer::PointBuffer(std::span<const PhasePoint> pts)
    : data_(4 * pts.size()), n_(pts.size()) {
  for (std::size_t i = 0; i < n_; ++i) set_point(i, pts[i]);
}

PointBuffer::PointBuffer(std::size_t n) : data_(4 * n, 0.0), n_(n) {}

PointColumns PointBuffer::view() const noexcept {
  return {{column(Var::x), column(Var::y), column(Var::px), column(Var::py)},
          n_};
}

PhasePoint PointBuffer::point(std::size_t i) const noexcept {
  return {column(Var::x)[i], column(Var::y)[i], column(Var::px)[i],
          column(Var::py)[i]};
}

void PointBuffer::set_point(std::size_t i, const PhasePoint& z) noexcept {
  for (Var v : kAllVars) column(v)[i] = z[v];
}

std::vector<PhasePoint> PointBuffer::to_points() const {
  std::vector<PhasePoint> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = point(i);
  return out;
}

}  // namespace cdsim
