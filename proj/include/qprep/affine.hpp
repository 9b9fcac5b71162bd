// Affine Hermitian-matrix expressions over SDP variables, plus matrix-valued
// variables.  This is the modeling layer between the raw LMI solver and the
// domain modules: expressions support the linear maps used throughout
// (tensoring, partial transpose/trace, congruence), and emit themselves into
// an SdpProblem as PSD blocks or entrywise equality rows.
#pragma once

#include <utility>
#include <vector>

#include "qprep/qmat.hpp"
#include "qprep/sdp.hpp"

namespace qprep::sdp {

// C0 + sum_t x_{v_t} C_t with Hermitian coefficient matrices.
struct AffineHermitian {
  Mat c0;
  std::vector<std::pair<int, Mat>> terms;

  int dim() const { return static_cast<int>(c0.rows()); }

  static AffineHermitian constant(Mat m) { return {std::move(m), {}}; }

  static AffineHermitian zero(int d) { return {Mat::Zero(d, d), {}}; }

  // (scalar variable) * coeff
  static AffineHermitian scaled_var(int var, Mat coeff) {
    AffineHermitian e{Mat::Zero(coeff.rows(), coeff.cols()), {}};
    e.terms.push_back({var, std::move(coeff)});
    return e;
  }

  AffineHermitian& operator+=(const AffineHermitian& o) {
    c0 += o.c0;
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    return *this;
  }
  AffineHermitian& operator-=(const AffineHermitian& o) {
    c0 -= o.c0;
    for (const auto& [v, m] : o.terms) terms.push_back({v, -m});
    return *this;
  }
  AffineHermitian& operator*=(double s) {
    c0 *= s;
    for (auto& [v, m] : terms) m *= s;
    return *this;
  }

  Mat value(const RVec& x) const {
    Mat m = c0;
    for (const auto& [v, c] : terms) m += x(v) * c;
    return m;
  }
};

inline AffineHermitian operator+(AffineHermitian a, const AffineHermitian& b) { return a += b; }
inline AffineHermitian operator-(AffineHermitian a, const AffineHermitian& b) { return a -= b; }
inline AffineHermitian operator*(double s, AffineHermitian a) { return a *= s; }

// Applies a linear matrix map f (partial transpose, congruence, tensoring,
// partial trace, ...) to the constant and every coefficient.
template <typename F>
AffineHermitian apply(const AffineHermitian& e, F&& f) {
  AffineHermitian out;
  out.c0 = f(e.c0);
  out.terms.reserve(e.terms.size());
  for (const auto& [v, m] : e.terms) out.terms.push_back({v, f(m)});
  return out;
}

// A Hermitian matrix variable: n diagonal vars, then (re, im) pairs for each
// upper-triangle entry in row-major pair order.
struct HermitianVar {
  int base = -1;
  int n = 0;

  int var_count() const { return n * n; }

  // Basis element for a flat variable offset within this matrix.
  Mat basis(int offset) const {
    Mat m = Mat::Zero(n, n);
    if (offset < n) {
      m(offset, offset) = 1;
      return m;
    }
    int pair = (offset - n) / 2;
    bool imag = (offset - n) % 2 != 0;
    // invert pair -> (i, j), i < j, pairs ordered (0,1),(0,2),...,(1,2),...
    int i = 0, before = 0;
    while (before + (n - 1 - i) <= pair) {
      before += n - 1 - i;
      ++i;
    }
    int j = i + 1 + (pair - before);
    if (!imag) {
      m(i, j) = m(j, i) = 1;
    } else {
      m(i, j) = Complex(0, -1);
      m(j, i) = Complex(0, 1);
    }
    return m;
  }

  AffineHermitian expr() const {
    AffineHermitian e{Mat::Zero(n, n), {}};
    e.terms.reserve(var_count());
    for (int t = 0; t < var_count(); ++t) e.terms.push_back({base + t, basis(t)});
    return e;
  }

  Mat value(const RVec& x) const {
    Mat m = Mat::Zero(n, n);
    int off = n;
    for (int i = 0; i < n; ++i) m(i, i) = x(base + i);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        double re = x(base + off), im = x(base + off + 1);
        m(i, j) = Complex(re, -im);
        m(j, i) = Complex(re, im);
        off += 2;
      }
    return m;
  }
};

inline HermitianVar add_hermitian_var(SdpProblem& p, int n) {
  HermitianVar h;
  h.base = p.add_vars(n * n);
  h.n = n;
  return h;
}

// expr >= 0 in the PSD order.
inline void add_psd(SdpProblem& p, const AffineHermitian& e) {
  p.add_hermitian_psd_block(e.c0, e.terms);
}

// expr == 0 entrywise: one real equality row per upper-triangle real degree of
// freedom.  Rows whose coefficients all vanish are dropped; a row that is
// constant and nonzero is a modeling error.
inline void add_zero(SdpProblem& p, const AffineHermitian& e, double prune = 1e-14) {
  const int d = e.dim();
  auto emit_row = [&](int i, int j, bool imag_part) {
    std::vector<std::pair<int, double>> r;
    for (const auto& [v, m] : e.terms) {
      double coeff = imag_part ? std::imag(m(i, j)) : std::real(m(i, j));
      if (std::abs(coeff) > prune) r.push_back({v, coeff});
    }
    double c0 = imag_part ? std::imag(e.c0(i, j)) : std::real(e.c0(i, j));
    if (r.empty()) {
      if (std::abs(c0) > 1e-10)
        throw ValidationError("add_zero: constraint row is constant and nonzero");
      return;
    }
    std::sort(r.begin(), r.end());
    std::vector<std::pair<int, double>> merged;
    for (auto& t : r) {
      if (!merged.empty() && merged.back().first == t.first)
        merged.back().second += t.second;
      else
        merged.push_back(t);
    }
    p.add_equality(std::move(merged), -c0);
  };
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      emit_row(i, j, false);
      if (j > i) emit_row(i, j, true);
    }
}

// Re tr(expr * rho) as a scalar affine row: (constant, terms).
inline std::pair<double, std::vector<std::pair<int, double>>> trace_against(
    const AffineHermitian& e, const Mat& rho) {
  // Entrywise Frobenius pairing: tr(m rho) = sum_ij m_ij rho_ji = sum of
  // m^T (*) rho elementwise; conjugating instead of transposing here would
  // silently contract against the transposed operator.
  auto ip = [&](const Mat& m) {
    return std::real((m.transpose().array() * rho.array()).sum());
  };
  std::vector<std::pair<int, double>> row;
  for (const auto& [v, m] : e.terms) row.push_back({v, ip(m)});
  return {ip(e.c0), std::move(row)};
}

}  // namespace qprep::sdp
