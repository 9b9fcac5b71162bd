#pragma once

// Self-contained dense semidefinite-program solver.  Problem form:
//
//   minimize    c·x
//   subject to  F_{j,0} + Σ_i x_i F_{j,i}  PSD     (real symmetric blocks)
//               A x = b
//
// Complex Hermitian blocks are pre-embedded as real symmetric ones of twice
// the dimension ([[Re, -Im], [Im, Re]]).  The algorithm is an infeasible-start
// primal-dual path-following interior-point method with the HKM symmetrized
// scaling direction and a Mehrotra predictor-corrector step; one dense Schur
// factorization per iteration (LAPACK dpotrf/dsytrf).  Every optimization in
// this artifact reduces to this problem form.

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "qprep/common.hpp"
#include "qprep/qmat.hpp"

namespace qprep::sdp {

struct PencilTerm {
  int var;
  RMat coeff;  // symmetric
};

struct PsdBlock {
  RMat f0;
  std::vector<PencilTerm> terms;
  int dim() const { return static_cast<int>(f0.rows()); }
};

struct EqRow {
  std::vector<std::pair<int, double>> terms;
  double rhs = 0.0;
};

// Real symmetric embedding of a complex Hermitian matrix; PSD iff the
// original is PSD, spectrum doubled.
inline RMat embed_hermitian(const Mat& h) {
  const int d = static_cast<int>(h.rows());
  if (h.cols() != d) throw ValidationError("embed_hermitian: not square");
  RMat out(2 * d, 2 * d);
  out.topLeftCorner(d, d) = h.real();
  out.topRightCorner(d, d) = -h.imag();
  out.bottomLeftCorner(d, d) = h.imag();
  out.bottomRightCorner(d, d) = h.real();
  return out;
}

// Inverse of the embedding on the structured subspace; for a general PSD Z
// this is the compression V†ZV (V = [I; -iI]/√2), again PSD, and satisfies
// ⟨embed(F), Z⟩ = 2⟨F, extract(Z)⟩ for Hermitian F.
inline Mat extract_hermitian_dual(const RMat& z) {
  const int d = static_cast<int>(z.rows()) / 2;
  Mat out(d, d);
  out.real() = 0.5 * (z.topLeftCorner(d, d) + z.bottomRightCorner(d, d));
  out.imag() = 0.5 * (z.bottomLeftCorner(d, d) - z.topRightCorner(d, d));
  return 0.5 * (out + out.adjoint()).eval();
}

struct SdpProblem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<PsdBlock> psd_blocks;
  std::vector<EqRow> equalities;

  int add_var(double obj_coeff = 0.0) {
    objective.push_back(obj_coeff);
    return num_vars++;
  }

  int add_vars(int count) {
    int first = num_vars;
    for (int i = 0; i < count; ++i) add_var();
    return first;
  }

  void set_objective(int var, double coeff) { objective.at(var) = coeff; }

  void add_psd_block(RMat f0, std::vector<PencilTerm> terms) {
    PsdBlock b{std::move(f0), std::move(terms)};
    const int d = b.dim();
    if (b.f0.cols() != d) throw ValidationError("SdpProblem: block F0 not square");
    for (auto& t : b.terms) {
      if (t.coeff.rows() != d || t.coeff.cols() != d)
        throw ValidationError("SdpProblem: term dimension mismatch");
      if (t.var < 0 || t.var >= num_vars) throw ValidationError("SdpProblem: term var out of range");
    }
    psd_blocks.push_back(std::move(b));
  }

  void add_hermitian_psd_block(const Mat& f0, const std::vector<std::pair<int, Mat>>& terms) {
    std::vector<PencilTerm> emb;
    emb.reserve(terms.size());
    for (auto& [v, m] : terms) emb.push_back({v, embed_hermitian(hermitize(m))});
    add_psd_block(embed_hermitian(hermitize(f0)), std::move(emb));
  }

  // Scalar inequality c0 + Σ a_i x_i ≥ 0, encoded as a 1x1 PSD block.
  void add_linear_ge(double c0, const std::vector<std::pair<int, double>>& terms) {
    std::vector<PencilTerm> t;
    t.reserve(terms.size());
    for (auto& [v, a] : terms) {
      RMat m(1, 1);
      m(0, 0) = a;
      t.push_back({v, std::move(m)});
    }
    RMat f0(1, 1);
    f0(0, 0) = c0;
    add_psd_block(std::move(f0), std::move(t));
  }

  void add_equality(std::vector<std::pair<int, double>> terms, double rhs) {
    for (auto& [v, a] : terms) {
      (void)a;
      if (v < 0 || v >= num_vars) throw ValidationError("SdpProblem: equality var out of range");
    }
    equalities.push_back({std::move(terms), rhs});
  }
};

enum class SdpStatus { optimal, infeasible, unbounded, iteration_limit };

inline const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::unbounded: return "unbounded";
    default: return "iteration-limit";
  }
}

struct SdpSolution {
  SdpStatus status = SdpStatus::iteration_limit;
  RVec x;
  double objective_value = 0.0;
  std::vector<RMat> block_duals;   // Z_j per block
  RVec eq_multipliers;
  double gap = 0.0;                // Σ_j ⟨S_j, Z_j⟩ at exit
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  int iterations = 0;
  double condition_estimate = 0.0;

  bool ok() const { return status == SdpStatus::optimal; }
};

struct SolveOptions {
  double tol = 1e-8;
  int max_iters = 200;
  double step_frac = 0.98;   // fraction of the max step to the cone boundary
  bool verbose = false;
};

namespace detail {

// Internal views: blocks of dim 1 are handled with scalar arithmetic (they
// are numerous in the design SDPs), larger blocks with dense matrices.
struct ScalarRow {
  double f0;
  std::vector<std::pair<int, double>> terms;  // sorted by var
};

struct DenseBlock {
  int dim;
  RMat f0;
  std::vector<PencilTerm> terms;  // sorted by var
};

struct Work {
  std::vector<ScalarRow> rows;
  std::vector<DenseBlock> blocks;
  int n = 0;
  int m = 0;
  double total_cone_dim = 0.0;
};

inline double sym_dot(const RMat& a, const RMat& b) { return (a.array() * b.array()).sum(); }

inline Work split_problem(const SdpProblem& p) {
  Work w;
  w.n = p.num_vars;
  w.m = static_cast<int>(p.equalities.size());
  for (const auto& b : p.psd_blocks) {
    if (b.dim() == 1) {
      ScalarRow r;
      r.f0 = b.f0(0, 0);
      for (auto& t : b.terms) r.terms.emplace_back(t.var, t.coeff(0, 0));
      std::sort(r.terms.begin(), r.terms.end());
      // merge duplicate vars
      std::vector<std::pair<int, double>> merged;
      for (auto& [v, c] : r.terms) {
        if (!merged.empty() && merged.back().first == v) merged.back().second += c;
        else merged.emplace_back(v, c);
      }
      r.terms = std::move(merged);
      w.rows.push_back(std::move(r));
      w.total_cone_dim += 1.0;
    } else {
      DenseBlock d;
      d.dim = b.dim();
      d.f0 = 0.5 * (b.f0 + b.f0.transpose());
      if ((b.f0 - b.f0.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw ValidationError("SdpProblem: block F0 asymmetric beyond 1e-12");
      d.terms = b.terms;
      for (auto& t : d.terms) {
        if ((t.coeff - t.coeff.transpose()).cwiseAbs().maxCoeff() > 1e-12)
          throw ValidationError("SdpProblem: pencil coefficient asymmetric beyond 1e-12");
        t.coeff = 0.5 * (t.coeff + t.coeff.transpose()).eval();
      }
      std::sort(d.terms.begin(), d.terms.end(),
                [](const PencilTerm& a, const PencilTerm& b2) { return a.var < b2.var; });
      std::vector<PencilTerm> merged;
      for (auto& t : d.terms) {
        if (!merged.empty() && merged.back().var == t.var) merged.back().coeff += t.coeff;
        else merged.push_back(std::move(t));
      }
      d.terms = std::move(merged);
      w.total_cone_dim += d.dim;
      w.blocks.push_back(std::move(d));
    }
  }
  return w;
}

// Symmetric indefinite solve of the augmented KKT [[H, Aᵀ],[A, -δI]] via
// LAPACK Bunch-Kaufman; the factorization is reused for several right-hand
// sides per iteration.
struct KktFactor {
  RMat orig;                    // assembled (unregularized) augmented system
  RMat k;                       // factored in place
  std::vector<lapack_int> ipiv;
  int n = 0, m = 0;
  double cond_proxy = 0.0;

  // Returns false if factorization failed even with regularization.
  bool factor(const RMat& h, const std::vector<EqRow>& eqs, double reg_scale) {
    n = static_cast<int>(h.rows());
    m = static_cast<int>(eqs.size());
    const int nm = n + m;
    orig = RMat::Zero(nm, nm);
    orig.topLeftCorner(n, n) = h;
    for (int r = 0; r < m; ++r)
      for (auto& [v, a] : eqs[r].terms) orig(n + r, v) += a;  // lower triangle (row > col region)
    orig.topRightCorner(n, m) = orig.bottomLeftCorner(m, n).transpose();

    double hmax = h.diagonal().cwiseAbs().maxCoeff();
    double delta = reg_scale * (1.0 + hmax);
    // Attempt 0 is unregularized; regularize (quasidefinite shift) only when a
    // pivot comes out exactly zero, e.g. for linearly dependent equality rows.
    for (int attempt = 0; attempt < 5; ++attempt) {
      RMat kk = orig;
      if (attempt > 0) {
        double d = delta * std::pow(100.0, attempt - 1);
        for (int i = 0; i < n; ++i) kk(i, i) += d;
        for (int i = n; i < nm; ++i) kk(i, i) -= d;
      }
      ipiv.assign(nm, 0);
      lapack_int info = LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', nm, kk.data(), nm, ipiv.data());
      if (info == 0) {
        double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nm; ++i) {
          double di = std::abs(kk(i, i));
          dmax = std::max(dmax, di);
          if (di > 0) dmin = std::min(dmin, di);
        }
        cond_proxy = (dmin > 0 && std::isfinite(dmin)) ? dmax / dmin : 0.0;
        k = std::move(kk);
        return true;
      }
    }
    return false;
  }

  // Solve K u = rhs_x ⊕ rhs_e with iterative refinement against the original
  // (unregularized) system; returns (Δx, w) with w = -Δy.  Refinement buys
  // several digits of accuracy once the system turns ill-conditioned near
  // convergence, and also removes any error that a quasidefinite shift
  // introduced.
  void solve(const RVec& rhs_x, const RVec& rhs_e, RVec& dx, RVec& w) const {
    const int nm = n + m;
    RVec rhs(nm);
    rhs.head(n) = rhs_x;
    rhs.tail(m) = rhs_e;
    RVec u = rhs;
    LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', nm, 1, k.data(), nm,
                   const_cast<lapack_int*>(ipiv.data()), u.data(), nm);
    const double rhs_scale = 1.0 + rhs.cwiseAbs().maxCoeff();
    for (int pass = 0; pass < 3; ++pass) {
      RVec resid = rhs - orig.selfadjointView<Eigen::Lower>() * u;
      if (resid.cwiseAbs().maxCoeff() <= 1e-13 * rhs_scale) break;
      LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', nm, 1, k.data(), nm,
                     const_cast<lapack_int*>(ipiv.data()), resid.data(), nm);
      u += resid;
    }
    dx = u.head(n);
    w = u.tail(m);
  }
};

}  // namespace detail

// Debug dump: plain-text sparse triplet listing (documented in docs/formats.md).
inline void dump(const SdpProblem& p, std::ostream& os) {
  os.precision(17);
  os << "qprep-sdp 1\n";
  os << "vars " << p.num_vars << "\n";
  os << "objective\n";
  for (int i = 0; i < p.num_vars; ++i)
    if (p.objective[i] != 0.0) os << i << " " << p.objective[i] << "\n";
  for (const auto& b : p.psd_blocks) {
    os << "block " << b.dim() << "\n";
    for (int r = 0; r < b.dim(); ++r)
      for (int c = r; c < b.dim(); ++c)
        if (b.f0(r, c) != 0.0) os << "0 " << r << " " << c << " " << b.f0(r, c) << "\n";
    for (const auto& t : b.terms)
      for (int r = 0; r < b.dim(); ++r)
        for (int c = r; c < b.dim(); ++c)
          if (t.coeff(r, c) != 0.0)
            os << (t.var + 1) << " " << r << " " << c << " " << t.coeff(r, c) << "\n";
  }
  for (const auto& e : p.equalities) {
    os << "eq " << e.rhs << "\n";
    for (auto& [v, a] : e.terms) os << v << " " << a << "\n";
  }
  os << "end\n";
}

inline SdpSolution solve(const SdpProblem& p, const SolveOptions& opt = {}) {
  using detail::sym_dot;
  auto w = detail::split_problem(p);
  const int n = w.n;
  const int nb = static_cast<int>(w.blocks.size());
  const int nr = static_cast<int>(w.rows.size());
  if (n == 0) throw ValidationError("solve: problem has no variables");
  if (w.total_cone_dim == 0) throw ValidationError("solve: problem has no conic constraints");

  RVec c = Eigen::Map<const RVec>(p.objective.data(), n);
  const double c_scale = 1.0 + c.cwiseAbs().maxCoeff();

  // Data norms for relative residuals.
  std::vector<double> f0_norm(nb);
  for (int j = 0; j < nb; ++j) f0_norm[j] = 1.0 + w.blocks[j].f0.norm();
  double b_scale = 1.0;
  for (auto& e : p.equalities) b_scale = std::max(b_scale, std::abs(e.rhs));

  // --- state ---------------------------------------------------------------
  RVec x = RVec::Zero(n);
  RVec y = RVec::Zero(w.m);
  std::vector<RMat> S(nb), Z(nb);
  std::vector<double> s1(nr), z1(nr);
  for (int j = 0; j < nb; ++j) {
    double scale = std::max(1.0, w.blocks[j].f0.cwiseAbs().maxCoeff());
    S[j] = scale * RMat::Identity(w.blocks[j].dim, w.blocks[j].dim);
    Z[j] = std::max(1.0, c_scale / 10.0) * RMat::Identity(w.blocks[j].dim, w.blocks[j].dim);
  }
  for (int r = 0; r < nr; ++r) {
    s1[r] = std::max(1.0, std::abs(w.rows[r].f0));
    z1[r] = std::max(1.0, c_scale / 10.0);
  }

  // Scratch per block.
  std::vector<RMat> Sinv(nb), R(nb), G(nb), dSa(nb), dZa(nb), dS(nb), dZ(nb);
  std::vector<double> r1(nr), g1(nr), dsa1(nr), dza1(nr), ds1(nr), dz1(nr);

  auto pencil_value = [&](int j, const RVec& xx) {
    RMat v = w.blocks[j].f0;
    for (auto& t : w.blocks[j].terms) v += xx(t.var) * t.coeff;
    return v;
  };
  auto row_value = [&](int r, const RVec& xx) {
    double v = w.rows[r].f0;
    for (auto& [var, a] : w.rows[r].terms) v += xx(var) * a;
    return v;
  };

  SdpSolution sol;
  sol.x = x;
  sol.eq_multipliers = y;

  double mu = 0.0;
  RVec rc(n), re(w.m);
  RMat H(n, n);
  detail::KktFactor kkt;

  auto compute_mu = [&] {
    double acc = 0.0;
    for (int j = 0; j < nb; ++j) acc += sym_dot(S[j], Z[j]);
    for (int r = 0; r < nr; ++r) acc += s1[r] * z1[r];
    return acc / w.total_cone_dim;
  };

  // Best-iterate tracking: ill-conditioned instances can hit a numerical floor
  // slightly above the requested tolerance; accept the best iterate once
  // progress stalls, provided it is within the acceptance band.  Failure modes
  // (infeasible/unbounded/stuck) never enter the band, so their detection is
  // unaffected.
  const double accept_tol = std::max(200.0 * opt.tol, 1e-7);
  double best_metric = std::numeric_limits<double>::infinity();
  int since_best = 0;
  RVec best_x = x, best_y = y;
  std::vector<RMat> best_Z = Z;
  std::vector<double> best_z1 = z1;
  double best_pobj = 0, best_gap = 0, best_pres = 0, best_dres = 0;
  int best_iter = 0;
  auto restore_best = [&] {
    x = best_x;
    y = best_y;
    Z = best_Z;
    z1 = best_z1;
    sol.x = best_x;
    sol.eq_multipliers = best_y;
    sol.objective_value = best_pobj;
    sol.gap = best_gap;
    sol.primal_residual = best_pres;
    sol.dual_residual = best_dres;
    sol.iterations = best_iter;
  };
  // Every abnormal exit (factorization failure, collapsed cone, stalled steps,
  // iteration cap) falls back to the best iterate when it already sits inside
  // the acceptance band.
  auto abnormal_status = [&] {
    if (best_metric <= accept_tol) {
      restore_best();
      return SdpStatus::optimal;
    }
    return SdpStatus::iteration_limit;
  };

  int iter = 0;
  for (; iter < opt.max_iters; ++iter) {
    // Residuals.
    double pres = 0.0;
    for (int j = 0; j < nb; ++j) {
      R[j] = pencil_value(j, x) - S[j];
      pres = std::max(pres, R[j].norm() / f0_norm[j]);
    }
    for (int r = 0; r < nr; ++r) {
      r1[r] = row_value(r, x) - s1[r];
      pres = std::max(pres, std::abs(r1[r]) / (1.0 + std::abs(w.rows[r].f0)));
    }
    for (int e = 0; e < w.m; ++e) {
      double ax = 0.0;
      for (auto& [v, a] : p.equalities[e].terms) ax += a * x(v);
      re(e) = p.equalities[e].rhs - ax;
      pres = std::max(pres, std::abs(re(e)) / b_scale);
    }
    rc = c;
    for (int e = 0; e < w.m; ++e)
      for (auto& [v, a] : p.equalities[e].terms) rc(v) -= a * y(e);
    for (int j = 0; j < nb; ++j)
      for (auto& t : w.blocks[j].terms) rc(t.var) -= sym_dot(t.coeff, Z[j]);
    for (int r = 0; r < nr; ++r)
      for (auto& [v, a] : w.rows[r].terms) rc(v) -= a * z1[r];
    double dres = rc.cwiseAbs().maxCoeff() / c_scale;

    mu = compute_mu();
    double pobj = c.dot(x);
    double dobj = 0.0;
    for (int e = 0; e < w.m; ++e) dobj += p.equalities[e].rhs * y(e);
    for (int j = 0; j < nb; ++j) dobj -= sym_dot(w.blocks[j].f0, Z[j]);
    for (int r = 0; r < nr; ++r) dobj -= w.rows[r].f0 * z1[r];
    double gap_abs = mu * w.total_cone_dim;
    double relgap = gap_abs / (1.0 + std::max(std::abs(pobj), std::abs(dobj)));

    sol.x = x;
    sol.eq_multipliers = y;
    sol.objective_value = pobj;
    sol.gap = gap_abs;
    sol.primal_residual = pres;
    sol.dual_residual = dres;
    sol.iterations = iter;

    if (opt.verbose) {
      std::cerr << "iter " << iter << " pobj " << pobj << " dobj " << dobj << " mu " << mu
                << " pres " << pres << " dres " << dres << "\n";
    }

    if (pres <= opt.tol && dres <= opt.tol && relgap <= opt.tol) {
      sol.status = SdpStatus::optimal;
      break;
    }
    // Divergence heuristics (no homogeneous embedding; small instances only).
    double data_scale = c_scale + b_scale;
    if (dobj > 1e9 * data_scale && dres <= 1e-6) {
      sol.status = SdpStatus::infeasible;
      break;
    }
    if (pobj < -1e9 * data_scale && pres <= 1e-6) {
      sol.status = SdpStatus::unbounded;
      break;
    }
    if (!(mu > 0)) {  // cone collapsed without meeting full tolerances
      sol.status = abnormal_status();
      break;
    }
    double metric = std::max({pres, dres, relgap});
    if (metric < best_metric * 0.97) {
      best_metric = metric;
      since_best = 0;
      best_x = x;
      best_y = y;
      best_Z = Z;
      best_z1 = z1;
      best_pobj = pobj;
      best_gap = gap_abs;
      best_pres = pres;
      best_dres = dres;
      best_iter = iter;
    } else if (++since_best >= 25 && best_metric <= accept_tol) {
      restore_best();
      sol.status = SdpStatus::optimal;
      break;
    }

    // HKM Schur complement H_{ii'} = Σ_j tr(F_i S⁻¹ F_{i'} Z) + Σ_rows a_i a_{i'} z/s.
    // Exactly symmetric: tr(F S⁻¹ G Z) = tr(G S⁻¹ F Z) by transposition + cyclicity.
    H.setZero();
    bool factor_fail = false;
    for (int j = 0; j < nb && !factor_fail; ++j) {
      const auto& blk = w.blocks[j];
      Eigen::LLT<RMat> llt(S[j]);
      if (llt.info() != Eigen::Success) { factor_fail = true; break; }
      Sinv[j] = llt.solve(RMat::Identity(blk.dim, blk.dim));
      const int nt = static_cast<int>(blk.terms.size());
      std::vector<RMat> v(nt);
      for (int t = 0; t < nt; ++t)
        v[t] = (Sinv[j] * blk.terms[t].coeff * Z[j]).transpose();  // transposed for fast contraction
      for (int t = 0; t < nt; ++t) {
        const int it = blk.terms[t].var;
        for (int u = t; u < nt; ++u) {
          const int iu = blk.terms[u].var;
          // tr(F_t S⁻¹ F_u Z) = Σ_{ab} F_t(a,b) (S⁻¹ F_u Z)(b,a).
          double val = (blk.terms[t].coeff.array() * v[u].array()).sum();
          H(std::min(it, iu), std::max(it, iu)) += val;
        }
      }
    }
    if (factor_fail) { sol.status = abnormal_status(); break; }
    for (int r = 0; r < nr; ++r) {
      double wgt = z1[r] / s1[r];
      const auto& terms = w.rows[r].terms;
      for (std::size_t t = 0; t < terms.size(); ++t)
        for (std::size_t u = t; u < terms.size(); ++u) {
          int a = terms[t].first, bvar = terms[u].first;
          H(std::min(a, bvar), std::max(a, bvar)) += wgt * terms[t].second * terms[u].second;
        }
    }
    for (int i = 0; i < n; ++i)
      for (int j2 = i + 1; j2 < n; ++j2) H(j2, i) = H(i, j2);

    if (!kkt.factor(H, p.equalities, 1e-12)) {
      sol.status = abnormal_status();
      break;
    }
    sol.condition_estimate = kkt.cond_proxy;

    // Right-hand side assembly for a given (sigma*mu, corrector) pair, then solve.
    auto solve_direction = [&](double sigma_mu, bool corrector, std::vector<RMat>& outS,
                               std::vector<RMat>& outZ, std::vector<double>& outs1,
                               std::vector<double>& outz1, RVec& dx_out, RVec& dy_out) {
      RVec g = RVec::Zero(n);
      for (int j = 0; j < nb; ++j) {
        G[j] = sigma_mu * Sinv[j] - Z[j] - Sinv[j] * (R[j] * Z[j]);
        if (corrector) G[j] -= Sinv[j] * (dSa[j] * dZa[j]);
        for (auto& t : w.blocks[j].terms) g(t.var) += (t.coeff.array() * G[j].transpose().array()).sum();
      }
      for (int r = 0; r < nr; ++r) {
        double gval = sigma_mu / s1[r] - z1[r] - r1[r] * z1[r] / s1[r];
        if (corrector) gval -= dsa1[r] * dza1[r] / s1[r];
        g1[r] = gval;
        for (auto& [v, a] : w.rows[r].terms) g(v) += a * gval;
      }
      RVec rhs = g - rc;
      RVec dx(n), wminus;
      kkt.solve(rhs, re, dx, wminus);
      dx_out = dx;
      dy_out = -wminus;
      for (int j = 0; j < nb; ++j) {
        RMat fdx = R[j];
        for (auto& t : w.blocks[j].terms) fdx += dx(t.var) * t.coeff;
        outS[j] = fdx;  // ΔS = F(Δx) + R
        RMat dz = G[j] - Sinv[j] * (outS[j] - R[j]) * Z[j];
        outZ[j] = 0.5 * (dz + dz.transpose());
      }
      for (int r = 0; r < nr; ++r) {
        double fdx = r1[r];
        for (auto& [v, a] : w.rows[r].terms) fdx += dx(v) * a;
        outs1[r] = fdx;
        outz1[r] = g1[r] - (outs1[r] - r1[r]) * z1[r] / s1[r];
      }
    };

    // Max step to the cone boundary.
    auto max_step = [&](const std::vector<RMat>& base, const std::vector<double>& base1,
                        const std::vector<RMat>& dir, const std::vector<double>& dir1) {
      double alpha = std::numeric_limits<double>::infinity();
      for (int j = 0; j < nb; ++j) {
        Eigen::LLT<RMat> llt(base[j]);
        if (llt.info() != Eigen::Success) return 0.0;
        RMat l = llt.matrixL();
        RMat g2 = l.triangularView<Eigen::Lower>().solve(dir[j]);
        g2 = l.triangularView<Eigen::Lower>().solve(g2.transpose().eval());
        Eigen::SelfAdjointEigenSolver<RMat> es(0.5 * (g2 + g2.transpose()),
                                               Eigen::EigenvaluesOnly);
        double lmin = es.eigenvalues()(0);
        if (lmin < 0) alpha = std::min(alpha, -1.0 / lmin);
      }
      for (int r = 0; r < nr; ++r)
        if (dir1[r] < 0) alpha = std::min(alpha, -base1[r] / dir1[r]);
      return alpha;
    };

    RVec dxa, dya;
    solve_direction(0.0, false, dSa, dZa, dsa1, dza1, dxa, dya);  // predictor
    double ap = std::min(1.0, opt.step_frac * max_step(S, s1, dSa, dsa1));
    double ad = std::min(1.0, opt.step_frac * max_step(Z, z1, dZa, dza1));
    double mu_aff = 0.0;
    for (int j = 0; j < nb; ++j)
      mu_aff += sym_dot(S[j] + ap * dSa[j], Z[j] + ad * dZa[j]);
    for (int r = 0; r < nr; ++r) mu_aff += (s1[r] + ap * dsa1[r]) * (z1[r] + ad * dza1[r]);
    mu_aff = std::max(0.0, mu_aff / w.total_cone_dim);
    double sigma = std::pow(mu_aff / mu, 3.0);
    sigma = std::clamp(sigma, 1e-8, 1.0);

    RVec dx, dy;
    solve_direction(sigma * mu, true, dS, dZ, ds1, dz1, dx, dy);  // corrector
    double ap2 = std::min(1.0, opt.step_frac * max_step(S, s1, dS, ds1));
    double ad2 = std::min(1.0, opt.step_frac * max_step(Z, z1, dZ, dz1));

    if (ap2 < 1e-8 && ad2 < 1e-8) {
      sol.status = abnormal_status();  // stalled
      break;
    }

    x += ap2 * dx;
    y += ad2 * dy;
    for (int j = 0; j < nb; ++j) {
      S[j] += ap2 * dS[j];
      Z[j] += ad2 * dZ[j];
      S[j] = 0.5 * (S[j] + S[j].transpose()).eval();
      Z[j] = 0.5 * (Z[j] + Z[j].transpose()).eval();
    }
    for (int r = 0; r < nr; ++r) {
      s1[r] += ap2 * ds1[r];
      z1[r] += ad2 * dz1[r];
    }
  }

  if (iter == opt.max_iters) sol.status = abnormal_status();

  // Map internal duals back to the declared block order.
  sol.block_duals.clear();
  sol.block_duals.reserve(p.psd_blocks.size());
  {
    int jb = 0, jr = 0;
    for (const auto& blk : p.psd_blocks) {
      if (blk.dim() == 1) {
        RMat z(1, 1);
        z(0, 0) = z1[jr++];
        sol.block_duals.push_back(std::move(z));
      } else {
        sol.block_duals.push_back(Z[jb++]);
      }
    }
  }
  return sol;
}

inline SdpSolution solve(const SdpProblem& p, double tol) {
  SolveOptions o;
  o.tol = tol;
  return solve(p, o);
}

}  // namespace qprep::sdp
