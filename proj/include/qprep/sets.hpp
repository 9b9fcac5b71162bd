// Convex sets of density matrices with two oracles: maximize a linear
// functional over the set, and certify membership of v*I - W in the dual cone
// (equivalently: v >= tr(W rho) for every rho in the set).  Five families:
//   Singleton       - one fixed state
//   AllStates       - every density matrix on given dims
//   SepOuter(k)     - outer approximation of separable states by a
//                     Bose-symmetric k-copy extension with positive partial
//                     transposes (level 1 = PPT, exact for two qubits)
//   EpsBall         - trace-norm ball around a center state
//   NegativityBall  - states whose partial-transpose negativity is bounded
// Each family also knows how to emit itself into an SdpProblem, both as a
// primal membership fragment and as a dual-cone constraint on an affine
// Hermitian expression, which is what the game and design layers build on.
#pragma once

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qprep/affine.hpp"
#include "qprep/qmat.hpp"
#include "qprep/rng.hpp"
#include "qprep/sdp.hpp"
#include "qprep/states.hpp"

namespace qprep {

struct Singleton {
  DensityMatrix state;
};
struct AllStates {
  std::vector<int> dims;
};
struct SepOuter {
  int level = 1;
  std::vector<int> dims;  // bipartite {dA, dB}
};
struct EpsBall {
  DensityMatrix center;
  double radius = 0;  // trace-norm radius, in [0, 2]
};
struct NegativityBall {
  std::vector<int> dims;  // bipartite {dA, dB}
  double max_negativity = 0;
};

struct StateSet {
  std::variant<Singleton, AllStates, SepOuter, EpsBall, NegativityBall> family;

  const std::vector<int>& dims() const {
    return std::visit(
        [](const auto& f) -> const std::vector<int>& {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, Singleton>)
            return f.state.dims;
          else if constexpr (std::is_same_v<T, EpsBall>)
            return f.center.dims;
          else
            return f.dims;
        },
        family);
  }
  int dim() const { return product(dims()); }

  const char* kind() const {
    static const char* names[] = {"singleton", "all-states", "sep-outer", "eps-ball",
                                  "negativity-ball"};
    return names[family.index()];
  }
};

inline StateSet make_singleton(DensityMatrix state) { return {Singleton{std::move(state)}}; }

inline StateSet make_all_states(std::vector<int> dims) {
  if (dims.empty() || product(dims) < 1) throw ValidationError("all-states: bad dims");
  return {AllStates{std::move(dims)}};
}

inline StateSet make_sep_outer(int level, std::vector<int> dims) {
  if (level < 1) throw ValidationError("sep-outer: level must be >= 1");
  if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1)
    throw ValidationError("sep-outer: dims must be bipartite {dA, dB}");
  double ext = static_cast<double>(dims[0]) * std::pow(static_cast<double>(dims[1]), level);
  if (ext > kDimCap) throw ValidationError("sep-outer: extension dimension exceeds cap");
  return {SepOuter{level, std::move(dims)}};
}

inline StateSet make_eps_ball(DensityMatrix center, double radius) {
  if (radius < 0) throw ValidationError("eps-ball: radius must be nonnegative");
  if (radius > 2) {
    std::cerr << "[qprep] eps-ball radius " << radius << " clamped to the trace-norm diameter 2\n";
    radius = 2;
  }
  return {EpsBall{std::move(center), radius}};
}

inline StateSet make_negativity_ball(std::vector<int> dims, double max_negativity) {
  if (max_negativity < 0) throw ValidationError("negativity-ball: bound must be nonnegative");
  if (dims.size() != 2 || dims[0] < 1 || dims[1] < 1)
    throw ValidationError("negativity-ball: dims must be bipartite {dA, dB}");
  return {NegativityBall{std::move(dims), max_negativity}};
}

// Sum of the magnitudes of the negative eigenvalues of the partial transpose.
inline double negativity(const Mat& rho, const std::vector<int>& dims) {
  if (dims.size() != 2) throw ValidationError("negativity: dims must be bipartite");
  auto eig = eig_hermitian(partial_transpose(rho, dims, {1}));
  double total = 0;
  for (int i = 0; i < eig.values.size(); ++i) total += std::max(0.0, -eig.values(i));
  return total;
}

// Projects a near-density solver output onto exact density matrices: clip
// negative eigenvalues, renormalize the trace.
inline DensityMatrix nearest_density(const Mat& m, std::vector<int> dims) {
  auto eig = eig_hermitian(hermitize(m, 1e-5));
  Mat out = Mat::Zero(m.rows(), m.cols());
  double tr = 0;
  for (int i = 0; i < eig.values.size(); ++i) {
    double lam = std::max(0.0, eig.values(i));
    if (lam > 0) {
      out += lam * (eig.vectors.col(i) * eig.vectors.col(i).adjoint());
      tr += lam;
    }
  }
  if (tr < 1e-12) throw SolverError("nearest_density: output has vanishing trace");
  return DensityMatrix(std::move(dims), out / tr);
}

// Variant-specific dual witnesses.  When plugged into the defining identity of
// the family they reproduce the tested operator within certificate tolerance.
struct DualCertificate {
  // Sum-of-partial-transposes form (all-states, sep-outer): witness for each
  // subset of extension copies, indexed by bitmask; entry 0 is the plain PSD
  // remainder.  All must be PSD.
  std::vector<Mat> transpose_witnesses;
  // Trace-ball form: a >= 0, lambda*I - a >= 0, (mu+lambda)*I + M - 2a >= 0,
  // and 2 tr(a center) - lambda (1+radius) - mu >= 0.
  Mat ball_a;
  double ball_mu = 0, ball_lambda = 0;
  // Negativity-ball form: y >= 0, cap*I - y >= 0, M - y^{PT} - shift*I >= 0,
  // shift - cap * bound >= 0, cap >= 0.
  Mat neg_y;
  double neg_cap = 0, neg_shift = 0;
};

struct DualMemberResult {
  bool member = false;
  double slack = 0;  // certified lower bound on min over the set of v - tr(W rho)
  DualCertificate cert;
};

struct MaxLinearResult {
  double value = 0;
  DensityMatrix maximizer;
};

namespace detail {

inline sdp::SdpSolution solve_or_throw(const sdp::SdpProblem& p, double tol) {
  sdp::SolveOptions o;
  o.tol = tol;
  auto s = sdp::solve(p, o);
  if (!s.ok())
    throw SolverError(std::string("state-set subproblem did not solve: ") +
                      sdp::to_string(s.status));
  return s;
}

inline bool near_scalar_identity(const Mat& m, double& scalar) {
  const int d = static_cast<int>(m.rows());
  scalar = m.trace().real() / d;
  return max_abs(m - scalar * identity(d)) <= 1e-12 * (1.0 + std::abs(scalar));
}

// Isometry onto the symmetric subspace of k copies of a d-dimensional system.
inline Mat symmetric_isometry(int k, int d) {
  if (k == 1) return identity(d);
  Mat proj = symmetric_projector(k, d);
  auto eig = eig_hermitian(proj);
  int m = 0;
  for (int i = 0; i < eig.values.size(); ++i)
    if (eig.values(i) > 0.5) ++m;
  Mat v(proj.rows(), m);
  int c = 0;
  for (int i = 0; i < eig.values.size(); ++i)
    if (eig.values(i) > 0.5) v.col(c++) = eig.vectors.col(i);
  return v;
}

// Subsystem indices (within {A, B_1..B_k} = {0..k}) named by a copy bitmask.
inline std::vector<int> copies_of_mask(int mask) {
  std::vector<int> subs;
  for (int i = 0; mask >> i; ++i)
    if ((mask >> i) & 1) subs.push_back(i + 1);
  return subs;
}

}  // namespace detail

// Constrains an affine Hermitian expression to the cone generated by
// SepOuter(level) states: a Bose-symmetric extension to `level` copies of the
// second subsystem, PSD under every partial transpose of extension copies,
// whose first-copy reduction equals the expression.  Level 1 needs no
// extension variables and reduces to expr >= 0, expr^{PT} >= 0.
inline void build_sep_outer_constraints(sdp::SdpProblem& p, const sdp::AffineHermitian& rho,
                                        int level, const std::vector<int>& dims) {
  if (dims.size() != 2) throw ValidationError("sep-outer fragment: dims must be bipartite");
  const int da = dims[0], db = dims[1];
  if (rho.dim() != da * db) throw ValidationError("sep-outer fragment: dimension mismatch");
  double extd = static_cast<double>(da) * std::pow(static_cast<double>(db), level);
  if (extd > kDimCap) throw ValidationError("sep-outer fragment: extension dimension exceeds cap");
  if (level == 1) {
    add_psd(p, rho);
    add_psd(p, apply(rho, [&](const Mat& m) { return partial_transpose(m, dims, {1}); }));
    return;
  }
  std::vector<int> ext_dims(1, da);
  for (int i = 0; i < level; ++i) ext_dims.push_back(db);
  const Mat vb = detail::symmetric_isometry(level, db);
  const Mat iv = kron(identity(da), vb);
  auto t = sdp::add_hermitian_var(p, static_cast<int>(iv.cols()));
  // sigma >= 0 is equivalent to the compressed variable being PSD
  add_psd(p, t.expr());
  auto sigma = apply(t.expr(), [&](const Mat& m) { return Mat(iv * m * iv.adjoint()); });
  for (int mask = 1; mask < (1 << level); ++mask) {
    auto subs = detail::copies_of_mask(mask);
    add_psd(p, apply(sigma, [&](const Mat& m) { return partial_transpose(m, ext_dims, subs); }));
  }
  auto reduced =
      apply(sigma, [&](const Mat& m) { return partial_trace(m, ext_dims, {0, 1}); });
  add_zero(p, reduced - rho);
}

// Constrains an affine Hermitian expression E to the dual cone of the set:
// tr(E rho) >= 0 for every rho in the set.  Purely scalar expressions
// c(x) * I collapse to the single inequality c(x) >= 0.
inline void emit_dual_constraint(sdp::SdpProblem& p, const sdp::AffineHermitian& expr,
                                 const StateSet& set) {
  if (expr.dim() != set.dim()) throw ValidationError("dual constraint: dimension mismatch");
  {  // scalar fast path
    double c0;
    bool scalar = detail::near_scalar_identity(expr.c0, c0);
    std::vector<std::pair<int, double>> row;
    for (const auto& [v, m] : expr.terms) {
      double c;
      if (!detail::near_scalar_identity(m, c)) {
        scalar = false;
        break;
      }
      row.push_back({v, c});
    }
    if (scalar) {
      if (row.empty()) {
        if (c0 < -1e-10)
          throw ValidationError("dual constraint: constant expression is negative");
        return;
      }
      p.add_linear_ge(c0, row);
      return;
    }
  }
  if (const auto* s = std::get_if<Singleton>(&set.family)) {
    auto [c0, row] = trace_against(expr, s->state.matrix);
    p.add_linear_ge(c0, row);
  } else if (std::get_if<AllStates>(&set.family)) {
    add_psd(p, expr);
  } else if (const auto* s2 = std::get_if<SepOuter>(&set.family)) {
    const auto& dims = s2->dims;
    const int k = s2->level;
    const int d = set.dim();
    if (k == 1) {
      auto m1 = sdp::add_hermitian_var(p, d);
      add_psd(p, m1.expr());
      add_psd(p, expr - apply(m1.expr(),
                              [&](const Mat& m) { return partial_transpose(m, dims, {1}); }));
      return;
    }
    const int da = dims[0], db = dims[1];
    std::vector<int> ext_dims(1, da);
    for (int i = 0; i < k; ++i) ext_dims.push_back(db);
    const int ext_dim = product(ext_dims);
    if (ext_dim > kDimCap) throw ValidationError("dual constraint: extension dimension exceeds cap");
    const Mat vb = detail::symmetric_isometry(k, db);
    const Mat iv = kron(identity(da), vb);
    const Mat itail = identity(ext_dim / d);
    auto lifted = apply(expr, [&](const Mat& m) { return kron(m, itail); });
    sdp::AffineHermitian residue = lifted;
    for (int mask = 0; mask < (1 << k); ++mask) {
      auto w = sdp::add_hermitian_var(p, ext_dim);
      add_psd(p, w.expr());
      auto subs = detail::copies_of_mask(mask);
      residue -= apply(w.expr(),
                       [&](const Mat& m) { return partial_transpose(m, ext_dims, subs); });
    }
    add_zero(p, apply(residue, [&](const Mat& m) { return Mat(iv.adjoint() * m * iv); }));
  } else if (const auto* s3 = std::get_if<EpsBall>(&set.family)) {
    const int d = set.dim();
    const Mat eye = identity(d);
    auto a = sdp::add_hermitian_var(p, d);
    int lam = p.add_var();
    int mu = p.add_var();
    add_psd(p, a.expr());
    add_psd(p, sdp::AffineHermitian::scaled_var(lam, eye) - a.expr());
    add_psd(p, sdp::AffineHermitian::scaled_var(mu, eye) +
                   sdp::AffineHermitian::scaled_var(lam, eye) + expr - 2.0 * a.expr());
    auto [c0, row] = trace_against(a.expr(), s3->center.matrix);
    std::vector<std::pair<int, double>> full;
    for (auto& [v, c] : row) full.push_back({v, 2.0 * c});
    full.push_back({lam, -(1.0 + s3->radius)});
    full.push_back({mu, -1.0});
    p.add_linear_ge(2.0 * c0, full);
  } else if (const auto* s4 = std::get_if<NegativityBall>(&set.family)) {
    const int d = set.dim();
    const Mat eye = identity(d);
    auto y = sdp::add_hermitian_var(p, d);
    add_psd(p, y.expr());
    auto ypt =
        apply(y.expr(), [&](const Mat& m) { return partial_transpose(m, s4->dims, {1}); });
    int shift = p.add_var();
    if (s4->max_negativity > 1e-12) {
      int cap = p.add_var();
      p.add_linear_ge(0.0, {{cap, 1.0}});
      add_psd(p, sdp::AffineHermitian::scaled_var(cap, eye) - y.expr());
      p.add_linear_ge(0.0, {{shift, 1.0}, {cap, -s4->max_negativity}});
    } else {
      // zero bound: the cap multiplier is an unbounded flat direction; drop it
      p.add_linear_ge(0.0, {{shift, 1.0}});
    }
    add_psd(p, expr - ypt - sdp::AffineHermitian::scaled_var(shift, eye));
  }
}

// max over the set of tr[W rho].  Exact for singleton/all-states/eps-ball/
// negativity-ball; an upper bound decreasing in the level for sep-outer.
inline MaxLinearResult max_linear(const Mat& w, const StateSet& set, double tol = 1e-8) {
  const int d = set.dim();
  if (w.rows() != d || w.cols() != d) throw ValidationError("max_linear: dimension mismatch");
  if (const auto* s = std::get_if<Singleton>(&set.family)) {
    return {std::real((w * s->state.matrix).trace()), s->state};
  }
  if (std::get_if<AllStates>(&set.family)) {
    auto eig = eig_hermitian(w);
    int top = static_cast<int>(eig.values.size()) - 1;
    Vec v = eig.vectors.col(top);
    return {eig.values(top), DensityMatrix(set.dims(), v * v.adjoint())};
  }
  if (const auto* s = std::get_if<EpsBall>(&set.family)) {
    if (s->radius <= 1e-12) return {std::real((w * s->center.matrix).trace()), s->center};
    sdp::SdpProblem p;
    auto rho = sdp::add_hermitian_var(p, d);
    auto pos = sdp::add_hermitian_var(p, d);
    add_psd(p, rho.expr());
    add_psd(p, pos.expr());
    add_psd(p, pos.expr() - rho.expr() + sdp::AffineHermitian::constant(s->center.matrix));
    auto [tc, trow] = trace_against(rho.expr(), identity(d));
    p.add_equality(trow, 1.0 - tc);
    auto [pc, prow] = trace_against(pos.expr(), identity(d));
    std::vector<std::pair<int, double>> cap;
    for (auto& [v, c] : prow) cap.push_back({v, -c});
    p.add_linear_ge(s->radius / 2 - pc, cap);
    auto [oc, orow] = trace_against(rho.expr(), w);
    (void)oc;
    for (auto& [v, c] : orow) p.set_objective(v, -c);
    auto sol = detail::solve_or_throw(p, tol);
    return {-sol.objective_value, nearest_density(rho.value(sol.x), set.dims())};
  }
  if (const auto* s = std::get_if<NegativityBall>(&set.family)) {
    sdp::SdpProblem p;
    auto rho = sdp::add_hermitian_var(p, d);
    add_psd(p, rho.expr());
    auto rpt =
        apply(rho.expr(), [&](const Mat& m) { return partial_transpose(m, s->dims, {1}); });
    if (s->max_negativity > 1e-12) {
      auto q = sdp::add_hermitian_var(p, d);
      add_psd(p, q.expr());
      add_psd(p, rpt + q.expr());
      auto [qc, qrow] = trace_against(q.expr(), identity(d));
      std::vector<std::pair<int, double>> cap;
      for (auto& [v, c] : qrow) cap.push_back({v, -c});
      p.add_linear_ge(s->max_negativity - qc, cap);
    } else {
      add_psd(p, rpt);
    }
    auto [tc, trow] = trace_against(rho.expr(), identity(d));
    p.add_equality(trow, 1.0 - tc);
    auto [oc, orow] = trace_against(rho.expr(), w);
    (void)oc;
    for (auto& [v, c] : orow) p.set_objective(v, -c);
    auto sol = detail::solve_or_throw(p, tol);
    return {-sol.objective_value, nearest_density(rho.value(sol.x), set.dims())};
  }
  const auto& s = std::get<SepOuter>(set.family);
  const int da = s.dims[0], db = s.dims[1], k = s.level;
  std::vector<int> ext_dims(1, da);
  for (int i = 0; i < k; ++i) ext_dims.push_back(db);
  const Mat vb = detail::symmetric_isometry(k, db);
  const Mat iv = kron(identity(da), vb);
  sdp::SdpProblem p;
  auto t = sdp::add_hermitian_var(p, static_cast<int>(iv.cols()));
  add_psd(p, t.expr());
  auto sigma = apply(t.expr(), [&](const Mat& m) { return Mat(iv * m * iv.adjoint()); });
  for (int mask = 1; mask < (1 << k); ++mask) {
    auto subs = detail::copies_of_mask(mask);
    add_psd(p, apply(sigma, [&](const Mat& m) { return partial_transpose(m, ext_dims, subs); }));
  }
  auto [tc, trow] = trace_against(t.expr(), identity(static_cast<int>(iv.cols())));
  p.add_equality(trow, 1.0 - tc);
  const Mat wl = kron(w, identity(product(ext_dims) / d));
  auto [oc, orow] = trace_against(sigma, wl);
  (void)oc;
  for (auto& [v, c] : orow) p.set_objective(v, -c);
  auto sol = detail::solve_or_throw(p, tol);
  Mat sig = sigma.value(sol.x);
  return {-sol.objective_value,
          nearest_density(partial_trace(sig, ext_dims, {0, 1}), set.dims())};
}

// Decides whether v*I - W is in the dual cone of the set, i.e. whether
// v >= tr(W rho) for every rho in the set, and returns a standalone
// certificate.  `slack` is the certified margin min (v - tr(W rho)).
inline DualMemberResult dual_member(const Mat& w, double v, const StateSet& set,
                                    double tol = 1e-8) {
  const int d = set.dim();
  if (w.rows() != d || w.cols() != d) throw ValidationError("dual_member: dimension mismatch");
  const Mat target = v * identity(d) - w;
  DualMemberResult out;
  if (const auto* s = std::get_if<Singleton>(&set.family)) {
    out.slack = v - std::real((w * s->state.matrix).trace());
  } else if (std::get_if<AllStates>(&set.family)) {
    out.slack = min_eigenvalue(target);
    out.cert.transpose_witnesses = {target};
  } else if (const auto* s2 = std::get_if<SepOuter>(&set.family)) {
    const int k = s2->level;
    sdp::SdpProblem p;
    int sv = p.add_var(1.0);  // minimize the shortfall
    auto expr =
        sdp::AffineHermitian::constant(target) + sdp::AffineHermitian::scaled_var(sv, identity(d));
    if (k == 1) {
      auto m1 = sdp::add_hermitian_var(p, d);
      add_psd(p, m1.expr());
      auto pt1 =
          apply(m1.expr(), [&](const Mat& m) { return partial_transpose(m, s2->dims, {1}); });
      add_psd(p, expr - pt1);
      auto sol = detail::solve_or_throw(p, tol);
      double shortfall = sol.objective_value;
      out.slack = -shortfall;
      Mat m1v = m1.value(sol.x);
      Mat m0 = target - partial_transpose(m1v, s2->dims, {1});
      out.cert.transpose_witnesses = {m0, m1v};
    } else {
      const int da = s2->dims[0], db = s2->dims[1];
      std::vector<int> ext_dims(1, da);
      for (int i = 0; i < k; ++i) ext_dims.push_back(db);
      const int ext_dim = product(ext_dims);
      const Mat vb = detail::symmetric_isometry(k, db);
      const Mat iv = kron(identity(da), vb);
      auto lifted = apply(expr, [&](const Mat& m) { return kron(m, identity(ext_dim / d)); });
      sdp::AffineHermitian residue = lifted;
      std::vector<sdp::HermitianVar> ws;
      for (int mask = 0; mask < (1 << k); ++mask) {
        auto wv = sdp::add_hermitian_var(p, ext_dim);
        add_psd(p, wv.expr());
        auto subs = detail::copies_of_mask(mask);
        residue -= apply(wv.expr(),
                         [&](const Mat& m) { return partial_transpose(m, ext_dims, subs); });
        ws.push_back(wv);
      }
      add_zero(p, apply(residue, [&](const Mat& m) { return Mat(iv.adjoint() * m * iv); }));
      auto sol = detail::solve_or_throw(p, tol);
      double shortfall = sol.objective_value;
      out.slack = -shortfall;
      for (auto& wv : ws) out.cert.transpose_witnesses.push_back(wv.value(sol.x));
      out.cert.transpose_witnesses[0] -= shortfall * identity(ext_dim);
    }
  } else if (const auto* s3 = std::get_if<EpsBall>(&set.family)) {
    if (s3->radius <= 1e-12) {
      // Degenerate ball: certify against the center alone with a closed-form
      // multiplier triple (no interior for the interior-point method).
      const double lmax = max_eigenvalue(target), lmin = min_eigenvalue(target);
      const double c = lmax, lam = (c - lmin) / 2.0;
      out.cert.ball_a = hermitize(0.5 * (c * identity(d) - target), 1.0);
      out.cert.ball_lambda = lam;
      out.cert.ball_mu = c - lam - v;
      out.slack = v - std::real((w * s3->center.matrix).trace());
      out.member = out.slack >= -tol::kCert;
      return out;
    }
    sdp::SdpProblem p;
    const Mat eye = identity(d);
    auto a = sdp::add_hermitian_var(p, d);
    int lam = p.add_var(1.0 + s3->radius);
    int mu = p.add_var(1.0);
    add_psd(p, a.expr());
    add_psd(p, sdp::AffineHermitian::scaled_var(lam, eye) - a.expr());
    add_psd(p, sdp::AffineHermitian::scaled_var(mu, eye) +
                   sdp::AffineHermitian::scaled_var(lam, eye) +
                   sdp::AffineHermitian::constant(target) - 2.0 * a.expr());
    auto [c0, row] = trace_against(a.expr(), s3->center.matrix);
    (void)c0;
    for (auto& [var, c] : row) p.set_objective(var, -2.0 * c);
    auto sol = detail::solve_or_throw(p, tol);
    out.slack = -sol.objective_value;
    out.cert.ball_a = a.value(sol.x);
    out.cert.ball_lambda = sol.x(lam);
    out.cert.ball_mu = sol.x(mu);
  } else if (const auto* s4 = std::get_if<NegativityBall>(&set.family)) {
    sdp::SdpProblem p;
    const Mat eye = identity(d);
    auto y = sdp::add_hermitian_var(p, d);
    add_psd(p, y.expr());
    auto ypt =
        apply(y.expr(), [&](const Mat& m) { return partial_transpose(m, s4->dims, {1}); });
    int shift = p.add_var(-1.0);  // maximize the certified margin
    int cap = -1;
    if (s4->max_negativity > 1e-12) {
      cap = p.add_var(s4->max_negativity);
      p.add_linear_ge(0.0, {{cap, 1.0}});
      add_psd(p, sdp::AffineHermitian::scaled_var(cap, eye) - y.expr());
    }
    add_psd(p, sdp::AffineHermitian::constant(target) - ypt -
                   sdp::AffineHermitian::scaled_var(shift, eye));
    auto sol = detail::solve_or_throw(p, tol);
    out.slack = -sol.objective_value;
    out.cert.neg_y = y.value(sol.x);
    out.cert.neg_shift = sol.x(shift);
    out.cert.neg_cap =
        cap >= 0 ? sol.x(cap) : std::max(0.0, max_eigenvalue(out.cert.neg_y));
  }
  out.member = out.slack >= -tol::kCert;
  return out;
}

// Decides whether min over the trace-norm ball of tr(M rho') is nonnegative,
// with the ball's native certificate.  Equivalent to dual_member(-M, 0, ball).
inline DualMemberResult eps_ball_dual_member(const Mat& m, const DensityMatrix& center,
                                             double radius, double tol = 1e-8) {
  return dual_member(-m, 0.0, make_eps_ball(center, radius), tol);
}

// Largest violation of the certificate identities for v*I - W; 0 means the
// certificate checks out exactly.
inline double check_certificate(const Mat& w, double v, const StateSet& set,
                                const DualCertificate& cert) {
  const int d = set.dim();
  const Mat target = v * identity(d) - w;
  double viol = 0;
  auto psd_short = [&](const Mat& m) { return std::max(0.0, -min_eigenvalue(m)); };
  if (std::get_if<Singleton>(&set.family)) {
    const auto& st = std::get<Singleton>(set.family).state.matrix;
    return std::max(0.0, std::real((w * st).trace()) - v);
  }
  if (std::get_if<AllStates>(&set.family)) {
    if (cert.transpose_witnesses.size() != 1) throw ValidationError("certificate shape mismatch");
    viol = std::max(viol, max_abs(target - cert.transpose_witnesses[0]));
    viol = std::max(viol, psd_short(cert.transpose_witnesses[0]));
    return viol;
  }
  if (const auto* s = std::get_if<SepOuter>(&set.family)) {
    const int k = s->level;
    if (static_cast<int>(cert.transpose_witnesses.size()) != (1 << k))
      throw ValidationError("certificate shape mismatch");
    const int da = s->dims[0], db = s->dims[1];
    std::vector<int> ext_dims(1, da);
    for (int i = 0; i < k; ++i) ext_dims.push_back(db);
    const Mat vb = detail::symmetric_isometry(k, db);
    const Mat iv = kron(identity(da), vb);
    Mat residue = kron(target, identity(product(ext_dims) / d));
    for (int mask = 0; mask < (1 << k); ++mask) {
      const Mat& wit = cert.transpose_witnesses[mask];
      viol = std::max(viol, psd_short(wit));
      residue -= partial_transpose(wit, ext_dims, detail::copies_of_mask(mask));
    }
    viol = std::max(viol, max_abs(Mat(iv.adjoint() * residue * iv)));
    return viol;
  }
  if (const auto* s = std::get_if<EpsBall>(&set.family)) {
    const Mat eye = identity(d);
    viol = std::max(viol, psd_short(cert.ball_a));
    viol = std::max(viol, psd_short(cert.ball_lambda * eye - cert.ball_a));
    viol = std::max(viol,
                    psd_short((cert.ball_mu + cert.ball_lambda) * eye + target - 2 * cert.ball_a));
    double margin = 2 * std::real((cert.ball_a * s->center.matrix).trace()) -
                    cert.ball_lambda * (1 + s->radius) - cert.ball_mu;
    viol = std::max(viol, std::max(0.0, -margin));
    return viol;
  }
  const auto& s = std::get<NegativityBall>(set.family);
  const Mat eye = identity(d);
  viol = std::max(viol, psd_short(cert.neg_y));
  viol = std::max(viol, psd_short(cert.neg_cap * eye - cert.neg_y));
  viol = std::max(viol, psd_short(target - partial_transpose(cert.neg_y, s.dims, {1}) -
                                  cert.neg_shift * eye));
  viol = std::max(viol, std::max(0.0, -(cert.neg_shift - cert.neg_cap * s.max_negativity)));
  viol = std::max(viol, std::max(0.0, -cert.neg_cap));
  return viol;
}

namespace detail {

inline Vec haar_ket(int d, CounterRng& rng) {
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = Complex(rng.normal(), rng.normal());
  double n = v.norm();
  if (n < 1e-12) return haar_ket(d, rng);
  return v / n;
}

inline Mat random_mixed(const std::vector<int>& dims, CounterRng& rng) {
  const int d = product(dims);
  Vec psi = haar_ket(d, rng);
  double wmix = rng.uniform();
  return (1 - wmix) * (psi * psi.adjoint()) + wmix / d * identity(d);
}

}  // namespace detail

// Draws a random state guaranteed to lie in the set: Haar-random pure states
// mixed toward the maximally mixed state, post-processed per family so that
// membership holds exactly.
inline DensityMatrix sample_state(const StateSet& set, CounterRng& rng) {
  const auto& dims = set.dims();
  const int d = set.dim();
  if (const auto* s = std::get_if<Singleton>(&set.family)) return s->state;
  if (std::get_if<AllStates>(&set.family))
    return DensityMatrix(dims, detail::random_mixed(dims, rng));
  if (const auto* s = std::get_if<SepOuter>(&set.family)) {
    const int da = s->dims[0], db = s->dims[1];
    int parts = 1 + static_cast<int>(rng.uniform() * 4);
    std::vector<double> wts(parts);
    double tot = 0;
    for (auto& x : wts) {
      x = rng.uniform() + 1e-9;
      tot += x;
    }
    Mat acc = Mat::Zero(d, d);
    for (int i = 0; i < parts; ++i) {
      Vec a = detail::haar_ket(da, rng), b = detail::haar_ket(db, rng);
      Vec ab = kron_vec(a, b);
      acc += wts[i] / tot * (ab * ab.adjoint());
    }
    double wmix = rng.uniform();
    return DensityMatrix(dims, (1 - wmix) * acc + wmix / d * identity(d));
  }
  if (const auto* s = std::get_if<EpsBall>(&set.family)) {
    Mat sigma = detail::random_mixed(dims, rng);
    double dist = trace_norm(sigma - s->center.matrix);
    double alpha =
        dist < 1e-14 ? 0.0 : rng.uniform() * std::min(1.0, s->radius / dist);
    return DensityMatrix(dims, (1 - alpha) * s->center.matrix + alpha * sigma);
  }
  const auto& s = std::get<NegativityBall>(set.family);
  Mat rho = detail::random_mixed(dims, rng);
  double targetn = rng.uniform() * s.max_negativity;
  if (negativity(rho, s.dims) <= targetn) return DensityMatrix(dims, rho);
  const Mat mixed = identity(d) / d;
  double lo = 0, hi = 1;
  for (int it = 0; it < 60; ++it) {
    double mid = (lo + hi) / 2;
    Mat cand = (1 - mid) * rho + mid * mixed;
    if (negativity(cand, s.dims) <= targetn)
      hi = mid;
    else
      lo = mid;
  }
  return DensityMatrix(dims, (1 - hi) * rho + hi * mixed);
}

}  // namespace qprep
