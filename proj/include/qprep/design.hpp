// Protocol design by semidefinite programming.
//
// Builds verdict games (entanglement-certification protocols) that minimize
// the false-negative rate at a budgeted false-positive rate, for three
// families of verdict measurements: unrestricted global POVMs, local Pauli
// measurements coordinated by two-way classical communication between
// rounds only, and the same with additional one-way communication inside
// each round.  The multi-round designer optimizes over adaptive measurement
// schedules jointly with a dual certificate that caps the separable
// player's acceptance probability.  A complementary coordinate-descent
// loop refines one round of an existing game at a time, which scales to
// round counts the global designer cannot reach.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qprep/affine.hpp"
#include "qprep/game.hpp"
#include "qprep/qmat.hpp"
#include "qprep/rng.hpp"
#include "qprep/sdp.hpp"
#include "qprep/sets.hpp"
#include "qprep/states.hpp"

namespace qprep {

// ------------------------------------------------------------------
// Measurement classes
// ------------------------------------------------------------------

enum class MeasKind {
  GlobalPovm,  // any POVM on the full state
  OneWayLpcc,  // local measurements; inside a round the second party may
               // learn the first party's setting and outcome
  LocalPauli,  // local measurements; parties coordinate only between rounds
};

// A family of verdict measurements.  The local kinds carry fixed banks of
// binary local measurements (projector pairs) for each party and setting;
// the optimizer chooses the classical wiring around them.
struct MeasurementClass {
  MeasKind kind = MeasKind::GlobalPovm;
  std::vector<std::vector<Mat>> alice;  // alice[x] = {A_{0|x}, A_{1|x}}
  std::vector<std::vector<Mat>> bob;    // bob[y]   = {B_{0|y}, B_{1|y}}

  bool local() const { return kind != MeasKind::GlobalPovm; }
  int settings_a() const { return static_cast<int>(alice.size()); }
  int settings_b() const { return static_cast<int>(bob.size()); }
};

namespace detail {

inline void check_local_bank(const std::vector<std::vector<Mat>>& bank, const char* who) {
  if (bank.empty()) throw ValidationError(std::string(who) + ": empty measurement bank");
  for (const auto& pair : bank) {
    if (pair.size() != 2)
      throw ValidationError(std::string(who) + ": each setting needs exactly two outcomes");
    for (const auto& e : pair) {
      if (e.rows() != 2 || e.cols() != 2)
        throw ValidationError(std::string(who) + ": local measurements must act on a qubit");
      if (max_abs(e - e.adjoint()) > 1e-12)
        throw ValidationError(std::string(who) + ": local measurement not Hermitian");
      if (max_abs(e * e - e) > 1e-10)
        throw ValidationError(std::string(who) + ": local measurement not projective");
      if (std::abs(e.trace().real() - 1.0) > 1e-10)
        throw ValidationError(std::string(who) + ": local projector must have rank one");
    }
    if (max_abs(pair[0] + pair[1] - Mat::Identity(2, 2)) > 1e-12)
      throw ValidationError(std::string(who) + ": setting outcomes do not sum to identity");
  }
}

inline std::vector<std::vector<Mat>> pauli_projector_bank() {
  std::vector<std::vector<Mat>> bank;
  for (int x = 1; x <= 3; ++x) {
    const Mat s = pauli(x);
    bank.push_back({0.5 * (Mat::Identity(2, 2) + s), 0.5 * (Mat::Identity(2, 2) - s)});
  }
  return bank;
}

}  // namespace detail

inline MeasurementClass make_global_class() { return MeasurementClass{MeasKind::GlobalPovm, {}, {}}; }

inline MeasurementClass make_measurement_class(MeasKind kind, std::vector<std::vector<Mat>> alice,
                                               std::vector<std::vector<Mat>> bob) {
  if (kind == MeasKind::GlobalPovm) return make_global_class();
  detail::check_local_bank(alice, "measurement class (first party)");
  detail::check_local_bank(bob, "measurement class (second party)");
  return MeasurementClass{kind, std::move(alice), std::move(bob)};
}

inline MeasurementClass make_local_pauli_class() {
  return make_measurement_class(MeasKind::LocalPauli, detail::pauli_projector_bank(),
                                detail::pauli_projector_bank());
}

inline MeasurementClass make_one_way_lpcc_class() {
  return make_measurement_class(MeasKind::OneWayLpcc, detail::pauli_projector_bank(),
                                detail::pauli_projector_bank());
}

// ------------------------------------------------------------------
// Measurement policies
// ------------------------------------------------------------------

// Classical description of a multi-round local protocol: the joint
// distribution of all settings and the final verdict, conditioned on all
// outcomes,
//     table[(x_1, a_1, ..., x_n, a_n, gamma)] = P(x_1..x_n, gamma | a_1..a_n),
// stored round-major (earlier rounds vary slowest; within a round the
// setting varies before the outcome, the verdict index is last).  A valid
// policy cannot signal from future outcomes to past settings: the marginal
// of the settings through round k may depend only on outcomes of earlier
// rounds.  When `one_way` is set, the split refines this inside each round:
// the second party's setting may additionally depend on the first party's
// same-round setting and outcome.
struct DemonPolicy {
  int rounds = 0;
  int verdicts = 2;
  std::vector<int> settings;  // joint setting alphabet size per round
  std::vector<int> outcomes;  // joint outcome alphabet size per round
  struct Split {
    int sx = 0, sy = 0;  // per-party setting alphabet sizes
    int oa = 0, ob = 0;  // per-party outcome alphabet sizes
  };
  std::vector<Split> split;  // optional bipartite factorization, size rounds
  bool one_way = false;
  std::vector<double> table;

  long records(int k) const { return static_cast<long>(settings[k]) * outcomes[k]; }
  long transcripts() const {
    long t = 1;
    for (int k = 0; k < rounds; ++k) t *= records(k);
    return t;
  }
  long table_size() const { return transcripts() * verdicts; }
  long index(const std::vector<int>& xs, const std::vector<int>& as, int gamma) const {
    long t = 0;
    for (int k = 0; k < rounds; ++k)
      t = t * records(k) + static_cast<long>(xs[k]) * outcomes[k] + as[k];
    return t * verdicts + gamma;
  }
};

namespace detail {

struct PolicyChainStats {
  double signalling = 0.0;  // worst dependence of a marginal on a forbidden outcome
  double total = 0.0;       // mass of the fully collapsed distribution (should be 1)
};

// Collapses the policy from the last round backwards.  Marginalizing the
// verdict and then, per round, the outcome must give a function that does
// not depend on the outcome being removed; the worst such dependence is the
// signalling deviation.  For one-way policies the within-round collapse
// happens in two stages (second party, then first), which checks the
// refined chain instead.
inline PolicyChainStats policy_chain_stats(const DemonPolicy& p) {
  PolicyChainStats st;
  long t_all = p.transcripts();
  std::vector<double> cur(t_all, 0.0);
  for (long t = 0; t < t_all; ++t) {
    double s = 0;
    for (int g = 0; g < p.verdicts; ++g) s += p.table[t * p.verdicts + g];
    cur[t] = s;
  }
  for (int k = p.rounds - 1; k >= 0; --k) {
    const long rec = p.records(k);
    const long pref = static_cast<long>(cur.size()) / rec;
    std::vector<double> nxt(pref, 0.0);
    if (p.one_way) {
      const auto& sp = p.split[k];
      // stage 1: drop the second party's outcome b given (x, y, a)
      // stage 2: sum y, then drop the first party's outcome a given x
      for (long pf = 0; pf < pref; ++pf) {
        std::vector<double> u(sp.sx, 0.0);
        for (int x = 0; x < sp.sx; ++x) {
          for (int a = 0; a < sp.oa; ++a) {
            double ua = 0;
            for (int y = 0; y < sp.sy; ++y) {
              double v0 = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
              for (int b = 0; b < sp.ob; ++b) {
                const long s = static_cast<long>(x) * sp.sy + y;
                const long o = static_cast<long>(a) * sp.ob + b;
                const double v = cur[pf * rec + s * p.outcomes[k] + o];
                v0 += v;
                lo = std::min(lo, v);
                hi = std::max(hi, v);
              }
              st.signalling = std::max(st.signalling, hi - lo);
              ua += v0 / sp.ob;
            }
            // ua = sum_y P(x, y | ..., a); must not depend on a
            if (a == 0) {
              u[x] = ua;
            } else {
              st.signalling = std::max(st.signalling, std::abs(ua - u[x]));
              u[x] = (u[x] * a + ua) / (a + 1);
            }
          }
          nxt[pf] += u[x];
        }
      }
    } else {
      for (long pf = 0; pf < pref; ++pf) {
        for (long s = 0; s < p.settings[k]; ++s) {
          double acc = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
          for (int o = 0; o < p.outcomes[k]; ++o) {
            const double v = cur[pf * rec + s * p.outcomes[k] + o];
            acc += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
          }
          st.signalling = std::max(st.signalling, hi - lo);
          nxt[pf] += acc / p.outcomes[k];
        }
      }
    }
    cur = std::move(nxt);
  }
  st.total = cur.empty() ? 0.0 : cur[0];
  return st;
}

}  // namespace detail

// Structural and semantic checks; returns human-readable complaints,
// empty when the policy is valid.
inline std::vector<std::string> validate_policy(const DemonPolicy& p) {
  std::vector<std::string> out;
  auto complain = [&](std::string m) { out.push_back(std::move(m)); };
  if (p.rounds < 1) complain("policy: needs at least one round");
  if (p.verdicts < 1) complain("policy: needs at least one verdict");
  if (static_cast<int>(p.settings.size()) != p.rounds ||
      static_cast<int>(p.outcomes.size()) != p.rounds)
    complain("policy: alphabet lists must have one entry per round");
  if (!out.empty()) return out;
  for (int k = 0; k < p.rounds; ++k)
    if (p.settings[k] < 1 || p.outcomes[k] < 1) complain("policy: empty alphabet in round");
  if (!p.split.empty()) {
    if (static_cast<int>(p.split.size()) != p.rounds) {
      complain("policy: split must cover every round");
    } else {
      for (int k = 0; k < p.rounds; ++k) {
        const auto& sp = p.split[k];
        if (static_cast<long>(sp.sx) * sp.sy != p.settings[k] ||
            static_cast<long>(sp.oa) * sp.ob != p.outcomes[k])
          complain("policy: split does not factor the joint alphabets");
      }
    }
  }
  if (p.one_way && p.split.empty()) complain("policy: one-way refinement needs a split");
  if (static_cast<long>(p.table.size()) != p.table_size())
    complain("policy: table size does not match alphabets");
  if (!out.empty()) return out;
  double neg = 0;
  for (double v : p.table) neg = std::min(neg, v);
  if (neg < -1e-9) complain("policy: negative probability " + std::to_string(neg));
  const auto st = detail::policy_chain_stats(p);
  if (st.signalling > 1e-9)
    complain("policy: settings signal future outcomes by " + std::to_string(st.signalling));
  if (std::abs(st.total - 1.0) > 1e-9)
    complain("policy: total probability " + std::to_string(st.total));
  return out;
}

inline void validate_policy_or_throw(const DemonPolicy& p) {
  auto r = validate_policy(p);
  if (!r.empty()) throw ValidationError(r.front());
}

// A policy decomposed into its operational pieces: per round a setting
// kernel conditioned on the transcript so far, and a final verdict kernel
// per full transcript.  Multiplying the kernels along a transcript
// reproduces the joint table.
struct PolicyComponents {
  // kernels[k][prefix][x]: probability of setting x in round k+1 after the
  // transcript prefix (settings and outcomes of rounds 1..k)
  std::vector<std::vector<std::vector<double>>> kernels;
  // verdict[t][gamma]: verdict distribution after full transcript t
  std::vector<std::vector<double>> verdict;
};

// Splits a non-signalling policy into conditional kernels via marginal
// ratios.  Zero-probability transcripts get uniform kernels.  Policies
// using the one-way refinement are rejected: their second-party setting
// kernel is not a function of the between-round transcript alone.
inline PolicyComponents extract_policy_components(const DemonPolicy& p) {
  validate_policy_or_throw(p);
  if (p.one_way)
    throw ValidationError(
        "extract_policy_components: one-way policies do not factor over between-round "
        "transcripts");
  PolicyComponents out;
  const long t_all = p.transcripts();
  out.verdict.resize(t_all);
  std::vector<double> cur(t_all, 0.0);
  for (long t = 0; t < t_all; ++t) {
    double s = 0;
    out.verdict[t].resize(p.verdicts);
    for (int g = 0; g < p.verdicts; ++g) {
      out.verdict[t][g] = p.table[t * p.verdicts + g];
      s += out.verdict[t][g];
    }
    for (int g = 0; g < p.verdicts; ++g)
      out.verdict[t][g] = s > 1e-12 ? std::max(out.verdict[t][g], 0.0) / s : 1.0 / p.verdicts;
    cur[t] = s;
  }
  out.kernels.resize(p.rounds);
  for (int k = p.rounds - 1; k >= 0; --k) {
    const long rec = p.records(k);
    const long pref = static_cast<long>(cur.size()) / rec;
    std::vector<double> nxt(pref, 0.0);
    out.kernels[k].assign(pref, std::vector<double>(p.settings[k], 0.0));
    for (long pf = 0; pf < pref; ++pf) {
      double mass = 0;
      for (long s = 0; s < p.settings[k]; ++s) {
        double acc = 0;
        for (int o = 0; o < p.outcomes[k]; ++o) acc += cur[pf * rec + s * p.outcomes[k] + o];
        acc /= p.outcomes[k];  // outcome-independent by non-signalling
        out.kernels[k][pf][s] = acc;
        mass += acc;
      }
      for (long s = 0; s < p.settings[k]; ++s)
        out.kernels[k][pf][s] = mass > 1e-12 ? std::max(out.kernels[k][pf][s], 0.0) / mass
                                             : 1.0 / p.settings[k];
      nxt[pf] = mass;
    }
    cur = std::move(nxt);
  }
  return out;
}

// ------------------------------------------------------------------
// Design results
// ------------------------------------------------------------------

// A designed protocol: the two error rates, the protocol as a playable
// game, the classical policy when the measurement class is local, and the
// dual certificate (per-configuration score caps `nu`, per-transcript
// acceptance masses `xi`) that proves the type-I bound.
struct DesignResult {
  double e1 = 0.0;  // type-I error: worst acceptance probability over the null model
  double e2 = 0.0;  // type-II error: worst rejection probability over the targets
  PreparationGame game;
  std::optional<DemonPolicy> policy;
  std::vector<std::vector<double>> nu;  // nu[k][i]: cap for round-(k+1) configuration i
  std::vector<double> xi;               // acceptance mass per final transcript
};

// ------------------------------------------------------------------
// Shared SDP building blocks
// ------------------------------------------------------------------

namespace detail {

inline long ipow_checked(long base, int exp, long cap, const char* what) {
  long r = 1;
  for (int i = 0; i < exp; ++i) {
    r *= base;
    if (r > cap)
      throw ValidationError(std::string(what) + ": " + std::to_string(base) + "^" +
                            std::to_string(exp) + " transcripts exceed the cap of " +
                            std::to_string(cap));
  }
  return r;
}

inline long ipow(long base, int exp) {
  long r = 1;
  while (exp-- > 0) r *= base;
  return r;
}

inline void add_nonneg(sdp::SdpProblem& p, int var) { p.add_linear_ge(0.0, {{var, 1.0}}); }

// POVM variables for one round-configuration, constrained to the class.
struct ClassPovm {
  std::vector<sdp::AffineHermitian> elements;  // one expression per outcome
  std::vector<int> dist;   // local kinds: flattened P(x, y, o | a, b) variables
  std::vector<int> chain;  // LocalPauli: joint setting weights Q(x, y);
                           // OneWayLpcc: first-party setting weights q(x)
  std::vector<int> relay;  // OneWayLpcc: conditional weights T(x, y, a)
};

// Emits variables and constraints for an m-outcome measurement from the
// class.  Global: explicit PSD elements summing to the identity.  Local
// kinds: a distribution P(x, y, o | a, b) over settings, verdict-outcome
// and local outcomes, nonnegative, whose setting marginal must not depend
// on the local outcomes (jointly for LocalPauli; for OneWayLpcc the second
// party's setting may depend on the first party's setting and outcome).
// The measurement elements are sums of local projector products weighted
// by P.  A single-outcome measurement is the identity, preserving
// absorbing configurations.
inline ClassPovm add_class_povm(sdp::SdpProblem& p, const MeasurementClass& cls, int m, int d) {
  if (m < 1) throw ValidationError("class POVM: need at least one outcome");
  ClassPovm out;
  if (m == 1) {
    out.elements.push_back(sdp::AffineHermitian::constant(Mat::Identity(d, d)));
    return out;
  }
  if (cls.kind == MeasKind::GlobalPovm) {
    sdp::AffineHermitian last = sdp::AffineHermitian::constant(Mat::Identity(d, d));
    for (int o = 0; o + 1 < m; ++o) {
      auto v = sdp::add_hermitian_var(p, d);
      auto e = v.expr();
      sdp::add_psd(p, e);
      last -= e;
      out.elements.push_back(std::move(e));
    }
    sdp::add_psd(p, last);
    out.elements.push_back(std::move(last));
    return out;
  }
  if (d != 4)
    throw ValidationError("class POVM: local measurement classes act on two qubits");
  const int sx = cls.settings_a(), sy = cls.settings_b();
  const int nv = sx * sy * m * 4;
  const int base = p.add_vars(nv);
  auto pv = [&](int x, int y, int o, int a, int b) {
    return base + (((x * sy + y) * m + o) * 2 + a) * 2 + b;
  };
  out.dist.resize(nv);
  for (int i = 0; i < nv; ++i) {
    out.dist[i] = base + i;
    add_nonneg(p, base + i);
  }
  out.elements.assign(m, sdp::AffineHermitian::zero(d));
  for (int x = 0; x < sx; ++x)
    for (int y = 0; y < sy; ++y)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const Mat op = kron(cls.alice[x][a], cls.bob[y][b]);
          for (int o = 0; o < m; ++o)
            out.elements[o] += sdp::AffineHermitian::scaled_var(pv(x, y, o, a, b), op);
        }
  if (cls.kind == MeasKind::LocalPauli) {
    const int qbase = p.add_vars(sx * sy);
    std::vector<std::pair<int, double>> norm;
    for (int x = 0; x < sx; ++x)
      for (int y = 0; y < sy; ++y) {
        const int q = qbase + x * sy + y;
        out.chain.push_back(q);
        norm.push_back({q, 1.0});
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b) {
            std::vector<std::pair<int, double>> row{{q, -1.0}};
            for (int o = 0; o < m; ++o) row.push_back({pv(x, y, o, a, b), 1.0});
            p.add_equality(std::move(row), 0.0);
          }
      }
    p.add_equality(std::move(norm), 1.0);
  } else {  // OneWayLpcc
    const int qbase = p.add_vars(sx);
    const int tbase = p.add_vars(sx * sy * 2);
    auto tv = [&](int x, int y, int a) { return tbase + (x * sy + y) * 2 + a; };
    std::vector<std::pair<int, double>> norm;
    for (int x = 0; x < sx; ++x) {
      out.chain.push_back(qbase + x);
      norm.push_back({qbase + x, 1.0});
      for (int a = 0; a < 2; ++a) {
        std::vector<std::pair<int, double>> row{{qbase + x, -1.0}};
        for (int y = 0; y < sy; ++y) {
          row.push_back({tv(x, y, a), 1.0});
          for (int b = 0; b < 2; ++b) {
            std::vector<std::pair<int, double>> sub{{tv(x, y, a), -1.0}};
            for (int o = 0; o < m; ++o) sub.push_back({pv(x, y, o, a, b), 1.0});
            p.add_equality(std::move(sub), 0.0);
          }
        }
        p.add_equality(std::move(row), 0.0);
      }
    }
    for (int x = 0; x < sx; ++x)
      for (int y = 0; y < sy; ++y)
        for (int a = 0; a < 2; ++a) out.relay.push_back(tv(x, y, a));
    p.add_equality(std::move(norm), 1.0);
  }
  return out;
}

// Clips solver output to an exact POVM: project each element onto the PSD
// cone, then conjugate by the inverse square root of their sum so the
// elements add to the identity exactly.
inline std::vector<Mat> sanitize_povm(std::vector<Mat> els) {
  const int d = static_cast<int>(els[0].rows());
  Mat sum = Mat::Zero(d, d);
  for (auto& e : els) {
    auto eg = eig_hermitian(hermitize(e, 1.0));
    Mat acc = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i)
      if (eg.values(i) > 0) acc += eg.values(i) * eg.vectors.col(i) * eg.vectors.col(i).adjoint();
    e = acc;
    sum += acc;
  }
  auto es = eig_hermitian(hermitize(sum, 1.0));
  if (es.values(0) < 0.2)
    throw SolverError("sanitize_povm: element sum is far from the identity");
  Mat isqrt = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    isqrt += (1.0 / std::sqrt(es.values(i))) * es.vectors.col(i) * es.vectors.col(i).adjoint();
  for (auto& e : els) e = hermitize(isqrt * e * isqrt, 1.0);
  // round the sum onto the identity exactly
  Mat resid = Mat::Identity(d, d);
  for (size_t i = 0; i + 1 < els.size(); ++i) resid -= els[i];
  els.back() = resid;
  return els;
}

// Renormalizes a nonnegative slice into a conditional distribution,
// falling back to uniform when the slice carries no mass.
inline void normalize_slice(std::vector<double>& w) {
  double s = 0;
  for (double& v : w) {
    v = std::max(v, 0.0);
    s += v;
  }
  if (s > 1e-12)
    for (double& v : w) v /= s;
  else
    for (double& v : w) v = 1.0 / static_cast<double>(w.size());
}

inline double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace detail

// ------------------------------------------------------------------
// One-shot design
// ------------------------------------------------------------------

namespace detail {

// Shared core for the one-shot designers.  Minimizes the worst rejection
// probability of the targets (plus the type-I budget when it is a
// variable) over verdict measurements from the class, subject to the
// acceptance operator scoring at most e1 on every state of the null model
// (enforced through the dual cone of `c_dual`).  The type-II side is
// either a list of target states or a trace-distance ball.
inline DesignResult oneshot_core(const std::vector<DensityMatrix>& targets,
                                 std::optional<double> e1_fixed, const MeasurementClass& cls,
                                 const StateSet& c_dual,
                                 const std::optional<std::pair<DensityMatrix, double>>& ball,
                                 double solver_tol) {
  std::vector<int> dims;
  if (ball)
    dims = ball->first.dims;
  else if (!targets.empty())
    dims = targets[0].dims;
  else
    throw ValidationError("design: need at least one target state");
  int d = 1;
  for (int v : dims) d *= v;
  for (const auto& t : targets)
    if (t.matrix.rows() != d) throw ValidationError("design: target dimension mismatch");
  if (c_dual.dim() != d)
    throw ValidationError("design: null-model state set dimension mismatch");
  if (e1_fixed && (*e1_fixed < 0.0 || *e1_fixed > 1.0))
    throw ValidationError("design: type-I budget must lie in [0, 1]");

  sdp::SdpProblem p;
  const int e2v = p.add_var(1.0);
  int e1v = -1;
  if (!e1_fixed) e1v = p.add_var(1.0);
  auto povm = add_class_povm(p, cls, 2, d);
  const auto& accept = povm.elements[1];
  const auto& reject = povm.elements[0];

  // type-I: e1 * I - (accept element) must score <= 0 ... >= on the null
  // model; membership in the dual cone certifies it for every null state
  sdp::AffineHermitian cap =
      e1_fixed ? sdp::AffineHermitian::constant(*e1_fixed * Mat::Identity(d, d))
               : sdp::AffineHermitian::scaled_var(e1v, Mat::Identity(d, d));
  cap -= accept;
  emit_dual_constraint(p, cap, c_dual);

  // type-II: rejection probability of each target at most e2
  if (ball) {
    sdp::AffineHermitian slack =
        sdp::AffineHermitian::scaled_var(e2v, Mat::Identity(d, d)) - reject;
    emit_dual_constraint(p, slack, make_eps_ball(ball->first, ball->second));
  } else {
    for (const auto& t : targets) {
      auto [c0, row] = sdp::trace_against(reject, t.matrix);
      for (auto& [v, a] : row) a = -a;
      row.push_back({e2v, 1.0});
      p.add_linear_ge(-c0, row);
    }
  }
  if (e1v >= 0) {
    add_nonneg(p, e1v);
    p.add_linear_ge(1.0, {{e1v, -1.0}});
  }
  p.add_linear_ge(1.0, {{e2v, -1.0}});
  add_nonneg(p, e2v);

  auto sol = solve_or_throw(p, solver_tol);

  DesignResult out;
  out.e2 = sol.x(e2v);
  out.e1 = e1_fixed ? *e1_fixed : sol.x(e1v);
  auto els = sanitize_povm({reject.value(sol.x), accept.value(sol.x)});
  PreparationGame g;
  g.dims = dims;
  g.configs = {{"start"}, {"0", "1"}};
  g.povms = {{Povm(els, {"0", "1"})}};
  g.score = {{"0", 0.0}, {"1", 1.0}};
  validate_or_throw(g);
  out.game = std::move(g);
  out.nu = {{out.e1}};

  if (cls.local()) {
    const int sx = cls.settings_a(), sy = cls.settings_b();
    DemonPolicy pol;
    pol.rounds = 1;
    pol.verdicts = 2;
    pol.settings = {sx * sy};
    pol.outcomes = {4};
    pol.split = {{sx, sy, 2, 2}};
    pol.one_way = cls.kind == MeasKind::OneWayLpcc;
    pol.table.assign(pol.table_size(), 0.0);
    auto pval = [&](int x, int y, int o, int a, int b) {
      return sol.x(povm.dist[(((x * sy + y) * 2 + o) * 2 + a) * 2 + b]);
    };
    // re-assemble in exact product form so the published policy satisfies
    // the no-signalling chain to machine precision
    std::vector<double> qx;
    if (cls.kind == MeasKind::LocalPauli) {
      std::vector<double> q(sx * sy);
      for (int i = 0; i < sx * sy; ++i) q[i] = sol.x(povm.chain[i]);
      normalize_slice(q);
      for (int x = 0; x < sx; ++x)
        for (int y = 0; y < sy; ++y)
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              std::vector<double> gam{pval(x, y, 0, a, b), pval(x, y, 1, a, b)};
              normalize_slice(gam);
              for (int g2 = 0; g2 < 2; ++g2)
                pol.table[pol.index({x * sy + y}, {a * 2 + b}, g2)] = q[x * sy + y] * gam[g2];
            }
    } else {
      std::vector<double> q(sx);
      for (int x = 0; x < sx; ++x) q[x] = sol.x(povm.chain[x]);
      normalize_slice(q);
      for (int x = 0; x < sx; ++x)
        for (int a = 0; a < 2; ++a) {
          std::vector<double> t(sy);
          for (int y = 0; y < sy; ++y) t[y] = sol.x(povm.relay[(x * sy + y) * 2 + a]);
          normalize_slice(t);
          for (int y = 0; y < sy; ++y)
            for (int b = 0; b < 2; ++b) {
              std::vector<double> gam{pval(x, y, 0, a, b), pval(x, y, 1, a, b)};
              normalize_slice(gam);
              for (int g2 = 0; g2 < 2; ++g2)
                pol.table[pol.index({x * sy + y}, {a * 2 + b}, g2)] = q[x] * t[y] * gam[g2];
            }
        }
    }
    out.policy = std::move(pol);
    out.xi.resize(sx * sy * 4);
    for (int x = 0; x < sx; ++x)
      for (int y = 0; y < sy; ++y)
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            out.xi[(x * sy + y) * 4 + a * 2 + b] = std::max(pval(x, y, 1, a, b), 0.0);
  }
  return out;
}

}  // namespace detail

// Designs a single-measurement protocol: the verdict measurement from the
// class that minimizes the worst rejection probability of the target
// states while accepting every state of the null model with probability at
// most e1 (certified through the dual cone of c_dual).
inline DesignResult design_oneshot(const std::vector<DensityMatrix>& targets, double e1,
                                   const MeasurementClass& cls, const StateSet& c_dual,
                                   double solver_tol = 1e-9) {
  return detail::oneshot_core(targets, e1, cls, c_dual, std::nullopt, solver_tol);
}

// Same, but minimizes the sum of both error rates over the budget as well.
inline DesignResult design_oneshot_min_total(const std::vector<DensityMatrix>& targets,
                                             const MeasurementClass& cls, const StateSet& c_dual,
                                             double solver_tol = 1e-9) {
  return detail::oneshot_core(targets, std::nullopt, cls, c_dual, std::nullopt, solver_tol);
}

// One-shot design against every state within trace distance eps of the
// target: the type-II bound holds uniformly over the ball.
inline DesignResult design_oneshot_eps(const DensityMatrix& target, double eps, double e1,
                                       const MeasurementClass& cls, const StateSet& c_dual,
                                       double solver_tol = 1e-9) {
  if (eps < 0.0 || eps > 2.0)
    throw ValidationError("design: trace-distance radius must lie in [0, 2]");
  if (eps <= 1e-12) return detail::oneshot_core({target}, e1, cls, c_dual, std::nullopt, solver_tol);
  return detail::oneshot_core({}, e1, cls, c_dual, std::make_pair(target, eps), solver_tol);
}

// ------------------------------------------------------------------
// Multi-round design over local measurement classes
// ------------------------------------------------------------------

struct DemonOptions {
  bool adaptive = true;       // false: settings drawn from one joint distribution up front
  long transcript_cap = 4000; // refuse designs whose transcript count exceeds this
  double solver_tol = 1e-9;
};

namespace detail {

// Multi-round design over a local measurement class as one SDP.  The
// variables are the transcript-level acceptance masses xi(t) together with
// the no-signalling marginal chain of the policy; the type-I bound is
// certified by an operator tower: per round-k transcript prefix s a scalar
// nu_k(s) with
//     nu_k(s) * I - sum_{record r} nu_{k+1}(s, r) * N_r  in the dual cone,
// where N_r is the local projector product of record r and the bottom
// level uses xi itself; nu at the root is then an upper bound on the
// acceptance probability of any null-model player, and is capped by e1.
inline DesignResult demon_core(int n, const MeasurementClass& cls,
                               const std::vector<DensityMatrix>& targets,
                               std::optional<double> e1_fixed, const StateSet& c_dual,
                               const DemonOptions& opt) {
  if (n < 1) throw ValidationError("design: need at least one round");
  if (!cls.local())
    throw ValidationError("design: multi-round design needs a local measurement class");
  if (!opt.adaptive && cls.kind != MeasKind::LocalPauli)
    throw ValidationError("design: the non-adaptive baseline is defined for the class without "
                          "in-round communication");
  if (targets.empty()) throw ValidationError("design: need at least one target state");
  const std::vector<int> dims = targets[0].dims;
  int d = 1;
  for (int v : dims) d *= v;
  if (d != 4) throw ValidationError("design: local classes act on two qubits");
  for (const auto& t : targets)
    if (t.matrix.rows() != d) throw ValidationError("design: target dimension mismatch");
  if (c_dual.dim() != d)
    throw ValidationError("design: null-model state set dimension mismatch");
  if (e1_fixed && (*e1_fixed < 0.0 || *e1_fixed > 1.0))
    throw ValidationError("design: type-I budget must lie in [0, 1]");

  const int sx = cls.settings_a(), sy = cls.settings_b();
  const int ns = sx * sy, no = 4;
  const long R = static_cast<long>(ns) * no;
  const long T = ipow_checked(R, n, opt.transcript_cap, "design");

  // record r = s * 4 + o with s = x * sy + y, o = a * 2 + b
  std::vector<Mat> rec_op(R);
  for (int x = 0; x < sx; ++x)
    for (int y = 0; y < sy; ++y)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
          rec_op[(x * sy + y) * no + a * 2 + b] = kron(cls.alice[x][a], cls.bob[y][b]);

  sdp::SdpProblem p;
  const int e2v = p.add_var(1.0);
  int e1v = -1;
  if (!e1_fixed) e1v = p.add_var(1.0);
  const int xi0 = p.add_vars(static_cast<int>(T));
  for (long t = 0; t < T; ++t) add_nonneg(p, xi0 + static_cast<int>(t));

  // --- no-signalling marginal chain, and xi below its top level
  const bool m2 = cls.kind == MeasKind::OneWayLpcc;
  std::vector<int> w_base(n), u_base(n), v_base(n), q_base;
  if (!opt.adaptive) {
    const int nq = static_cast<int>(ipow(ns, n));
    q_base.push_back(p.add_vars(nq));
    std::vector<std::pair<int, double>> norm;
    for (int i = 0; i < nq; ++i) {
      add_nonneg(p, q_base[0] + i);
      norm.push_back({q_base[0] + i, 1.0});
    }
    p.add_equality(std::move(norm), 1.0);
    // marginal consistency is automatic: the per-round weights used below
    // are partial sums of the same joint distribution
    for (long t = 0; t < T; ++t) {
      long sidx = 0, tt = t;
      std::vector<int> srec(n);
      for (int k = n - 1; k >= 0; --k) {
        srec[k] = static_cast<int>((tt % R) / no);
        tt /= R;
      }
      for (int k = 0; k < n; ++k) sidx = sidx * ns + srec[k];
      p.add_linear_ge(0.0, {{q_base[0] + static_cast<int>(sidx), 1.0},
                            {xi0 + static_cast<int>(t), -1.0}});
    }
  } else if (!m2) {
    for (int k = 0; k < n; ++k) {
      const long pref = ipow(R, k);
      w_base[k] = p.add_vars(static_cast<int>(pref * ns));
      for (long pf = 0; pf < pref; ++pf) {
        std::vector<std::pair<int, double>> row;
        for (int s = 0; s < ns; ++s) {
          const int wv = w_base[k] + static_cast<int>(pf * ns + s);
          add_nonneg(p, wv);
          row.push_back({wv, 1.0});
        }
        if (k == 0) {
          p.add_equality(std::move(row), 1.0);
        } else {
          const long pp = pf / R, rec = pf % R;
          row.push_back({w_base[k - 1] + static_cast<int>(pp * ns + rec / no), -1.0});
          p.add_equality(std::move(row), 0.0);
        }
      }
    }
    for (long t = 0; t < T; ++t)
      p.add_linear_ge(0.0, {{w_base[n - 1] + static_cast<int>((t / R) * ns + (t % R) / no), 1.0},
                            {xi0 + static_cast<int>(t), -1.0}});
  } else {
    for (int k = 0; k < n; ++k) {
      const long pref = ipow(R, k);
      u_base[k] = p.add_vars(static_cast<int>(pref * sx));
      v_base[k] = p.add_vars(static_cast<int>(pref * sx * 2 * sy));
      for (long pf = 0; pf < pref; ++pf) {
        std::vector<std::pair<int, double>> urow;
        for (int x = 0; x < sx; ++x) {
          const int uv = u_base[k] + static_cast<int>(pf * sx + x);
          add_nonneg(p, uv);
          urow.push_back({uv, 1.0});
          for (int a = 0; a < 2; ++a) {
            std::vector<std::pair<int, double>> vrow{{uv, -1.0}};
            for (int y = 0; y < sy; ++y) {
              const int vv = v_base[k] + static_cast<int>(((pf * sx + x) * 2 + a) * sy + y);
              add_nonneg(p, vv);
              vrow.push_back({vv, 1.0});
            }
            p.add_equality(std::move(vrow), 0.0);
          }
        }
        if (k == 0) {
          p.add_equality(std::move(urow), 1.0);
        } else {
          const long pp = pf / R, rec = pf % R;
          const int xprev = static_cast<int>(rec / no) / sy, yprev = static_cast<int>(rec / no) % sy;
          const int aprev = static_cast<int>(rec % no) / 2;
          urow.push_back({v_base[k - 1] +
                              static_cast<int>(((pp * sx + xprev) * 2 + aprev) * sy + yprev),
                          -1.0});
          p.add_equality(std::move(urow), 0.0);
        }
      }
    }
    for (long t = 0; t < T; ++t) {
      const long pf = t / R, rec = t % R;
      const int x = static_cast<int>(rec / no) / sy, y = static_cast<int>(rec / no) % sy;
      const int a = static_cast<int>(rec % no) / 2;
      p.add_linear_ge(0.0,
                      {{v_base[n - 1] + static_cast<int>(((pf * sx + x) * 2 + a) * sy + y), 1.0},
                       {xi0 + static_cast<int>(t), -1.0}});
    }
  }

  // --- type-II rows: acceptance probability of each target at least 1 - e2
  for (const auto& tgt : targets) {
    std::vector<double> tr(R);
    for (long r = 0; r < R; ++r) tr[r] = (rec_op[r] * tgt.matrix).trace().real();
    std::vector<std::pair<int, double>> row{{e2v, 1.0}};
    for (long t = 0; t < T; ++t) {
      double c = 1.0;
      long tt = t;
      for (int k = 0; k < n; ++k) {
        c *= tr[tt % R];
        tt /= R;
      }
      row.push_back({xi0 + static_cast<int>(t), c});
    }
    p.add_linear_ge(-1.0, row);
  }

  // --- dual tower certifying the type-I bound
  std::vector<int> nu_base(n);
  for (int k = 0; k < n; ++k) nu_base[k] = p.add_vars(static_cast<int>(ipow(R, k)));
  for (int k = 0; k < n; ++k) {
    const long pref = ipow(R, k);
    for (long pf = 0; pf < pref; ++pf) {
      sdp::AffineHermitian e =
          sdp::AffineHermitian::scaled_var(nu_base[k] + static_cast<int>(pf), Mat::Identity(d, d));
      for (long r = 0; r < R; ++r) {
        const int child = (k + 1 < n ? nu_base[k + 1] : xi0) + static_cast<int>(pf * R + r);
        e -= sdp::AffineHermitian::scaled_var(child, rec_op[r]);
      }
      emit_dual_constraint(p, e, c_dual);
    }
  }
  if (e1_fixed) {
    p.add_linear_ge(*e1_fixed, {{nu_base[0], -1.0}});
  } else {
    p.add_linear_ge(0.0, {{e1v, 1.0}, {nu_base[0], -1.0}});
    add_nonneg(p, e1v);
  }
  add_nonneg(p, e2v);
  p.add_linear_ge(1.0, {{e2v, -1.0}});

  auto sol = solve_or_throw(p, opt.solver_tol);

  // --- read out the chain, renormalize into conditional kernels, and
  // assemble the game and policy in exact product form
  DesignResult out;
  out.e2 = sol.x(e2v);
  out.e1 = e1_fixed ? *e1_fixed : sol.x(e1v);
  out.xi.resize(T);
  for (long t = 0; t < T; ++t) out.xi[t] = std::max(sol.x(xi0 + static_cast<int>(t)), 0.0);
  out.nu.resize(n);
  for (int k = 0; k < n; ++k) {
    const long pref = ipow(R, k);
    out.nu[k].resize(pref);
    for (long pf = 0; pf < pref; ++pf) out.nu[k][pf] = sol.x(nu_base[k] + static_cast<int>(pf));
  }

  // settings-only marginals of the non-adaptive joint distribution
  std::vector<std::vector<double>> qmarg;
  if (!opt.adaptive) {
    qmarg.resize(n + 1);
    qmarg[n].resize(ipow(ns, n));
    for (long i = 0; i < static_cast<long>(qmarg[n].size()); ++i)
      qmarg[n][i] = std::max(sol.x(q_base[0] + static_cast<int>(i)), 0.0);
    for (int k = n - 1; k >= 0; --k) {
      qmarg[k].assign(ipow(ns, k), 0.0);
      for (long i = 0; i < static_cast<long>(qmarg[k].size()); ++i)
        for (int s = 0; s < ns; ++s) qmarg[k][i] += qmarg[k + 1][i * ns + s];
    }
  }

  // per-prefix setting kernels (product form); for the one-way class the
  // kernel factors as q(x) * t(y | x, a)
  auto setting_kernel = [&](int k, long pf) {
    std::vector<double> w(ns);
    if (!opt.adaptive) {
      long sidx = 0, tt = pf;
      std::vector<int> srec(k);
      for (int j = k - 1; j >= 0; --j) {
        srec[j] = static_cast<int>((tt % R) / no);
        tt /= R;
      }
      for (int j = 0; j < k; ++j) sidx = sidx * ns + srec[j];
      for (int s = 0; s < ns; ++s) w[s] = qmarg[k + 1][sidx * ns + s];
    } else if (!m2) {
      for (int s = 0; s < ns; ++s) w[s] = sol.x(w_base[k] + static_cast<int>(pf * ns + s));
    }
    normalize_slice(w);
    return w;
  };
  auto oneway_kernel = [&](int k, long pf) {
    // returns q[x] and t[(x, a)][y]
    std::vector<double> q(sx);
    for (int x = 0; x < sx; ++x) q[x] = sol.x(u_base[k] + static_cast<int>(pf * sx + x));
    normalize_slice(q);
    std::vector<std::vector<double>> t(sx * 2, std::vector<double>(sy));
    for (int x = 0; x < sx; ++x)
      for (int a = 0; a < 2; ++a) {
        for (int y = 0; y < sy; ++y)
          t[x * 2 + a][y] = sol.x(v_base[k] + static_cast<int>(((pf * sx + x) * 2 + a) * sy + y));
        normalize_slice(t[x * 2 + a]);
      }
    return std::make_pair(q, t);
  };
  auto top_mass = [&](long t) {
    const long pf = t / R, rec = t % R;
    if (!opt.adaptive) {
      long sidx = 0, tt = t;
      std::vector<int> srec(n);
      for (int j = n - 1; j >= 0; --j) {
        srec[j] = static_cast<int>((tt % R) / no);
        tt /= R;
      }
      for (int j = 0; j < n; ++j) sidx = sidx * ns + srec[j];
      return qmarg[n][sidx];
    }
    if (!m2) return std::max(sol.x(w_base[n - 1] + static_cast<int>(pf * ns + rec / no)), 0.0);
    const int x = static_cast<int>(rec / no) / sy, y = static_cast<int>(rec / no) % sy;
    const int a = static_cast<int>(rec % no) / 2;
    return std::max(sol.x(v_base[n - 1] + static_cast<int>(((pf * sx + x) * 2 + a) * sy + y)),
                    0.0);
  };

  auto rec_label = [&](long r) {
    const int s = static_cast<int>(r / no), o = static_cast<int>(r % no);
    return "x" + std::to_string(s / sy) + "y" + std::to_string(s % sy) + "a" +
           std::to_string(o / 2) + "b" + std::to_string(o % 2);
  };

  PreparationGame g;
  g.dims = dims;
  g.configs.resize(n + 1);
  g.configs[0] = {"start"};
  g.povms.resize(n);
  std::vector<std::string> labels(R);
  for (long r = 0; r < R; ++r) labels[r] = rec_label(r);
  for (int k = 0; k < n; ++k) {
    const long pref = ipow(R, k);
    g.configs[k + 1].resize(pref * R);
    g.povms[k].reserve(pref);
    for (long pf = 0; pf < pref; ++pf) {
      std::vector<double> weight(R);
      if (opt.adaptive && m2) {
        auto [q, t] = oneway_kernel(k, pf);
        for (long r = 0; r < R; ++r) {
          const int x = static_cast<int>(r / no) / sy, y = static_cast<int>(r / no) % sy;
          const int a = static_cast<int>(r % no) / 2;
          weight[r] = q[x] * t[x * 2 + a][y];
        }
      } else {
        auto w = setting_kernel(k, pf);
        for (long r = 0; r < R; ++r) weight[r] = w[r / no];
      }
      std::vector<Mat> els(R);
      for (long r = 0; r < R; ++r) els[r] = weight[r] * rec_op[r];
      std::vector<std::string> succ(R);
      const std::string base_label = k == 0 ? "" : g.configs[k][pf] + ".";
      for (long r = 0; r < R; ++r) {
        succ[r] = base_label + labels[r];
        g.configs[k + 1][pf * R + r] = succ[r];
      }
      g.povms[k].push_back(Povm(els, succ));
    }
  }
  for (long t = 0; t < T; ++t) {
    const double mass = top_mass(t);
    g.score[g.configs[n][t]] = mass > 1e-10 ? clamp01(out.xi[t] / mass) : 0.0;
  }
  validate_or_throw(g);
  out.game = std::move(g);

  DemonPolicy pol;
  pol.rounds = n;
  pol.verdicts = 2;
  pol.settings.assign(n, ns);
  pol.outcomes.assign(n, no);
  pol.split.assign(n, {sx, sy, 2, 2});
  pol.one_way = opt.adaptive && m2;
  pol.table.assign(pol.table_size(), 0.0);
  for (long t = 0; t < T; ++t) {
    double mass = 1.0;
    long pf = 0;
    for (int k = 0; k < n; ++k) {
      const long r = (t / ipow(R, n - 1 - k)) % R;
      if (pol.one_way) {
        auto [q, tk] = oneway_kernel(k, pf);
        const int x = static_cast<int>(r / no) / sy, y = static_cast<int>(r / no) % sy;
        const int a = static_cast<int>(r % no) / 2;
        mass *= q[x] * tk[x * 2 + a][y];
      } else {
        mass *= setting_kernel(k, pf)[r / no];
      }
      pf = pf * R + r;
    }
    const double mt = top_mass(t);
    const double acc = mt > 1e-10 ? clamp01(out.xi[t] / mt) : 0.0;
    pol.table[t * 2 + 1] = mass * acc;
    pol.table[t * 2 + 0] = mass * (1.0 - acc);
  }
  out.policy = std::move(pol);
  return out;
}

}  // namespace detail

// Designs an n-round protocol over a local measurement class: per round
// both parties measure one qubit of a fresh state, settings chosen
// adaptively from all previous records (or, non-adaptively, drawn from one
// joint distribution fixed up front), and the final verdict depends on the
// full transcript.  Minimizes the worst rejection probability of the
// targets under an acceptance cap of e1 on the null model.
inline DesignResult design_demon(int rounds, const MeasurementClass& cls,
                                 const std::vector<DensityMatrix>& targets, double e1,
                                 const StateSet& c_dual, const DemonOptions& opt = {}) {
  return detail::demon_core(rounds, cls, targets, e1, c_dual, opt);
}

// Same, but minimizes the sum of both error rates.
inline DesignResult design_demon_min_total(int rounds, const MeasurementClass& cls,
                                           const std::vector<DensityMatrix>& targets,
                                           const StateSet& c_dual, const DemonOptions& opt = {}) {
  return detail::demon_core(rounds, cls, targets, std::nullopt, c_dual, opt);
}

// ------------------------------------------------------------------
// Single-round refinement of an existing game
// ------------------------------------------------------------------

// Cap on the constrained player's best expected score, enforced during
// round refinement through a dual tower over the given state set.
struct ScoreBound {
  StateSet set;
  double bound = 0.0;
};

// Objectives for round refinement: worst rejection probability over
// i.i.d. target states, or over every memory state of a finitely
// correlated target strategy.
struct IidTargets {
  std::vector<DensityMatrix> states;
};
struct FinCorrTarget {
  FinitelyCorrelatedStrategy strategy;
};
using RoundObjective = std::variant<IidTargets, FinCorrTarget>;

// Evaluates the objective on a concrete game by replaying it.
inline double round_objective_value(const PreparationGame& g, const RoundObjective& obj) {
  if (std::holds_alternative<IidTargets>(obj)) {
    const auto& ts = std::get<IidTargets>(obj).states;
    double worst = 0.0;
    for (const auto& t : ts) worst = std::max(worst, 1.0 - score_iid(g, t));
    return worst;
  }
  const auto& strat = std::get<FinCorrTarget>(obj).strategy;
  auto sc = score_fincorr(g, strat);
  return 1.0 - min_eigenvalue(sc.omega);
}

struct RoundOptions {
  double solver_tol = 1e-8;
};

struct RoundOptResult {
  PreparationGame game;
  double objective = 0.0;  // replayed objective of the returned game
  bool improved = false;   // false: solver output was not better, input kept
};

namespace detail {

// Reach probabilities of the round-k configurations for an i.i.d. player.
inline std::vector<double> iid_reach(const PreparationGame& g, const Mat& rho, int round) {
  std::vector<double> w{1.0};
  for (int k = 0; k < round; ++k) {
    const auto next = label_index(g.configs[k + 1]);
    std::vector<double> nw(g.configs[k + 1].size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
      const auto& m = g.povms[k][i];
      for (int o = 0; o < m.outcomes(); ++o)
        nw[next.at(m.labels[o])] += w[i] * (m.elements[o] * rho).trace().real();
    }
    w = std::move(nw);
  }
  return w;
}

// Expected continuation payoff from each round-`from` configuration for an
// i.i.d. player (from == rounds: the final payoffs).
inline std::vector<double> iid_continuation(const PreparationGame& g, const Mat& rho, int from) {
  const int n = g.rounds();
  std::vector<double> v(g.configs[n].size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = g.score.at(g.configs[n][i]);
  for (int k = n - 1; k >= from; --k) {
    const auto next = label_index(g.configs[k + 1]);
    std::vector<double> nv(g.configs[k].size(), 0.0);
    for (size_t i = 0; i < nv.size(); ++i) {
      const auto& m = g.povms[k][i];
      for (int o = 0; o < m.outcomes(); ++o)
        nv[i] += (m.elements[o] * rho).trace().real() * v[next.at(m.labels[o])];
    }
    v = std::move(nv);
  }
  return v;
}

inline sdp::AffineHermitian kron_const_var(const Mat& left, const sdp::AffineHermitian& right) {
  sdp::AffineHermitian out = sdp::AffineHermitian::constant(kron(left, right.c0));
  for (const auto& [v, c] : right.terms) out.terms.push_back({v, kron(left, c)});
  return out;
}

inline sdp::AffineHermitian kron_var_const(const sdp::AffineHermitian& left, const Mat& right) {
  sdp::AffineHermitian out = sdp::AffineHermitian::constant(kron(left.c0, right));
  for (const auto& [v, c] : left.terms) out.terms.push_back({v, kron(c, right)});
  return out;
}

inline sdp::AffineHermitian kraus_sandwich(const std::vector<Mat>& kraus,
                                           const sdp::AffineHermitian& joint) {
  const int de = static_cast<int>(kraus[0].cols());
  sdp::AffineHermitian out = sdp::AffineHermitian::zero(de);
  for (const auto& k : kraus) {
    out.c0 += k.adjoint() * joint.c0 * k;
  }
  std::map<int, Mat> acc;
  for (const auto& [v, c] : joint.terms) {
    Mat m = Mat::Zero(de, de);
    for (const auto& k : kraus) m += k.adjoint() * c * k;
    auto it = acc.find(v);
    if (it == acc.end())
      acc.emplace(v, std::move(m));
    else
      it->second += m;
  }
  for (auto& [v, m] : acc) out.terms.push_back({v, std::move(m)});
  return out;
}

}  // namespace detail

// Re-optimizes the measurements of one round (0-based) of an existing
// game, holding every other round fixed.  The round's measurements range
// over the class; each ScoreBound caps the best expected score of a player
// restricted to its state set (continuation values for later rounds are
// precomputed from the fixed measurements; the cap propagates through the
// optimized and earlier rounds as SDP variables).  The objective is the
// worst rejection probability of the targets; if the solver's output does
// not improve the replayed objective, the input game is returned.
inline RoundOptResult optimize_round(const PreparationGame& g, int round,
                                     const MeasurementClass& cls, const RoundObjective& obj,
                                     const std::vector<ScoreBound>& bounds,
                                     const RoundOptions& opt = {}) {
  validate_or_throw(g);
  const int n = g.rounds();
  if (round < 0 || round >= n) throw ValidationError("optimize_round: round out of range");
  const int d = g.dim();

  sdp::SdpProblem p;
  const int e2v = p.add_var(1.0);
  std::vector<detail::ClassPovm> pov;
  pov.reserve(g.configs[round].size());
  for (size_t i = 0; i < g.configs[round].size(); ++i)
    pov.push_back(detail::add_class_povm(p, cls, g.povms[round][i].outcomes(), d));

  const auto next = detail::label_index(g.configs[round + 1]);

  // --- objective
  if (std::holds_alternative<IidTargets>(obj)) {
    const auto& ts = std::get<IidTargets>(obj).states;
    if (ts.empty()) throw ValidationError("optimize_round: need at least one target state");
    for (const auto& t : ts) {
      if (t.matrix.rows() != d) throw ValidationError("optimize_round: target dimension mismatch");
      const auto reach = detail::iid_reach(g, t.matrix, round);
      const auto cont = detail::iid_continuation(g, t.matrix, round + 1);
      double c0 = -1.0;
      std::vector<std::pair<int, double>> row{{e2v, 1.0}};
      for (size_t i = 0; i < pov.size(); ++i) {
        if (reach[i] <= 0) continue;
        const auto& labels = g.povms[round][i].labels;
        for (size_t o = 0; o < pov[i].elements.size(); ++o) {
          const double scale = reach[i] * cont[next.at(labels[o])];
          if (scale == 0.0) continue;
          auto [ec, er] = sdp::trace_against(pov[i].elements[o], t.matrix);
          c0 += scale * ec;
          for (auto& [v, a] : er) row.push_back({v, scale * a});
        }
      }
      p.add_linear_ge(c0, row);
    }
  } else {
    const auto& strat = std::get<FinCorrTarget>(obj).strategy;
    const int de = strat.env_dim;
    if (strat.kraus[0].rows() != static_cast<long>(de) * d)
      throw ValidationError("optimize_round: strategy dimension mismatch");
    // constants above the optimized round, affine from there down
    std::vector<Mat> om(g.configs[n].size());
    for (size_t i = 0; i < om.size(); ++i)
      om[i] = g.score.at(g.configs[n][i]) * Mat::Identity(de, de);
    for (int k = n - 1; k > round; --k) {
      const auto nx = detail::label_index(g.configs[k + 1]);
      std::vector<Mat> nom(g.configs[k].size());
      for (size_t i = 0; i < nom.size(); ++i) {
        const auto& m = g.povms[k][i];
        Mat joint = Mat::Zero(de * d, de * d);
        for (int o = 0; o < m.outcomes(); ++o) joint += kron(om[nx.at(m.labels[o])], m.elements[o]);
        Mat acc = Mat::Zero(de, de);
        for (const auto& kr : strat.kraus) acc += kr.adjoint() * joint * kr;
        nom[i] = hermitize(acc, 1e-6);
      }
      om = std::move(nom);
    }
    std::vector<sdp::AffineHermitian> cur(pov.size(), sdp::AffineHermitian::zero(de));
    for (size_t i = 0; i < pov.size(); ++i) {
      sdp::AffineHermitian joint = sdp::AffineHermitian::zero(de * d);
      const auto& labels = g.povms[round][i].labels;
      for (size_t o = 0; o < pov[i].elements.size(); ++o)
        joint += detail::kron_const_var(om[next.at(labels[o])], pov[i].elements[o]);
      cur[i] = detail::kraus_sandwich(strat.kraus, joint);
    }
    for (int k = round - 1; k >= 0; --k) {
      const auto nx = detail::label_index(g.configs[k + 1]);
      std::vector<sdp::AffineHermitian> prev(g.configs[k].size(),
                                             sdp::AffineHermitian::zero(de));
      for (size_t i = 0; i < prev.size(); ++i) {
        const auto& m = g.povms[k][i];
        sdp::AffineHermitian joint = sdp::AffineHermitian::zero(de * d);
        for (int o = 0; o < m.outcomes(); ++o)
          joint += detail::kron_var_const(cur[nx.at(m.labels[o])], m.elements[o]);
        prev[i] = detail::kraus_sandwich(strat.kraus, joint);
      }
      cur = std::move(prev);
    }
    // acceptance operator at the root must dominate (1 - e2) I
    sdp::AffineHermitian root = cur[0];
    root += sdp::AffineHermitian::scaled_var(e2v, Mat::Identity(de, de));
    root -= sdp::AffineHermitian::constant(Mat::Identity(de, de));
    sdp::add_psd(p, root);
  }
  detail::add_nonneg(p, e2v);
  p.add_linear_ge(1.0, {{e2v, -1.0}});

  // --- score caps
  for (const auto& b : bounds) {
    if (b.set.dim() != d) throw ValidationError("optimize_round: bound state set dimension");
    const auto table = max_score_constrained(g, b.set, opt.solver_tol);
    std::vector<std::vector<int>> mu(round + 1);
    for (int k = 0; k <= round; ++k) mu[k].resize(g.configs[k].size());
    for (int k = 0; k <= round; ++k)
      for (size_t i = 0; i < mu[k].size(); ++i) mu[k][i] = p.add_var();
    for (int k = 0; k <= round; ++k) {
      const auto nx = detail::label_index(g.configs[k + 1]);
      for (size_t i = 0; i < mu[k].size(); ++i) {
        sdp::AffineHermitian e =
            sdp::AffineHermitian::scaled_var(mu[k][i], Mat::Identity(d, d));
        if (k < round) {
          const auto& m = g.povms[k][i];
          for (int o = 0; o < m.outcomes(); ++o)
            e -= sdp::AffineHermitian::scaled_var(mu[k + 1][nx.at(m.labels[o])], m.elements[o]);
        } else {
          const auto& labels = g.povms[round][i].labels;
          for (size_t o = 0; o < pov[i].elements.size(); ++o)
            e -= table.values[round + 1][nx.at(labels[o])].value * pov[i].elements[o];
        }
        emit_dual_constraint(p, e, b.set);
      }
    }
    p.add_linear_ge(b.bound, {{mu[0][0], -1.0}});
  }

  const double before = round_objective_value(g, obj);
  sdp::SdpSolution sol = detail::solve_or_throw(p, opt.solver_tol);

  PreparationGame outg = g;
  for (size_t i = 0; i < pov.size(); ++i) {
    std::vector<Mat> els(pov[i].elements.size());
    for (size_t o = 0; o < els.size(); ++o) els[o] = pov[i].elements[o].value(sol.x);
    outg.povms[round][i] = Povm(detail::sanitize_povm(els), g.povms[round][i].labels);
  }
  const double after = round_objective_value(outg, obj);
  if (after <= before + 1e-12) return {std::move(outg), after, after < before};
  return {g, before, false};
}

// ------------------------------------------------------------------
// Coordinate descent over rounds
// ------------------------------------------------------------------

struct DescentOptions {
  int iterations = 0;          // number of single-round refinements
  std::vector<int> schedule;   // round visited at each step; default round-robin
  RoundOptions round;
  bool keep_iterates = false;
};

struct DescentResult {
  PreparationGame game;        // best iterate
  double objective = 0.0;      // its replayed objective
  std::vector<double> trace;   // objective after each refinement
  std::vector<PreparationGame> iterates;  // after each refinement, when kept
  int skipped = 0;             // refinements skipped due to solver failures
};

// Refines one round at a time.  Each step solves the single-round
// problem with every other round fixed; the objective never increases
// along the trace because a step that fails to improve keeps its input.
inline DescentResult coordinate_descent(const PreparationGame& g0, const MeasurementClass& cls,
                                        const RoundObjective& obj,
                                        const std::vector<ScoreBound>& bounds,
                                        const DescentOptions& opt = {}) {
  validate_or_throw(g0);
  DescentResult out;
  out.game = g0;
  out.objective = round_objective_value(g0, obj);
  PreparationGame cur = g0;
  double cur_obj = out.objective;
  const int n = g0.rounds();
  for (int l = 0; l < opt.iterations; ++l) {
    const int k = opt.schedule.empty() ? l % n : opt.schedule[l % opt.schedule.size()];
    try {
      auto r = optimize_round(cur, k, cls, obj, bounds, opt.round);
      cur = std::move(r.game);
      cur_obj = r.objective;
    } catch (const SolverError&) {
      ++out.skipped;
    }
    out.trace.push_back(cur_obj);
    if (opt.keep_iterates) out.iterates.push_back(cur);
    if (cur_obj <= out.objective) {
      out.objective = cur_obj;
      out.game = cur;
    }
  }
  return out;
}

// ------------------------------------------------------------------
// Scaffolds and random starting points
// ------------------------------------------------------------------

// A branching game skeleton for descent: one start configuration,
// `branches` intermediate configurations per round, a binary verdict at
// the end.  Intermediate configuration "0" is absorbing (identity
// measurement), so a trajectory that falls into it exits early with
// verdict 0.  Measurements start as computational-basis splits; use
// randomize_measurements for varied starting points.
inline PreparationGame make_early_exit_game(int rounds, int branches, std::vector<int> dims) {
  if (rounds < 1) throw ValidationError("early-exit game: need at least one round");
  if (branches < 2) throw ValidationError("early-exit game: need at least two branches");
  int d = 1;
  for (int v : dims) d *= v;
  if (d < 2) throw ValidationError("early-exit game: dimension must be at least 2");
  auto split_base = [&](int m) {
    // m projective chunks of the computational basis (last chunk absorbs
    // the remainder), valid for any m >= 1
    std::vector<Mat> els(m, Mat::Zero(d, d));
    for (int i = 0; i < d; ++i) els[std::min(i, m - 1)](i, i) = 1.0;
    return els;
  };
  PreparationGame g;
  g.dims = std::move(dims);
  g.configs.resize(rounds + 1);
  g.configs[0] = {"start"};
  for (int k = 1; k < rounds; ++k) {
    g.configs[k].resize(branches);
    for (int i = 0; i < branches; ++i) g.configs[k][i] = std::to_string(i);
  }
  g.configs[rounds] = {"0", "1"};
  g.povms.resize(rounds);
  for (int k = 0; k < rounds; ++k) {
    const auto& from = g.configs[k];
    const auto& to = g.configs[k + 1];
    const int m = static_cast<int>(to.size());
    for (size_t i = 0; i < from.size(); ++i) {
      if (k > 0 && from[i] == "0") {
        g.povms[k].push_back(Povm({Mat::Identity(d, d)}, {"0"}));
      } else {
        g.povms[k].push_back(Povm(split_base(m), to));
      }
    }
  }
  g.score = {{"0", 0.0}, {"1", 1.0}};
  validate_or_throw(g);
  return g;
}

namespace detail {

inline Mat haar_unitary(int d, CounterRng& rng) {
  Mat z(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = Complex(rng.normal(), rng.normal());
  Eigen::HouseholderQR<Mat> qr(z);
  Mat q = qr.householderQ() * Mat::Identity(d, d);
  Mat r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int j = 0; j < d; ++j) {
    const Complex rj = r(j, j);
    q.col(j) *= std::abs(rj) > 1e-300 ? rj / std::abs(rj) : Complex(1.0, 0.0);
  }
  return q;
}

}  // namespace detail

// Conjugates every multi-outcome measurement of the game by an
// independent Haar-random unitary, giving a varied but valid starting
// point for descent.  Single-outcome (absorbing) measurements are left
// alone.  Deterministic in the seed.
inline PreparationGame randomize_measurements(const PreparationGame& g, std::uint64_t seed) {
  validate_or_throw(g);
  PreparationGame out = g;
  const int d = g.dim();
  std::uint64_t stream = 0;
  for (auto& row : out.povms)
    for (auto& m : row) {
      if (m.outcomes() < 2) continue;
      CounterRng rng(seed, stream++);
      const Mat u = detail::haar_unitary(d, rng);
      std::vector<Mat> els(m.elements.size());
      for (size_t o = 0; o < els.size(); ++o) els[o] = hermitize(u * m.elements[o] * u.adjoint(), 1e-9);
      m = Povm(detail::sanitize_povm(els), m.labels);
    }
  validate_or_throw(out);
  return out;
}

// Shrinks the final-round elements that feed the given verdict by alpha,
// absorbing the removed weight into the opposite verdict.  Any player's
// conditional verdict probability is then at most alpha, so the resulting
// game respects a type-I budget of alpha for every score cap; this makes
// randomized starting points feasible by construction.
inline PreparationGame damp_final_verdict(const PreparationGame& g, const std::string& verdict,
                                          double alpha) {
  validate_or_throw(g);
  if (alpha < 0.0 || alpha > 1.0)
    throw ValidationError("damp_final_verdict: scale must lie in [0, 1]");
  PreparationGame out = g;
  const int n = g.rounds();
  const int d = g.dim();
  for (auto& m : out.povms[n - 1]) {
    if (m.outcomes() == 1) {
      if (m.labels[0] == verdict)
        throw ValidationError("damp_final_verdict: absorbing configuration feeds the verdict");
      continue;
    }
    if (m.outcomes() != 2)
      throw ValidationError("damp_final_verdict: final round must be binary");
    const int keep = m.labels[0] == verdict ? 0 : 1;
    if (m.labels[keep] != verdict)
      throw ValidationError("damp_final_verdict: verdict label not found in final round");
    std::vector<Mat> els(2);
    els[keep] = alpha * m.elements[keep];
    els[1 - keep] = Mat::Identity(d, d) - els[keep];
    m = Povm(els, m.labels);
  }
  return out;
}

}  // namespace qprep
