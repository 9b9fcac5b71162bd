#pragma once

// Adaptive preparation games: a referee holds a configuration that evolves
// over n rounds.  Each round the player supplies a state, the referee
// measures it with a POVM selected by the current configuration, and the
// outcome label becomes the next configuration.  After round n the final
// configuration is scored.  This header provides the game description,
// expected-score evaluation for i.i.d. and finitely correlated players,
// and the backward recursion that bounds the score over a state set.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qprep/common.hpp"
#include "qprep/qmat.hpp"
#include "qprep/sets.hpp"

namespace qprep {

// ---------------------------------------------------------------------------
// Game description
// ---------------------------------------------------------------------------

// configs[k] lists the configurations the referee may hold before round
// k+1 (configs[0] is the single initial configuration; configs.back()
// lists the final configurations that carry scores).  povms[k][i] is the
// measurement applied in round k+1 when the configuration is
// configs[k][i]; its outcome labels name members of configs[k+1].  A
// measurement may omit labels (an absorbing configuration keeps a
// single-outcome identity measurement looping onto itself).  score maps
// every final configuration to the payoff awarded when the game ends
// there.
struct PreparationGame {
  std::vector<int> dims;                          // subsystem dims of each prepared state
  std::vector<std::vector<std::string>> configs;  // configs[k]: round-(k+1) configurations
  std::vector<std::vector<Povm>> povms;           // povms[k][i] for configs[k][i]
  std::map<std::string, double> score;            // final configuration -> payoff

  int rounds() const { return static_cast<int>(povms.size()); }
  int dim() const { return product(dims); }

  double min_score() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& [label, v] : score) m = std::min(m, v);
    return m;
  }
  double max_score() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& [label, v] : score) m = std::max(m, v);
    return m;
  }
};

namespace detail {

// Maps each configuration label of one round to its dense index.
inline std::map<std::string, int> label_index(const std::vector<std::string>& labels) {
  std::map<std::string, int> idx;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) idx.emplace(labels[i], i);
  return idx;
}

}  // namespace detail

// Structural and quantitative checks.  Returns a list of human-readable
// violations; an empty list means the game is well formed.  Quantitative
// defects (a POVM that fails completeness, a non-PSD element) are
// reported with the worst deviation so a caller can judge severity.
inline std::vector<std::string> validate(const PreparationGame& g) {
  std::vector<std::string> bad;
  auto complain = [&](const std::string& msg) { bad.push_back(msg); };

  if (g.dims.empty()) complain("no subsystem dimensions declared");
  for (int d : g.dims)
    if (d < 1) complain("subsystem dimension " + std::to_string(d) + " is not positive");
  const int dim = g.dims.empty() ? 0 : g.dim();

  const int n = g.rounds();
  if (n < 1) complain("game has no rounds");
  if (static_cast<int>(g.configs.size()) != n + 1) {
    complain("expected " + std::to_string(n + 1) + " configuration sets for " +
             std::to_string(n) + " rounds, found " + std::to_string(g.configs.size()));
    return bad;  // indexing below would be meaningless
  }
  if (g.configs[0].size() != 1)
    complain("round 1 must start from exactly one configuration, found " +
             std::to_string(g.configs[0].size()));

  for (int k = 0; k <= n; ++k) {
    std::set<std::string> seen;
    for (const auto& s : g.configs[k])
      if (!seen.insert(s).second)
        complain("duplicate configuration '" + s + "' before round " + std::to_string(k + 1));
  }

  for (int k = 0; k < n; ++k) {
    if (g.povms[k].size() != g.configs[k].size()) {
      complain("round " + std::to_string(k + 1) + ": " + std::to_string(g.povms[k].size()) +
               " measurements for " + std::to_string(g.configs[k].size()) + " configurations");
      continue;
    }
    const auto next = detail::label_index(g.configs[k + 1]);
    for (size_t i = 0; i < g.povms[k].size(); ++i) {
      const Povm& m = g.povms[k][i];
      const std::string where =
          "round " + std::to_string(k + 1) + ", configuration '" + g.configs[k][i] + "'";
      if (dim > 0 && m.dim() != dim)
        complain(where + ": measurement dimension " + std::to_string(m.dim()) +
                 " does not match declared dimension " + std::to_string(dim));
      if (m.labels.empty()) {
        complain(where + ": outcomes carry no configuration labels");
        continue;
      }
      std::set<std::string> outs;
      for (const auto& lab : m.labels) {
        if (!next.count(lab))
          complain(where + ": outcome label '" + lab + "' names no configuration of round " +
                   std::to_string(k + 2));
        if (!outs.insert(lab).second)
          complain(where + ": duplicate outcome label '" + lab + "'");
      }
      // Quantitative checks (loaders may hand us defective elements).
      Mat sum = Mat::Zero(m.dim(), m.dim());
      double worst_psd = 0.0;
      for (const auto& e : m.elements) {
        if (e.rows() != m.dim() || e.cols() != m.dim()) {
          complain(where + ": ragged element dimensions");
          sum = Mat();
          break;
        }
        Mat h = hermitize(e, 1.0);  // hermitize regardless; asymmetry shows up below
        if (max_abs(h - e) > tol::kPovm) {
          complain(where + ": element is not Hermitian (deviation " +
                   std::to_string(max_abs(h - e)) + ")");
        }
        worst_psd = std::min(worst_psd, min_eigenvalue(h));
        sum += h;
      }
      if (sum.size() > 0) {
        if (worst_psd < -tol::kPovm)
          complain(where + ": element has negative eigenvalue " + std::to_string(worst_psd));
        const double dev = max_abs(sum - Mat::Identity(m.dim(), m.dim()));
        if (dev > tol::kPovm)
          complain(where + ": elements do not sum to identity (max deviation " +
                   std::to_string(dev) + ")");
      }
    }
  }

  for (const auto& s : g.configs[n])
    if (!g.score.count(s)) complain("no score assigned to final configuration '" + s + "'");
  for (const auto& [s, v] : g.score) {
    if (!std::count(g.configs[n].begin(), g.configs[n].end(), s))
      complain("score table names unknown final configuration '" + s + "'");
    if (!std::isfinite(v)) complain("score for '" + s + "' is not finite");
  }
  return bad;
}

inline void validate_or_throw(const PreparationGame& g) {
  auto bad = validate(g);
  if (bad.empty()) return;
  std::ostringstream os;
  os << "invalid game:";
  for (const auto& b : bad) os << "\n  - " << b;
  throw ValidationError(os.str());
}

// ---------------------------------------------------------------------------
// Expected score of an i.i.d. player
// ---------------------------------------------------------------------------

// Expected score when the player submits the same state rho every round:
// push the configuration distribution forward through the measurement
// transition probabilities and average the payoffs.
inline double score_iid(const PreparationGame& g, const DensityMatrix& rho) {
  validate_or_throw(g);
  if (rho.matrix.rows() != g.dim())
    throw ValidationError("score_iid: state dimension " + std::to_string(rho.matrix.rows()) +
                          " does not match game dimension " + std::to_string(g.dim()));
  const int n = g.rounds();
  std::vector<double> p(g.configs[0].size(), 0.0);
  p[0] = 1.0;
  for (int k = 0; k < n; ++k) {
    const auto next = detail::label_index(g.configs[k + 1]);
    std::vector<double> q(g.configs[k + 1].size(), 0.0);
    for (size_t i = 0; i < g.povms[k].size(); ++i) {
      if (p[i] == 0.0) continue;
      const Povm& m = g.povms[k][i];
      for (int o = 0; o < m.outcomes(); ++o) {
        const double pr = std::real((m.elements[o].adjoint() * rho.matrix).trace());
        q[next.at(m.labels[o])] += p[i] * pr;
      }
    }
    p = std::move(q);
  }
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) total += p[i] * g.score.at(g.configs[n][i]);
  return total;
}

// ---------------------------------------------------------------------------
// Optimal-score recursion over a state set
// ---------------------------------------------------------------------------

// One cell of the optimal-score table: the value of the game continued
// from a given round and configuration, the state achieving it (when the
// per-round maximization produced one), and whether that state attains
// the value to within 1e-6 (for relaxed state sets the reported state is
// a cleaned-up candidate and may fall short of the bound).
struct ScoreEntry {
  double value = 0.0;
  std::optional<DensityMatrix> witness;
  bool tight = false;
};

// values[k][i] is the optimal continuation score before round k+1 in
// configuration configs[k][i]; values[n][i] repeats the final payoffs.
// value() is the overall optimum, attained from the initial configuration.
struct ScoreTable {
  std::vector<std::vector<ScoreEntry>> values;
  double value() const { return values.front().front().value; }
};

// Best expected score over players restricted to preparing states from
// `states` each round, chosen adaptively per round and configuration.
// Computed by backward induction: the continuation value of (round k,
// configuration s) is the maximum over the state set of the linear
// functional built from the round-k measurement weighted by next-round
// continuation values.  For a relaxed state set the result is an upper
// bound on every player the relaxation contains.
inline ScoreTable max_score_constrained(const PreparationGame& g, const StateSet& states,
                                        double solver_tol = 1e-8) {
  validate_or_throw(g);
  if (states.dim() != g.dim())
    throw ValidationError("max_score_constrained: state set dimension does not match game");
  const int n = g.rounds();
  ScoreTable table;
  table.values.resize(n + 1);
  table.values[n].resize(g.configs[n].size());
  for (size_t i = 0; i < g.configs[n].size(); ++i) {
    table.values[n][i].value = g.score.at(g.configs[n][i]);
    table.values[n][i].tight = true;  // nothing left to optimize
  }
  for (int k = n - 1; k >= 0; --k) {
    const auto next = detail::label_index(g.configs[k + 1]);
    table.values[k].resize(g.configs[k].size());
    for (size_t i = 0; i < g.configs[k].size(); ++i) {
      const Povm& m = g.povms[k][i];
      Mat w = Mat::Zero(g.dim(), g.dim());
      for (int o = 0; o < m.outcomes(); ++o)
        w += table.values[k + 1][next.at(m.labels[o])].value * m.elements[o];
      w = hermitize(w, 1e-12 * (1.0 + max_abs(w)));
      MaxLinearResult r = max_linear(w, states, solver_tol);
      ScoreEntry& e = table.values[k][i];
      e.value = r.value;
      e.witness = r.maximizer;
      if (e.witness) {
        const double achieved = std::real((w.adjoint() * e.witness->matrix).trace());
        e.tight = (e.value - achieved) <= 1e-6;
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Finitely correlated players
// ---------------------------------------------------------------------------

// A player with a d_env-dimensional memory: each round an instrument
// described by Kraus operators K_i : H_env -> H_env (x) H_game produces
// the submitted state from the memory and updates the memory.  env_set
// constrains the initial memory state (a Singleton pins it; AllStates
// optimizes over it).
struct FinitelyCorrelatedStrategy {
  std::vector<Mat> kraus;  // each (env_dim * game_dim) x env_dim
  int env_dim = 0;
  StateSet env_set;
};

inline FinitelyCorrelatedStrategy make_fincorr_strategy(std::vector<Mat> kraus, int env_dim,
                                                        StateSet env_set) {
  if (env_dim < 1) throw ValidationError("finitely correlated strategy: env_dim must be positive");
  if (kraus.empty()) throw ValidationError("finitely correlated strategy: no Kraus operators");
  if (env_set.dim() != env_dim)
    throw ValidationError("finitely correlated strategy: memory state set dimension " +
                          std::to_string(env_set.dim()) + " does not match env_dim " +
                          std::to_string(env_dim));
  const auto rows = kraus[0].rows();
  if (rows % env_dim != 0)
    throw ValidationError("finitely correlated strategy: Kraus output is not env (x) game");
  Mat sum = Mat::Zero(env_dim, env_dim);
  for (const auto& k : kraus) {
    if (k.rows() != rows || k.cols() != env_dim)
      throw ValidationError("finitely correlated strategy: ragged Kraus dimensions");
    sum += k.adjoint() * k;
  }
  if (max_abs(sum - Mat::Identity(env_dim, env_dim)) > 1e-9)
    throw ValidationError(
        "finitely correlated strategy: Kraus operators are not trace preserving (max deviation " +
        std::to_string(max_abs(sum - Mat::Identity(env_dim, env_dim))) + ")");
  return FinitelyCorrelatedStrategy{std::move(kraus), env_dim, std::move(env_set)};
}

struct FinCorrScore {
  double value = 0.0;          // best expected score over allowed memory states
  Mat omega;                   // accumulated operator on the memory space
  std::optional<DensityMatrix> memory;  // memory state achieving value, when available
};

// Expected score of a finitely correlated player, exactly.  Working
// backwards, omega[k][s] is the operator on the memory space whose
// expectation in the round-k memory state equals the expected final
// payoff conditioned on configuration s: the recursion dresses the next
// round's operators with the measurement elements and pulls them through
// the instrument.  The value is the best expectation of omega at the
// initial round over the allowed memory states.
inline FinCorrScore score_fincorr(const PreparationGame& g,
                                  const FinitelyCorrelatedStrategy& strat,
                                  double solver_tol = 1e-8) {
  validate_or_throw(g);
  const int d = g.dim();
  const int de = strat.env_dim;
  if (strat.kraus.empty() || strat.kraus[0].rows() != static_cast<Eigen::Index>(de) * d)
    throw ValidationError("score_fincorr: strategy output dimension does not match game");
  const int n = g.rounds();
  std::vector<Mat> omega(g.configs[n].size());
  for (size_t i = 0; i < omega.size(); ++i)
    omega[i] = g.score.at(g.configs[n][i]) * Mat::Identity(de, de);
  for (int k = n - 1; k >= 0; --k) {
    const auto next = detail::label_index(g.configs[k + 1]);
    std::vector<Mat> prev(g.configs[k].size());
    for (size_t i = 0; i < prev.size(); ++i) {
      const Povm& m = g.povms[k][i];
      Mat dressed = Mat::Zero(de * d, de * d);
      for (int o = 0; o < m.outcomes(); ++o)
        dressed += kron(omega[next.at(m.labels[o])], m.elements[o]);
      Mat acc = Mat::Zero(de, de);
      for (const auto& kr : strat.kraus) acc += kr.adjoint() * dressed * kr;
      prev[i] = hermitize(acc, 1e-10 * (1.0 + max_abs(acc)));
    }
    omega = std::move(prev);
  }
  FinCorrScore out;
  out.omega = omega[0];
  MaxLinearResult r = max_linear(out.omega, strat.env_set, solver_tol);
  out.value = r.value;
  out.memory = r.maximizer;
  return out;
}

// Checks a claimed bound on a finitely correlated player's score against
// the dual description of the memory state set: true iff `bound` certifiably
// dominates the expectation of `omega` over every allowed memory state.
inline bool fincorr_dual_check(const Mat& omega, double bound, const StateSet& env_set,
                               double solver_tol = 1e-8) {
  return dual_member(omega, bound, env_set, solver_tol).member;
}

}  // namespace qprep
