#pragma once

// Seeded Monte-Carlo simulation of preparation games under i.i.d.,
// adaptive, and finitely correlated preparation strategies, plus the
// builder for the environment-interaction strategy used in the bounded-
// configuration study: a d_A-dimensional environment couples to each
// fresh two-qubit state through an exchange Hamiltonian for a short time
// before the state is handed to the referee.

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "qprep/common.hpp"
#include "qprep/game.hpp"
#include "qprep/qmat.hpp"
#include "qprep/rng.hpp"

namespace qprep {

// ---------------------------------------------------------------------------
// Strategies a simulated player can follow
// ---------------------------------------------------------------------------

// The same state every round.
struct IidPrep {
  DensityMatrix state;
};

// A memory-carrying instrument with an explicit initial memory state
// (analytic scoring quantifies over allowed memories; a simulation has to
// pick one).
struct FinCorrPrep {
  FinitelyCorrelatedStrategy strategy;
  DensityMatrix env_state;
};

// A fixed state per (round, configuration) — e.g. the witnesses of an
// optimal-score table replayed against the game.
struct AdaptivePrep {
  std::map<std::pair<int, std::string>, DensityMatrix> table;
};

struct SimStrategy {
  std::variant<IidPrep, FinCorrPrep, AdaptivePrep> prep;
};

struct SimResult {
  double mean_score = 0.0;
  double std_error = 0.0;
  long shots = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> frequencies;  // final configuration -> share
};

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

// Plays `shots` independent runs of the game and averages the payoffs.
// Each shot draws from its own counter-based stream, so results are
// reproducible bit-for-bit for a given seed regardless of evaluation
// order.  If `trajectory` is non-null it receives one (final
// configuration, payoff) entry per shot in shot order.
inline SimResult simulate(const PreparationGame& g, const SimStrategy& strat, long shots,
                          std::uint64_t seed,
                          std::vector<std::pair<std::string, double>>* trajectory = nullptr) {
  validate_or_throw(g);
  if (shots < 1) throw ValidationError("simulate: shots must be positive");
  const int n = g.rounds();
  const int d = g.dim();

  const IidPrep* iid = std::get_if<IidPrep>(&strat.prep);
  const FinCorrPrep* fin = std::get_if<FinCorrPrep>(&strat.prep);
  const AdaptivePrep* ad = std::get_if<AdaptivePrep>(&strat.prep);

  // Outcome distributions that do not depend on a memory can be
  // tabulated once: weights[k][i][o] is the probability of outcome o of
  // the measurement at (round k+1, configuration i).
  std::vector<std::vector<std::vector<double>>> weights;
  if (iid || ad) {
    auto state_for = [&](int k, const std::string& label) -> const DensityMatrix& {
      if (iid) return iid->state;
      auto it = ad->table.find({k, label});
      if (it == ad->table.end())
        throw ValidationError("simulate: adaptive table has no state for round " +
                              std::to_string(k + 1) + ", configuration '" + label + "'");
      return it->second;
    };
    weights.resize(n);
    for (int k = 0; k < n; ++k) {
      weights[k].resize(g.povms[k].size());
      for (size_t i = 0; i < g.povms[k].size(); ++i) {
        const DensityMatrix& rho = state_for(k, g.configs[k][i]);
        if (rho.matrix.rows() != d)
          throw ValidationError("simulate: prepared state dimension does not match game");
        const Povm& m = g.povms[k][i];
        for (int o = 0; o < m.outcomes(); ++o) {
          double p = std::real((m.elements[o] * rho.matrix).trace());
          weights[k][i].push_back(std::max(p, 0.0));
        }
      }
    }
  } else {
    const auto& fs = fin->strategy;
    if (fs.kraus[0].rows() != static_cast<Eigen::Index>(fs.env_dim) * d)
      throw ValidationError("simulate: strategy output dimension does not match game");
    if (fin->env_state.matrix.rows() != fs.env_dim)
      throw ValidationError("simulate: initial memory dimension does not match strategy");
  }

  // Dense successor index per (k, i, o).
  std::vector<std::vector<std::vector<int>>> succ(n);
  for (int k = 0; k < n; ++k) {
    const auto next = detail::label_index(g.configs[k + 1]);
    succ[k].resize(g.povms[k].size());
    for (size_t i = 0; i < g.povms[k].size(); ++i)
      for (const auto& lab : g.povms[k][i].labels) succ[k][i].push_back(next.at(lab));
  }

  std::vector<long> counts(g.configs[n].size(), 0);
  std::vector<double> outcome_weights;
  for (long shot = 0; shot < shots; ++shot) {
    CounterRng rng(seed, static_cast<std::uint64_t>(shot));
    int config = 0;
    Mat env;
    if (fin) env = fin->env_state.matrix;
    for (int k = 0; k < n; ++k) {
      const Povm& m = g.povms[k][config];
      int o;
      if (fin) {
        const auto& fs = fin->strategy;
        const int de = fs.env_dim;
        Mat sigma = Mat::Zero(de * d, de * d);
        for (const auto& kr : fs.kraus) sigma += kr * env * kr.adjoint();
        outcome_weights.clear();
        for (int oo = 0; oo < m.outcomes(); ++oo) {
          const Mat joint = kron(Mat::Identity(de, de), m.elements[oo]);
          outcome_weights.push_back(
              std::max(std::real((joint * sigma).trace()), 0.0));
        }
        o = rng.sample(outcome_weights);
        // Conditional (non-normalized) memory update, then renormalize.
        const Mat joint = kron(Mat::Identity(de, de), m.elements[o]);
        Mat upd = partial_trace(joint * sigma, {de, d}, {0});
        double tr = std::real(upd.trace());
        if (tr <= 1e-300) throw SolverError("simulate: zero-probability branch sampled");
        env = hermitize(upd / tr, 1e-6);
      } else {
        o = rng.sample(weights[k][config]);
      }
      config = succ[k][config][o];
    }
    ++counts[config];
    if (trajectory)
      trajectory->push_back({g.configs[n][config], g.score.at(g.configs[n][config])});
  }

  SimResult res;
  res.shots = shots;
  res.seed = seed;
  double mean = 0.0, second = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    const double f = static_cast<double>(counts[i]) / static_cast<double>(shots);
    const double sc = g.score.at(g.configs[n][i]);
    res.frequencies[g.configs[n][i]] = f;
    mean += f * sc;
    second += f * sc * sc;
  }
  res.mean_score = mean;
  const double var = std::max(second - mean * mean, 0.0);
  res.std_error = shots > 1 ? std::sqrt(var / static_cast<double>(shots - 1)) : 0.0;
  return res;
}

// ---------------------------------------------------------------------------
// Environment-interaction strategy
// ---------------------------------------------------------------------------

// Truncated bosonic raising operator on a d-dimensional ladder:
// raise|j> = sqrt(j+1)|j+1> for j < d-1, hard cutoff at the top level.
inline Mat raising_operator(int d) {
  Mat a = Mat::Zero(d, d);
  for (int j = 0; j + 1 < d; ++j) a(j + 1, j) = std::sqrt(static_cast<double>(j + 1));
  return a;
}

// Exchange coupling between the environment ladder and both qubits of the
// prepared pair: the environment absorbs or emits one excitation while
// either qubit flips.
inline Mat interaction_hamiltonian(int d_env) {
  const Mat raise = raising_operator(d_env);
  const Mat lower = raise.adjoint();
  Mat flip_down = Mat::Zero(2, 2);  // |0><1|
  flip_down(0, 1) = 1;
  const Mat id2 = Mat::Identity(2, 2);
  const Mat down_pair = kron(id2, flip_down) + kron(flip_down, id2);
  return kron(raise, down_pair) + kron(lower, Mat(down_pair.adjoint()));
}

// One isometric Kraus operator K = exp(-i tau H) (I_env (x) |target>):
// every round the device tensors a fresh copy of the target pair onto
// the environment and lets the pair interact for time tau before
// emission.  The memory state set is left fully unconstrained.
inline FinitelyCorrelatedStrategy build_interaction_strategy(int d_env, double tau,
                                                             const DensityMatrix& target) {
  if (d_env < 2) throw ValidationError("build_interaction_strategy: environment dimension < 2");
  if (target.matrix.rows() != 4)
    throw ValidationError("build_interaction_strategy: target must be a two-qubit state");
  // The builder needs a pure target to form the embedding isometry.
  auto eig = eig_hermitian(target.matrix);
  const int top = static_cast<int>(eig.values.size()) - 1;
  if (eig.values(top) < 1.0 - 1e-9)
    throw ValidationError("build_interaction_strategy: target state is not pure");
  const Vec psi = eig.vectors.col(top);

  Mat h = interaction_hamiltonian(d_env);
  Mat u = (Complex(0, -tau) * h).exp();  // scaling-and-squaring Pade expm
  Mat embed = Mat::Zero(d_env * 4, d_env);
  for (int a = 0; a < d_env; ++a)
    for (int b = 0; b < 4; ++b) embed(a * 4 + b, a) = psi(b);
  Mat kraus = u * embed;
  return make_fincorr_strategy({std::move(kraus)}, d_env, make_all_states({d_env}));
}

}  // namespace qprep
