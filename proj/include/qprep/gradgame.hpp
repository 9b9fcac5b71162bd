// Witness-following games: many-round protocols that walk a parametric
// witness family by measuring stochastic gradients, plus the concrete
// two-qubit entanglement-quantification instance built on that scheme.
#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "qprep/game.hpp"
#include "qprep/sets.hpp"
#include "qprep/states.hpp"

namespace qprep {

// ------------------------------------------------------------------
// Scalar helpers
// ------------------------------------------------------------------

// Base-2 entropy of a coin, with the 0·log 0 = 0 convention.
inline double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0))
    throw ValidationError("binary_entropy: argument must lie in [0, 1]");
  double acc = 0;
  if (x > 0) acc -= x * std::log2(x);
  if (x < 1) acc -= (1.0 - x) * std::log2(1.0 - x);
  return acc;
}

// ------------------------------------------------------------------
// POVMs from witnesses and their gradients
// ------------------------------------------------------------------

// Two-outcome measurement estimating a bounded observable: the outcome
// difference reproduces W, so the empirical ±1 average estimates tr[W rho].
inline Povm povm_from_witness(const Mat& w0) {
  const Mat w = hermitize(w0);
  const int d = static_cast<int>(w.rows());
  Eigen::SelfAdjointEigenSolver<Mat> eig(w);
  if (eig.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-9)
    throw ValidationError("witness POVM: observable norm exceeds 1");
  const Mat id = Mat::Identity(d, d);
  return Povm({(id - w) * 0.5, (id + w) * 0.5}, {"-1", "1"});
}

using WitnessFamily = std::function<Mat(const std::vector<double>&)>;

namespace detail {

// Fourth-order central difference of the family along one parameter;
// accurate to ~1e-12 for smooth families, well inside the 1e-8 band the
// estimation scheme needs.
inline Mat witness_partial(const WitnessFamily& family, const std::vector<double>& theta, int x) {
  const double h = 1e-4;
  auto shifted = [&](double delta) {
    auto t = theta;
    t[x] += delta;
    return family(t);
  };
  return (shifted(-2 * h) - shifted(2 * h) + 8.0 * (shifted(h) - shifted(-h))) / (12.0 * h);
}

}  // namespace detail

// Two-outcome measurement whose outcome difference is the direction-x
// partial derivative of the witness family, scaled into operator norm by
// the family's gradient bound.
inline Povm povm_from_gradient(const WitnessFamily& family, const std::vector<double>& theta,
                               int x, double grad_bound) {
  if (x < 0 || x >= static_cast<int>(theta.size()))
    throw ValidationError("gradient POVM: direction out of range");
  if (!(grad_bound > 0)) throw ValidationError("gradient POVM: gradient bound must be positive");
  Mat scaled = detail::witness_partial(family, theta, x) / grad_bound;
  scaled = (scaled + scaled.adjoint().eval()) * 0.5;
  Eigen::SelfAdjointEigenSolver<Mat> eig(scaled);
  if (eig.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-7)
    throw ValidationError("gradient POVM: derivative norm exceeds the declared bound");
  const Mat id = Mat::Identity(scaled.rows(), scaled.cols());
  return Povm({(id - scaled) * 0.5, (id + scaled) * 0.5}, {"-1", "1"});
}

// ------------------------------------------------------------------
// Game construction
// ------------------------------------------------------------------

// A witness-following game over a parametric family W(theta),
// theta in R^params with ||W|| <= 1 and ||dW/dtheta_x|| <= grad_bound.
// Each round either measures the witness itself (direction 0) or a
// gradient direction, drawn from per-round sampling distributions; the
// tally of outcomes drives the parameter walk and the witness estimate.
struct GradientGameSpec {
  int params = 1;                 // number of walked parameters
  std::vector<int> dims;          // Hilbert space factors W acts on
  WitnessFamily witness;
  double grad_bound = 1.0;
  std::vector<double> theta0;
  double step = 0.1;
  // sampling[k][x]: round-k probability of measuring direction x, where
  // x = 0 measures the witness and x = 1..params a gradient direction.
  std::vector<std::vector<double>> sampling;
  // Final payoff from the walked parameters and the witness estimate.
  std::function<double(const std::vector<double>&, double)> final_score;
};

inline std::vector<std::string> validate_gradient_spec(const GradientGameSpec& spec, int rounds) {
  std::vector<std::string> out;
  auto complain = [&](std::string m) { out.push_back(std::move(m)); };
  if (spec.params < 1) complain("gradient spec: need at least one parameter");
  if (spec.dims.empty()) complain("gradient spec: no Hilbert space dimensions");
  if (!spec.witness) complain("gradient spec: no witness family");
  if (!spec.final_score) complain("gradient spec: no final scoring function");
  if (!(spec.grad_bound > 0)) complain("gradient spec: gradient bound must be positive");
  if (static_cast<int>(spec.theta0.size()) != spec.params)
    complain("gradient spec: initial parameters have the wrong length");
  if (rounds < 1) complain("gradient spec: need at least one round");
  if (static_cast<int>(spec.sampling.size()) != rounds)
    complain("gradient spec: expected one sampling distribution per round");
  if (!out.empty()) return out;
  for (int k = 0; k < rounds; ++k) {
    const auto& p = spec.sampling[k];
    if (static_cast<int>(p.size()) != spec.params + 1) {
      complain("gradient spec: round " + std::to_string(k + 1) +
               " sampling distribution has the wrong length");
      continue;
    }
    double sum = 0;
    for (double v : p) {
      if (v < -1e-12)
        complain("gradient spec: negative sampling weight in round " + std::to_string(k + 1));
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      complain("gradient spec: round " + std::to_string(k + 1) +
               " sampling distribution sums to " + std::to_string(sum));
  }
  int d = 1;
  for (int f : spec.dims) d *= f;
  // Walk the reachable parameter range and check the declared norm bounds.
  const int span = std::max(1, rounds / 5);
  for (int x = 0; x < spec.params && out.empty(); ++x)
    for (int j = -rounds; j <= rounds; j += span) {
      auto theta = spec.theta0;
      theta[x] += spec.step * j;
      const Mat w = spec.witness(theta);
      if (w.rows() != d || w.cols() != d) {
        complain("gradient spec: witness dimension does not match the declared factors");
        break;
      }
      Eigen::SelfAdjointEigenSolver<Mat> eig(w);
      if (eig.eigenvalues().cwiseAbs().maxCoeff() > 1.0 + 1e-9) {
        complain("gradient spec: witness norm exceeds 1 within the reachable parameter range");
        break;
      }
    }
  return out;
}

namespace detail {

inline std::string lattice_label(const std::vector<int>& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace detail

// Expands the parameter walk into an explicit preparation game.  Round-k
// configurations are the reachable outcome tallies (lattice points whose
// 1-norm is at most k with the parity of k); the round POVM in
// configuration s mixes the witness and gradient measurements at the
// walked parameters, with outcomes relabeled to tally increments; the
// final payoff sees the walked parameters and the normalized witness
// tally.
inline PreparationGame build_game(const GradientGameSpec& spec, int rounds) {
  {
    auto r = validate_gradient_spec(spec, rounds);
    if (!r.empty()) throw ValidationError(r.front());
  }
  const int m = spec.params;
  double p0_total = 0;
  for (int k = 0; k < rounds; ++k) p0_total += spec.sampling[k][0];
  if (p0_total <= 0)
    throw ValidationError("gradient game: the witness direction is never sampled");

  // Reachable tallies, level by level.
  std::vector<std::vector<std::vector<int>>> lattice(rounds + 1);
  std::vector<std::map<std::vector<int>, int>> index(rounds + 1);
  lattice[0] = {std::vector<int>(m + 1, 0)};
  index[0] = {{lattice[0][0], 0}};
  long total = 1;
  for (int k = 0; k < rounds; ++k) {
    for (const auto& s : lattice[k])
      for (int x = 0; x <= m; ++x)
        for (int a : {-1, 1}) {
          auto next = s;
          next[x] += a;
          if (index[k + 1].emplace(next, static_cast<int>(lattice[k + 1].size())).second)
            lattice[k + 1].push_back(next);
        }
    total += static_cast<long>(lattice[k + 1].size());
    if (total > 200000)
      throw ValidationError("gradient game: configuration count exceeds the supported cap");
  }

  auto walked = [&](const std::vector<int>& s) {
    std::vector<double> theta = spec.theta0;
    for (int x = 0; x < m; ++x) theta[x] += spec.step * s[x + 1];
    return theta;
  };

  PreparationGame g;
  g.dims = spec.dims;
  g.configs.resize(rounds + 1);
  for (int k = 0; k <= rounds; ++k) {
    g.configs[k].reserve(lattice[k].size());
    for (const auto& s : lattice[k]) g.configs[k].push_back(detail::lattice_label(s));
  }
  g.povms.resize(rounds);
  for (int k = 0; k < rounds; ++k) {
    g.povms[k].reserve(lattice[k].size());
    for (const auto& s : lattice[k]) {
      const auto theta = walked(s);
      std::vector<Mat> elements;
      std::vector<std::string> labels;
      for (int x = 0; x <= m; ++x) {
        const Povm base = x == 0 ? povm_from_witness(spec.witness(theta))
                                 : povm_from_gradient(spec.witness, theta, x - 1,
                                                      spec.grad_bound);
        for (int o = 0; o < 2; ++o) {
          auto next = s;
          next[x] += o == 0 ? -1 : 1;
          elements.push_back(spec.sampling[k][x] * base.elements[o]);
          labels.push_back(detail::lattice_label(next));
        }
      }
      g.povms[k].emplace_back(std::move(elements), std::move(labels));
    }
  }
  for (const auto& s : lattice[rounds])
    g.score[detail::lattice_label(s)] = spec.final_score(walked(s), s[0] / p0_total);
  validate_or_throw(g);
  return g;
}

// ------------------------------------------------------------------
// Entanglement quantification instance
// ------------------------------------------------------------------

// Two-qubit witness family whose unique unit-eigenvalue eigenvector is
// cos(theta)|00> + sin(theta)|11>.
inline Mat ent_quant_witness(double theta) {
  const Mat plus = pure_state({2}, ket_plus()).matrix;
  const Mat minus = pure_state({2}, ket_minus()).matrix;
  const double s2 = std::sin(2 * theta), c2 = std::cos(2 * theta);
  return 0.5 * (kron(pauli(3), pauli(3)) + kron(plus, s2 * pauli(1) + c2 * pauli(3)) +
                kron(minus, -s2 * pauli(1) + c2 * pauli(3)));
}

// Highest witness value reachable with separable-relaxation level k
// preparations; exact for two qubits at k = 1.
inline double delta_theta(double theta, int level = 1) {
  return max_linear(ent_quant_witness(theta), make_sep_outer(level, {2, 2})).value;
}

// The full quantification game: walk the witness angle, measure the
// witness more often in later rounds, and pay the entanglement entropy
// of the walked angle when the witness estimate clears a mixture of the
// entangled and separable extremes.
inline GradientGameSpec ent_quant_spec(double lambda, int rounds, double step = 0.1,
                                       double theta0 = 0.0) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw ValidationError("entanglement quantification: mixing weight must lie in [0, 1]");
  GradientGameSpec spec;
  spec.params = 1;
  spec.dims = {2, 2};
  spec.witness = [](const std::vector<double>& theta) { return ent_quant_witness(theta[0]); };
  spec.grad_bound = 1.0;
  spec.theta0 = {theta0};
  spec.step = step;
  spec.sampling.resize(rounds);
  for (int k = 1; k <= rounds; ++k) {
    const double p0 = 1.0 / (1.0 + std::exp(-(2.0 * k - rounds)));
    spec.sampling[k - 1] = {p0, 1.0 - p0};
  }
  auto cache = std::make_shared<std::map<double, double>>();
  spec.final_score = [lambda, cache](const std::vector<double>& theta, double v) {
    auto it = cache->find(theta[0]);
    if (it == cache->end()) it = cache->emplace(theta[0], delta_theta(theta[0])).first;
    const double threshold = 1.0 - lambda + lambda * it->second;
    return v >= threshold ? binary_entropy(std::cos(theta[0]) * std::cos(theta[0])) : 0.0;
  };
  return spec;
}

inline PreparationGame ent_quant_game(double lambda, int rounds, double step = 0.1,
                                      double theta0 = 0.0) {
  return build_game(ent_quant_spec(lambda, rounds, step, theta0), rounds);
}

// Average payoff when every round prepares the same pure state
// cos(theta)|00> + sin(theta)|11>, per grid angle.
inline std::vector<double> ent_quant_iid_curve(const PreparationGame& g,
                                               const std::vector<double>& thetas) {
  std::vector<double> out;
  out.reserve(thetas.size());
  for (double t : thetas) out.push_back(score_iid(g, pure_state({2, 2}, state_psi_theta(t))));
  return out;
}

// CSV rows of the quantification curves: the per-angle payoff of the
// honest pure-state family next to the angle-independent bounds for
// separable and negativity-limited players.
inline void write_gradient_curve(std::ostream& os, const std::vector<double>& thetas,
                                 const std::vector<double>& iid_scores, double separable_bound,
                                 const std::vector<std::pair<double, double>>& negativity_bounds) {
  if (thetas.size() != iid_scores.size())
    throw ValidationError("gradient curve: angle and score columns differ in length");
  char buf[64];
  os << "theta,iid_score,separable_bound";
  for (const auto& [cap, bound] : negativity_bounds) {
    (void)bound;
    std::snprintf(buf, sizeof buf, ",negativity_bound[%g]", cap);
    os << buf;
  }
  os << "\n";
  for (size_t i = 0; i < thetas.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g", thetas[i], iid_scores[i],
                  separable_bound);
    os << buf;
    for (const auto& [cap, bound] : negativity_bounds) {
      (void)cap;
      std::snprintf(buf, sizeof buf, ",%.12g", bound);
      os << buf;
    }
    os << "\n";
  }
}

}  // namespace qprep
