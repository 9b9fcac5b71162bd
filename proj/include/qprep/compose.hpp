// Composition of games: meta-games whose rounds are themselves games
// (recursively), their score recursion, repeated play with a win
// threshold, and the closed-form bounds used when a composed game drives
// a hypothesis test.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qprep/game.hpp"
#include "qprep/sets.hpp"

namespace qprep {

// ------------------------------------------------------------------
// Meta-games
// ------------------------------------------------------------------

struct MetaGame;

// A round of a meta-game runs either a plain preparation game or another
// meta-game one level down.
using GameHandle = std::variant<PreparationGame, std::shared_ptr<const MetaGame>>;

// An n-round game whose round k, in configuration s, plays the inner game
// inner[k][s]; the inner game's final configuration o then drives the
// configuration update through the kernel transition[k][s], and the final
// configuration is scored.
struct MetaGame {
  std::vector<std::vector<std::string>> configs;  // configs[k], k = 0..rounds
  std::vector<std::vector<GameHandle>> inner;     // inner[k][i] for configs[k][i]
  // transition[k][i]: inner outcome label -> distribution over configs[k+1]
  std::vector<std::vector<std::map<std::string, std::vector<double>>>> transition;
  std::map<std::string, double> score;            // final configuration -> payoff

  int rounds() const { return static_cast<int>(inner.size()); }
};

// Repeated play: the base game (all of whose final payoffs are 0 or 1) is
// played `repetitions` times and the composition accepts when the number
// of unit-payoff outcomes reaches `threshold`.
struct RepetitionGame {
  GameHandle base;
  int repetitions = 0;
  int threshold = 0;
};

namespace detail {

inline const std::vector<std::string>& handle_final_labels(const GameHandle& h) {
  if (std::holds_alternative<PreparationGame>(h))
    return std::get<PreparationGame>(h).configs.back();
  return std::get<std::shared_ptr<const MetaGame>>(h)->configs.back();
}

inline const std::map<std::string, double>& handle_scores(const GameHandle& h) {
  if (std::holds_alternative<PreparationGame>(h)) return std::get<PreparationGame>(h).score;
  return std::get<std::shared_ptr<const MetaGame>>(h)->score;
}

}  // namespace detail

inline std::vector<std::string> validate_meta(const MetaGame& mg, int depth = 0);

namespace detail {

inline void validate_meta_into(const MetaGame& mg, int depth, std::vector<std::string>& out) {
  auto complain = [&](std::string m) { out.push_back(std::move(m)); };
  if (depth >= 8) {
    complain("meta-game: nesting deeper than 8 levels");
    return;
  }
  const int n = mg.rounds();
  if (n < 1) complain("meta-game: needs at least one round");
  if (static_cast<int>(mg.configs.size()) != n + 1)
    complain("meta-game: expected " + std::to_string(n + 1) + " configuration lists");
  if (static_cast<int>(mg.transition.size()) != n)
    complain("meta-game: expected one transition table per round");
  if (!out.empty()) return;
  if (mg.configs[0].size() != 1) complain("meta-game: must start in a unique configuration");
  for (int k = 0; k <= n; ++k)
    if (mg.configs[k].empty()) complain("meta-game: empty configuration list");
  for (int k = 0; k < n; ++k) {
    if (mg.inner[k].size() != mg.configs[k].size() ||
        mg.transition[k].size() != mg.configs[k].size()) {
      complain("meta-game: round " + std::to_string(k + 1) +
               " tables do not match its configurations");
      continue;
    }
    for (size_t i = 0; i < mg.inner[k].size(); ++i) {
      const std::string where =
          "meta-game round " + std::to_string(k + 1) + ", configuration " + mg.configs[k][i];
      const auto& h = mg.inner[k][i];
      if (std::holds_alternative<PreparationGame>(h)) {
        for (auto& m : validate(std::get<PreparationGame>(h)))
          complain(where + ": inner game: " + m);
      } else {
        const auto& ptr = std::get<std::shared_ptr<const MetaGame>>(h);
        if (!ptr) {
          complain(where + ": missing inner game");
          continue;
        }
        validate_meta_into(*ptr, depth + 1, out);
        if (!out.empty()) return;
      }
      const auto& labels = handle_final_labels(h);
      const auto& kern = mg.transition[k][i];
      if (kern.size() != labels.size())
        complain(where + ": kernel rows do not match the inner game's outcomes");
      for (const auto& label : labels) {
        auto it = kern.find(label);
        if (it == kern.end()) {
          complain(where + ": no kernel row for outcome " + label);
          continue;
        }
        if (it->second.size() != mg.configs[k + 1].size()) {
          complain(where + ": kernel row for outcome " + label + " has the wrong length");
          continue;
        }
        double sum = 0;
        for (double v : it->second) {
          if (v < -1e-12) complain(where + ": negative kernel entry for outcome " + label);
          sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9)
          complain(where + ": kernel row for outcome " + label + " sums to " +
                   std::to_string(sum));
      }
    }
  }
  for (const auto& label : mg.configs[n])
    if (!mg.score.count(label)) complain("meta-game: no payoff for final configuration " + label);
}

}  // namespace detail

inline std::vector<std::string> validate_meta(const MetaGame& mg, int depth) {
  std::vector<std::string> out;
  detail::validate_meta_into(mg, depth, out);
  return out;
}

inline void validate_meta_or_throw(const MetaGame& mg) {
  auto r = validate_meta(mg);
  if (!r.empty()) throw ValidationError(r.front());
}

// ------------------------------------------------------------------
// Score recursion
// ------------------------------------------------------------------

struct MetaOptions {
  double solver_tol = 1e-8;
  bool shortcut = true;  // closed form for two-outcome inner games
};

namespace detail {

// Content hashing (FNV-1a) so repeated inner games share their cached
// extreme outcome probabilities regardless of object identity.
struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void byte(unsigned char b) { h = (h ^ b) * 1099511628211ull; }
  void raw(const void* p, size_t len) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) byte(c[i]);
  }
  void real(double v) { raw(&v, sizeof v); }
  void integer(long v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    integer(static_cast<long>(s.size()));
    raw(s.data(), s.size());
  }
  void mat(const Mat& m) {
    integer(m.rows());
    integer(m.cols());
    for (long j = 0; j < m.cols(); ++j)
      for (long i = 0; i < m.rows(); ++i) {
        real(m(i, j).real());
        real(m(i, j).imag());
      }
  }
};

inline void hash_handle_into(const GameHandle& h, Fnv& f);

inline void hash_game_into(const PreparationGame& g, Fnv& f) {
  f.integer(1);
  for (int d : g.dims) f.integer(d);
  for (const auto& lvl : g.configs) {
    f.integer(static_cast<long>(lvl.size()));
    for (const auto& label : lvl) f.str(label);
  }
  for (const auto& row : g.povms)
    for (const auto& m : row) {
      f.integer(m.outcomes());
      for (int o = 0; o < m.outcomes(); ++o) {
        f.str(m.labels[o]);
        f.mat(m.elements[o]);
      }
    }
  for (const auto& [label, v] : g.score) {
    f.str(label);
    f.real(v);
  }
}

inline void hash_meta_into(const MetaGame& mg, Fnv& f) {
  f.integer(2);
  for (const auto& lvl : mg.configs) {
    f.integer(static_cast<long>(lvl.size()));
    for (const auto& label : lvl) f.str(label);
  }
  for (const auto& row : mg.inner)
    for (const auto& h : row) hash_handle_into(h, f);
  for (const auto& row : mg.transition)
    for (const auto& kern : row)
      for (const auto& [label, dist] : kern) {
        f.str(label);
        for (double v : dist) f.real(v);
      }
  for (const auto& [label, v] : mg.score) {
    f.str(label);
    f.real(v);
  }
}

inline void hash_handle_into(const GameHandle& h, Fnv& f) {
  if (std::holds_alternative<PreparationGame>(h))
    hash_game_into(std::get<PreparationGame>(h), f);
  else
    hash_meta_into(*std::get<std::shared_ptr<const MetaGame>>(h), f);
}

inline std::uint64_t hash_handle(const GameHandle& h) {
  Fnv f;
  hash_handle_into(h, f);
  return f.h;
}

inline std::uint64_t hash_state_set(const StateSet& set) {
  Fnv f;
  f.str(set.kind());
  for (int d : set.dims()) f.integer(d);
  if (std::holds_alternative<Singleton>(set.family)) {
    f.mat(std::get<Singleton>(set.family).state.matrix);
  } else if (std::holds_alternative<SepOuter>(set.family)) {
    f.integer(std::get<SepOuter>(set.family).level);
  } else if (std::holds_alternative<EpsBall>(set.family)) {
    f.mat(std::get<EpsBall>(set.family).center.matrix);
    f.real(std::get<EpsBall>(set.family).radius);
  } else if (std::holds_alternative<NegativityBall>(set.family)) {
    f.real(std::get<NegativityBall>(set.family).max_negativity);
  }
  return f.h;
}

// Shared cache of extreme first-outcome probabilities for two-outcome
// games, keyed by content so identical rounds are optimized once.
struct ExtremeCache {
  std::mutex lock;
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::pair<double, double>> map;
};

inline ExtremeCache& extreme_cache() {
  static ExtremeCache c;
  return c;
}

inline double meta_score_impl(const MetaGame& mg, const std::map<std::string, double>& final_score,
                              const StateSet& set, const MetaOptions& opt, int depth);

// Best score of one inner game under an effective payoff per outcome.
inline double handle_score(const GameHandle& h, const std::map<std::string, double>& payoff,
                           const StateSet& set, const MetaOptions& opt, int depth) {
  if (std::holds_alternative<PreparationGame>(h)) {
    PreparationGame g = std::get<PreparationGame>(h);
    g.score = payoff;
    return max_score_constrained(g, set, opt.solver_tol).value();
  }
  return meta_score_impl(*std::get<std::shared_ptr<const MetaGame>>(h), payoff, set, opt,
                         depth + 1);
}

// Largest and smallest reachable probability of the FIRST final
// configuration of a two-outcome game, memoized by content.
inline std::pair<double, double> extreme_first_outcome(const GameHandle& h, const StateSet& set,
                                                       const MetaOptions& opt, int depth) {
  const auto key = std::make_pair(hash_handle(h), hash_state_set(set));
  {
    auto& c = extreme_cache();
    std::lock_guard<std::mutex> g(c.lock);
    auto it = c.map.find(key);
    if (it != c.map.end()) return it->second;
  }
  const auto& labels = handle_final_labels(h);
  const double pmax =
      handle_score(h, {{labels[0], 1.0}, {labels[1], 0.0}}, set, opt, depth);
  const double pmin =
      1.0 - handle_score(h, {{labels[0], 0.0}, {labels[1], 1.0}}, set, opt, depth);
  const auto val = std::make_pair(pmax, pmin);
  auto& c = extreme_cache();
  std::lock_guard<std::mutex> g(c.lock);
  c.map.emplace(key, val);
  return val;
}

// Backward recursion over meta-rounds: the continuation value of (round
// k, configuration s) is the best score of the inner game under the
// effective payoff obtained by pushing next-round values through the
// transition kernel.  Two-outcome inner games admit a closed form in
// their extreme outcome probabilities, turning repeated rounds into table
// lookups after two optimizations per distinct game.
inline double meta_score_impl(const MetaGame& mg, const std::map<std::string, double>& final_score,
                              const StateSet& set, const MetaOptions& opt, int depth) {
  if (depth >= 8) throw ValidationError("meta-game: nesting deeper than 8 levels");
  const int n = mg.rounds();
  std::vector<double> value(mg.configs[n].size());
  for (size_t i = 0; i < value.size(); ++i) value[i] = final_score.at(mg.configs[n][i]);
  for (int k = n - 1; k >= 0; --k) {
    std::vector<double> prev(mg.configs[k].size());
    for (size_t i = 0; i < prev.size(); ++i) {
      const auto& h = mg.inner[k][i];
      const auto& kern = mg.transition[k][i];
      const auto& labels = handle_final_labels(h);
      std::map<std::string, double> payoff;
      for (const auto& label : labels) {
        const auto& dist = kern.at(label);
        double acc = 0;
        for (size_t j = 0; j < dist.size(); ++j) acc += dist[j] * value[j];
        payoff[label] = acc;
      }
      if (opt.shortcut && labels.size() == 2) {
        const double g0 = payoff.at(labels[0]), g1 = payoff.at(labels[1]);
        const auto [pmax, pmin] = extreme_first_outcome(h, set, opt, depth);
        prev[i] = g1 + (g0 > g1 ? pmax : pmin) * (g0 - g1);
      } else {
        prev[i] = handle_score(h, payoff, set, opt, depth);
      }
    }
    value = std::move(prev);
  }
  return value[0];
}

}  // namespace detail

// Best average score of the meta-game over players whose per-round
// preparations are drawn from the given state set (chosen adaptively
// across all levels of nesting).
inline double max_score_meta(const MetaGame& mg, const StateSet& set, const MetaOptions& opt = {}) {
  validate_meta_or_throw(mg);
  return detail::meta_score_impl(mg, mg.score, set, opt, 0);
}

// ------------------------------------------------------------------
// Repetition
// ------------------------------------------------------------------

// Upper tail of a binomial count: the probability of at least `threshold`
// wins in `repetitions` independent plays that each win with probability
// p_win.  Accumulated in log space, so deep tails keep full relative
// precision up to tens of thousands of repetitions.
inline double binomial_tail(double p_win, int repetitions, int threshold) {
  if (!(p_win >= 0.0 && p_win <= 1.0))
    throw ValidationError("binomial_tail: win probability must lie in [0, 1]");
  if (repetitions < 0) throw ValidationError("binomial_tail: negative repetition count");
  if (threshold <= 0) return 1.0;
  if (threshold > repetitions) return 0.0;
  if (p_win == 0.0) return 0.0;
  if (p_win == 1.0) return 1.0;
  const double lp = std::log(p_win), lq = std::log1p(-p_win);
  const double lgm = std::lgamma(repetitions + 1.0);
  double peak = -std::numeric_limits<double>::infinity();
  std::vector<double> terms;
  terms.reserve(repetitions - threshold + 1);
  for (int k = threshold; k <= repetitions; ++k) {
    const double lt =
        lgm - std::lgamma(k + 1.0) - std::lgamma(repetitions - k + 1.0) + k * lp +
        (repetitions - k) * lq;
    terms.push_back(lt);
    peak = std::max(peak, lt);
  }
  double acc = 0;
  for (double lt : terms) acc += std::exp(lt - peak);
  return std::min(1.0, std::exp(peak) * acc);
}

// Expands repeated play into a meta-game: configurations count the wins
// so far, the transition adds the inner payoff (all base payoffs must be
// 0 or 1), and the final configuration is scored by the win threshold.
inline MetaGame make_repetition_meta(const RepetitionGame& rep) {
  if (rep.repetitions < 1) throw ValidationError("repetition: need at least one play");
  if (rep.threshold < 0 || rep.threshold > rep.repetitions)
    throw ValidationError("repetition: threshold must lie between 0 and the repetition count");
  const auto& scores = detail::handle_scores(rep.base);
  for (const auto& label : detail::handle_final_labels(rep.base)) {
    auto it = scores.find(label);
    if (it == scores.end())
      throw ValidationError("repetition: base game does not score outcome " + label);
    if (std::abs(it->second) > 1e-12 && std::abs(it->second - 1.0) > 1e-12)
      throw ValidationError("repetition: base payoffs must be 0 or 1");
  }
  const int m = rep.repetitions;
  MetaGame mg;
  mg.configs.resize(m + 1);
  mg.inner.resize(m);
  mg.transition.resize(m);
  for (int k = 0; k <= m; ++k) {
    mg.configs[k].resize(k + 1);
    for (int s = 0; s <= k; ++s) mg.configs[k][s] = std::to_string(s);
  }
  for (int k = 0; k < m; ++k) {
    mg.inner[k].assign(k + 1, rep.base);
    mg.transition[k].resize(k + 1);
    for (int s = 0; s <= k; ++s) {
      auto& kern = mg.transition[k][s];
      for (const auto& label : detail::handle_final_labels(rep.base)) {
        const int win = std::abs(scores.at(label) - 1.0) <= 1e-12 ? 1 : 0;
        std::vector<double> dist(k + 2, 0.0);
        dist[s + win] = 1.0;
        kern[label] = std::move(dist);
      }
    }
  }
  for (int s = 0; s <= m; ++s)
    mg.score[std::to_string(s)] = s >= rep.threshold ? 1.0 : 0.0;
  return mg;
}

inline double max_score_repetition(const RepetitionGame& rep, const StateSet& set,
                                   const MetaOptions& opt = {}) {
  return max_score_meta(make_repetition_meta(rep), set, opt);
}

// ------------------------------------------------------------------
// Composition bounds
// ------------------------------------------------------------------

// Normal approximation to the repeated type-I error at win fraction mu:
// exp(-m (mu - e1)^2 / (2 e1 (1 - e1))).  An asymptotic approximation
// only — not a bound in either direction.
inline double gaussian_error_scaling(double mu, double e1, int repetitions) {
  if (!(e1 > 0.0 && e1 < 1.0))
    throw ValidationError("gaussian scaling: single-round error must lie strictly in (0, 1)");
  if (!(mu >= e1 && mu <= 1.0))
    throw ValidationError("gaussian scaling: win fraction must lie in [e1, 1]");
  if (repetitions < 0) throw ValidationError("gaussian scaling: negative repetition count");
  const double gap = mu - e1;
  return std::exp(-repetitions * gap * gap / (2.0 * e1 * (1.0 - e1)));
}

// For a player whose true win probability exceeds the constrained optimum,
// the expected p-value of the win count after m plays is at most
// [1 - (true - constrained)^2]^m.
inline double pvalue_bound(double score_true, double score_constrained, int repetitions) {
  if (!(score_true >= 0.0 && score_true <= 1.0 && score_constrained >= 0.0 &&
        score_constrained <= 1.0))
    throw ValidationError("p-value bound: scores must lie in [0, 1]");
  if (score_true < score_constrained)
    throw ValidationError("p-value bound: true score must reach the constrained optimum");
  if (repetitions < 0) throw ValidationError("p-value bound: negative repetition count");
  const double gap = score_true - score_constrained;
  return std::pow(1.0 - gap * gap, repetitions);
}

// ------------------------------------------------------------------
// Error curves for repeated protocols
// ------------------------------------------------------------------

// Error rates of the m-fold repetition with win threshold v, given the
// single-round rates: the null model passes when it wins at least v
// times; the target fails when it wins fewer than v times.
struct RepetitionPoint {
  double e1_single = 0, e2_single = 0;
  int repetitions = 0, threshold = 0;
  double e1 = 0, e2 = 0;
};

inline RepetitionPoint repetition_errors(double e1_single, double e2_single, int repetitions,
                                         int threshold) {
  if (!(e1_single >= 0 && e1_single <= 1 && e2_single >= 0 && e2_single <= 1))
    throw ValidationError("repetition errors: rates must lie in [0, 1]");
  RepetitionPoint p;
  p.e1_single = e1_single;
  p.e2_single = e2_single;
  p.repetitions = repetitions;
  p.threshold = threshold;
  p.e1 = binomial_tail(e1_single, repetitions, threshold);
  p.e2 = 1.0 - binomial_tail(1.0 - e2_single, repetitions, threshold);
  return p;
}

// CSV rows of composed error rates, one per single-round operating point.
inline void write_repetition_curve(std::ostream& os,
                                   const std::vector<std::pair<double, double>>& single_rates,
                                   int repetitions, int threshold) {
  os << "e1_single,e2_single,repetitions,threshold,e1,e2\n";
  char line[192];
  for (const auto& [e1s, e2s] : single_rates) {
    const auto p = repetition_errors(e1s, e2s, repetitions, threshold);
    std::snprintf(line, sizeof line, "%.12g,%.12g,%d,%d,%.12g,%.12g\n", p.e1_single, p.e2_single,
                  p.repetitions, p.threshold, p.e1, p.e2);
    os << line;
  }
}

}  // namespace qprep
