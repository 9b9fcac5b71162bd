// Command-line front end for the preparation-games toolkit: scoring,
// simulation, measurement design, round optimization, game composition,
// and the witness-following quantification game, with CSV artifacts and
// JSON summaries carrying full provenance.
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qprep/compose.hpp"
#include "qprep/design.hpp"
#include "qprep/gradgame.hpp"
#include "qprep/serialize.hpp"
#include "qprep/sim.hpp"
#include "qprep/states.hpp"

namespace {

using namespace qprep;

constexpr int kOk = 0, kValidationExit = 2, kSolverExit = 3;
constexpr const char* kToolVersion = "qprep 1.0";

DensityMatrix named_state(const std::string& name, double theta) {
  if (name == "phi") return pure_state({2, 2}, state_phi());
  if (name == "psi-adapt") return pure_state({2, 2}, state_psi_adapt());
  if (name == "psi-theta") return pure_state({2, 2}, state_psi_theta(theta));
  if (name == "singlet") return pure_state({2, 2}, state_singlet());
  if (name == "phi-plus") return pure_state({2, 2}, state_phi_plus());
  if (name == "mixed") return DensityMatrix({2, 2}, Mat::Identity(4, 4) * 0.25);
  throw ValidationError("unknown state '" + name +
                        "' (choose phi, psi-adapt, psi-theta, singlet, phi-plus, mixed)");
}

MeasurementClass named_class(const std::string& name) {
  if (name == "global") return make_global_class();
  if (name == "oneway") return make_one_way_lpcc_class();
  if (name == "pauli") return make_local_pauli_class();
  throw ValidationError("unknown measurement class '" + name +
                        "' (choose global, oneway, pauli)");
}

std::uint64_t text_digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) h = (h ^ c) * 1099511628211ull;
  return h;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open '" + path + "'");
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw ValidationError("cannot open '" + tmp + "' for writing");
    os << text;
    if (!os) throw ValidationError("write to '" + tmp + "' failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ValidationError("cannot move '" + tmp + "' into place");
}

// Provenance block stamped into every summary and written game file.
struct Provenance {
  Json block;
  explicit Provenance(const std::string& command) {
    block["command"] = command;
    block["generator"] = kToolVersion;
    block["game_schema"] = kGameSchema;
  }
  void input(const std::string& path, const std::string& text) {
    block["inputs"][path] = text_digest(text);
  }
  template <typename T>
  void note(const std::string& key, const T& value) {
    block[key] = value;
  }
};

void emit_summary(Json summary, const Provenance& prov, const std::string& out_path) {
  summary["provenance"] = prov.block;
  const std::string text = summary.dump(2) + "\n";
  std::cout << text;
  if (!out_path.empty()) write_text_atomic(out_path, text);
}

// ------------------------------------------------------------------
// score / simulate
// ------------------------------------------------------------------

struct StrategyOpts {
  std::string state = "phi";
  double theta = M_PI / 4;
  int env_dim = 0;  // > 0 selects the environment-interaction strategy
  double tau = 0.1;
  std::string env_init = "ground";
};

void add_strategy_opts(CLI::App* cmd, StrategyOpts& s) {
  cmd->add_option("--state", s.state,
                  "named preparation: phi, psi-adapt, psi-theta, singlet, phi-plus, mixed");
  cmd->add_option("--theta", s.theta, "angle for psi-theta");
  cmd->add_option("--interaction-env-dim", s.env_dim,
                  "environment dimension; > 0 switches to the memory-coupled strategy");
  cmd->add_option("--interaction-tau", s.tau, "interaction time of the memory coupling");
  cmd->add_option("--env-init", s.env_init,
                  "initial memory for simulation: ground or mixed");
}

DensityMatrix env_initial(const std::string& kind, int d) {
  if (kind == "ground") {
    Mat m = Mat::Zero(d, d);
    m(0, 0) = 1.0;
    return DensityMatrix({d}, m);
  }
  if (kind == "mixed") return DensityMatrix({d}, Mat::Identity(d, d) / d);
  throw ValidationError("unknown memory initialization '" + kind + "' (ground, mixed)");
}

int run_score(const std::string& game_path, const StrategyOpts& s, const std::string& out) {
  Provenance prov("score");
  const std::string text = read_text(game_path);
  prov.input(game_path, text);
  auto doc = parse_game_document(text);
  Json summary;
  summary["game"] = game_path;
  if (s.env_dim > 0) {
    auto strat = build_interaction_strategy(s.env_dim, s.tau, named_state(s.state, s.theta));
    summary["strategy"] = "fincorr";
    summary["score"] = score_fincorr(doc.game, strat).value;
    prov.note("interaction", Json{{"env_dim", s.env_dim}, {"tau", s.tau}});
  } else {
    summary["strategy"] = "iid";
    summary["score"] = score_iid(doc.game, named_state(s.state, s.theta));
  }
  summary["state"] = s.state;
  emit_summary(summary, prov, out);
  return kOk;
}

int run_simulate(const std::string& game_path, const StrategyOpts& s, long shots,
                 std::uint64_t seed, const std::string& trajectories, const std::string& out) {
  Provenance prov("simulate");
  const std::string text = read_text(game_path);
  prov.input(game_path, text);
  prov.note("seed", seed);
  prov.note("shots", shots);
  auto doc = parse_game_document(text);

  auto make_strategy = [&]() -> SimStrategy {
    if (s.env_dim > 0) {
      auto fc = build_interaction_strategy(s.env_dim, s.tau, named_state(s.state, s.theta));
      return {FinCorrPrep{std::move(fc), env_initial(s.env_init, s.env_dim)}};
    }
    return {IidPrep{named_state(s.state, s.theta)}};
  };
  SimStrategy strat = make_strategy();

  std::vector<std::pair<std::string, double>> traj;
  auto res = simulate(doc.game, strat, shots, seed,
                      trajectories.empty() ? nullptr : &traj);
  if (!trajectories.empty()) {
    std::ostringstream csv;
    csv << "final_config,score\n";
    for (const auto& [label, sc] : traj) csv << label << "," << sc << "\n";
    write_text_atomic(trajectories, csv.str());
  }

  Json summary;
  summary["game"] = game_path;
  summary["strategy"] = s.env_dim > 0 ? "fincorr" : "iid";
  summary["state"] = s.state;
  summary["mean_score"] = res.mean_score;
  summary["std_error"] = res.std_error;
  summary["shots"] = res.shots;
  summary["seed"] = res.seed;
  summary["frequencies"] = res.frequencies;
  emit_summary(summary, prov, out);
  return kOk;
}

// ------------------------------------------------------------------
// validate
// ------------------------------------------------------------------

int run_validate(const std::string& game_path, const std::string& out) {
  Provenance prov("validate");
  std::vector<std::string> violations;
  try {
    const std::string text = read_text(game_path);
    prov.input(game_path, text);
    auto doc = parse_game_document(text);
    violations = validate(doc.game);
  } catch (const ValidationError& e) {
    violations.push_back(e.what());
  }
  Json summary;
  summary["game"] = game_path;
  summary["valid"] = violations.empty();
  summary["violations"] = violations;
  emit_summary(summary, prov, out);
  return violations.empty() ? kOk : kValidationExit;
}

// ------------------------------------------------------------------
// design-oneshot
// ------------------------------------------------------------------

int run_design_oneshot(const StrategyOpts& s, const std::string& cls_name, int grid, double eps,
                       int dual_level, double solver_tol, const std::string& csv_path,
                       const std::string& save_game, const std::string& out) {
  if (grid < 2) throw ValidationError("design-oneshot: grid needs at least two points");
  Provenance prov("design-oneshot");
  prov.note("class", cls_name);
  prov.note("state", s.state);
  prov.note("grid", grid);
  prov.note("eps", eps);
  prov.note("dual_level", dual_level);
  prov.note("solver_tol", solver_tol);

  auto cls = named_class(cls_name);
  auto target = named_state(s.state, s.theta);
  auto dual = make_sep_outer(dual_level, {2, 2});

  std::ostringstream csv;
  csv << "e1,e2,total\n";
  char line[128];
  double best_total = 2.0, best_e1 = 0.0, best_e2 = 1.0;
  int failed = 0;
  std::optional<DesignResult> best;
  for (int i = 0; i < grid; ++i) {
    const double e1 = static_cast<double>(i) / (grid - 1);
    try {
      DesignResult r = eps > 0
                           ? design_oneshot_eps(target, eps, e1, cls, dual, solver_tol)
                           : design_oneshot({target}, e1, cls, dual, solver_tol);
      std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g\n", e1, r.e2, e1 + r.e2);
      csv << line;
      if (e1 + r.e2 < best_total) {
        best_total = e1 + r.e2;
        best_e1 = e1;
        best_e2 = r.e2;
        best = std::move(r);
      }
    } catch (const SolverError&) {
      ++failed;
    }
  }
  if (!best) throw SolverError("design-oneshot: no grid point solved");

  Json summary;
  summary["class"] = cls_name;
  summary["state"] = s.state;
  summary["eps"] = eps;
  summary["grid_points"] = grid;
  summary["failed_points"] = failed;
  summary["grid_min"] = {{"e1", best_e1}, {"e2", best_e2}, {"total", best_total}};
  if (eps <= 0) {
    auto mt = design_oneshot_min_total({target}, cls, dual, solver_tol);
    summary["min_total"] = {{"e1", mt.e1}, {"e2", mt.e2}, {"total", mt.e1 + mt.e2}};
    best = std::move(mt);
  }
  if (!csv_path.empty()) write_text_atomic(csv_path, csv.str());
  if (!save_game.empty()) write_game_file(save_game, best->game, prov.block);
  emit_summary(summary, prov, out);
  return kOk;
}

// ------------------------------------------------------------------
// design-demon
// ------------------------------------------------------------------

int run_design_demon(const StrategyOpts& s, const std::string& cls_name, int rounds, double e1,
                     bool non_adaptive, long transcript_cap, double solver_tol,
                     const std::string& save_game, const std::string& out) {
  Provenance prov("design-demon");
  prov.note("class", cls_name);
  prov.note("state", s.state);
  prov.note("rounds", rounds);
  prov.note("adaptive", !non_adaptive);
  prov.note("solver_tol", solver_tol);

  auto cls = named_class(cls_name);
  auto target = named_state(s.state, s.theta);
  auto dual = make_sep_outer(1, {2, 2});
  DemonOptions opt;
  opt.adaptive = !non_adaptive;
  opt.transcript_cap = transcript_cap;
  opt.solver_tol = solver_tol;

  DesignResult r = e1 >= 0 ? design_demon(rounds, cls, {target}, e1, dual, opt)
                           : design_demon_min_total(rounds, cls, {target}, dual, opt);

  Json summary;
  summary["class"] = cls_name;
  summary["state"] = s.state;
  summary["rounds"] = rounds;
  summary["adaptive"] = !non_adaptive;
  summary["e1"] = r.e1;
  summary["e2"] = r.e2;
  summary["total"] = r.e1 + r.e2;
  if (!save_game.empty()) write_game_file(save_game, r.game, prov.block);
  emit_summary(summary, prov, out);
  return kOk;
}

// ------------------------------------------------------------------
// optimize-rounds
// ------------------------------------------------------------------

int run_optimize_rounds(const StrategyOpts& s, const std::string& cls_name, int rounds,
                        int branches, double e1, int restarts, int iterations,
                        std::uint64_t seed, double solver_tol, const std::string& objective,
                        const std::string& csv_path, const std::string& save_game,
                        const std::string& out) {
  Provenance prov("optimize-rounds");
  prov.note("class", cls_name);
  prov.note("rounds", rounds);
  prov.note("branches", branches);
  prov.note("e1", e1);
  prov.note("restarts", restarts);
  prov.note("iterations", iterations);
  prov.note("seed", seed);
  prov.note("solver_tol", solver_tol);
  prov.note("objective", objective);

  auto cls = named_class(cls_name);
  auto target = named_state(s.state, s.theta);
  RoundObjective obj;
  if (objective == "iid") {
    obj = IidTargets{{target}};
  } else if (objective == "fincorr") {
    obj = FinCorrTarget{build_interaction_strategy(s.env_dim > 0 ? s.env_dim : 10, s.tau,
                                                   target)};
  } else {
    throw ValidationError("unknown objective '" + objective + "' (iid, fincorr)");
  }
  std::vector<ScoreBound> bounds = {{make_sep_outer(1, {2, 2}), e1}};

  DescentOptions opt;
  opt.iterations = iterations;
  opt.round.solver_tol = solver_tol;

  // The descent minimizes the worst rejection probability of the targets,
  // so the objective is the type-II error itself.
  std::ostringstream csv;
  csv << "restart,iteration,objective\n";
  char line[96];
  Json per_restart = Json::array();
  double best_e2 = 2.0;
  std::optional<PreparationGame> best_game;
  for (int r = 0; r < restarts; ++r) {
    auto g0 = damp_final_verdict(
        randomize_measurements(make_early_exit_game(rounds, branches, {2, 2}), seed + r), "1",
        e1);
    auto res = coordinate_descent(g0, cls, obj, bounds, opt);
    for (size_t it = 0; it < res.trace.size(); ++it) {
      std::snprintf(line, sizeof line, "%d,%zu,%.12g\n", r, it, res.trace[it]);
      csv << line;
    }
    per_restart.push_back({{"restart", r},
                           {"e2", res.objective},
                           {"skipped_rounds", res.skipped}});
    if (res.objective < best_e2) {
      best_e2 = res.objective;
      best_game = std::move(res.game);
    }
  }

  Json summary;
  summary["restarts"] = per_restart;
  summary["best_e2"] = best_e2;
  summary["e1"] = e1;
  if (!csv_path.empty()) write_text_atomic(csv_path, csv.str());
  if (!save_game.empty() && best_game) write_game_file(save_game, *best_game, prov.block);
  emit_summary(summary, prov, out);
  return kOk;
}

// ------------------------------------------------------------------
// compose
// ------------------------------------------------------------------

int run_compose(int m, int v, std::vector<double> e1s, std::vector<double> e2s,
                const std::string& game_path, const StrategyOpts& s, int dual_level,
                const std::string& csv_path, const std::string& out) {
  Provenance prov("compose");
  prov.note("repetitions", m);
  prov.note("threshold", v);

  if (!game_path.empty()) {
    // Derive the single-round operating point from a designed game: the
    // constrained optimum is the false-accept rate, the target's own
    // score the accept rate.
    const std::string text = read_text(game_path);
    prov.input(game_path, text);
    auto doc = parse_game_document(text);
    const double win_null =
        max_score_constrained(doc.game, make_sep_outer(dual_level, {2, 2})).value();
    const double win_target = score_iid(doc.game, named_state(s.state, s.theta));
    e1s = {win_null};
    e2s = {1.0 - win_target};
  }
  if (e1s.size() != e2s.size() || e1s.empty())
    throw ValidationError("compose: need matching e1-single/e2-single lists or a game");

  std::vector<std::pair<double, double>> points;
  for (size_t i = 0; i < e1s.size(); ++i) points.emplace_back(e1s[i], e2s[i]);
  std::ostringstream csv;
  write_repetition_curve(csv, points, m, v);
  if (!csv_path.empty()) write_text_atomic(csv_path, csv.str());

  Json rows = Json::array();
  for (const auto& [a, b] : points) {
    auto p = repetition_errors(a, b, m, v);
    rows.push_back({{"e1_single", p.e1_single},
                    {"e2_single", p.e2_single},
                    {"e1", p.e1},
                    {"e2", p.e2}});
  }
  Json summary;
  summary["repetitions"] = m;
  summary["threshold"] = v;
  summary["points"] = rows;
  emit_summary(summary, prov, out);
  return kOk;
}

// ------------------------------------------------------------------
// gradient-game
// ------------------------------------------------------------------

int run_gradient_game(int rounds, double lambda, double step, double theta0, int grid,
                      std::vector<double> negativity, bool skip_bounds, double solver_tol,
                      const std::string& csv_path, const std::string& save_game,
                      const std::string& out) {
  if (grid < 1) throw ValidationError("gradient-game: grid needs at least one point");
  Provenance prov("gradient-game");
  prov.note("rounds", rounds);
  prov.note("lambda", lambda);
  prov.note("step", step);
  prov.note("theta0", theta0);
  prov.note("solver_tol", solver_tol);

  auto g = ent_quant_game(lambda, rounds, step, theta0);
  std::vector<double> thetas;
  for (int i = 1; i <= grid; ++i) thetas.push_back(M_PI / 2 * i / (grid + 1));
  auto curve = ent_quant_iid_curve(g, thetas);

  double sep_bound = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::pair<double, double>> neg_bounds;
  if (!skip_bounds) {
    sep_bound = max_score_constrained(g, make_sep_outer(1, {2, 2}), solver_tol).value();
    for (double cap : negativity)
      neg_bounds.emplace_back(
          cap, max_score_constrained(g, make_negativity_ball({2, 2}, cap), solver_tol).value());
  }

  if (!csv_path.empty()) {
    std::ostringstream csv;
    write_gradient_curve(csv, thetas, curve, skip_bounds ? 0.0 : sep_bound, neg_bounds);
    write_text_atomic(csv_path, csv.str());
  }

  size_t peak = 0;
  for (size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > curve[peak]) peak = i;
  Json summary;
  summary["rounds"] = rounds;
  summary["lambda"] = lambda;
  summary["peak_theta"] = thetas[peak];
  summary["peak_score"] = curve[peak];
  if (!skip_bounds) {
    summary["separable_bound"] = sep_bound;
    Json nb = Json::array();
    for (const auto& [cap, bound] : neg_bounds)
      nb.push_back({{"negativity", cap}, {"bound", bound}});
    summary["negativity_bounds"] = nb;
  }
  if (!save_game.empty()) write_game_file(save_game, g, prov.block);
  emit_summary(summary, prov, out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quantum preparation games: design, scoring, optimization, simulation"};
  app.require_subcommand(1);

  std::string game_path, out_path, csv_path, save_game, trajectories;
  StrategyOpts strat;
  long shots = 100000;
  std::uint64_t seed = 0;
  std::string cls_name = "global";
  int grid = 101, dual_level = 1, rounds = 1, branches = 6, restarts = 10, iterations = 3;
  double eps = 0.0, solver_tol = 1e-9, e1 = -1.0;
  int rep_m = 30, rep_v = 22;
  std::vector<double> e1_singles, e2_singles, negativity;
  double lambda = 0.1, step = 0.1, theta0 = 0.0;
  std::string objective = "fincorr";

  auto* score_cmd = app.add_subcommand("score", "analytic average score of a game document");
  score_cmd->add_option("--game", game_path, "game document")->required();
  add_strategy_opts(score_cmd, strat);
  score_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* sim_cmd = app.add_subcommand("simulate", "Monte-Carlo play of a game document");
  sim_cmd->add_option("--game", game_path, "game document")->required();
  add_strategy_opts(sim_cmd, strat);
  sim_cmd->add_option("--shots", shots, "number of independent plays");
  sim_cmd->add_option("--seed", seed, "base RNG seed");
  sim_cmd->add_option("--trajectories", trajectories, "per-shot CSV dump");
  sim_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* val_cmd = app.add_subcommand("validate", "check a game document");
  val_cmd->add_option("--game", game_path, "game document")->required();
  val_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* dos_cmd = app.add_subcommand("design-oneshot",
                                     "single-round error-tradeoff designs over a type-I grid");
  add_strategy_opts(dos_cmd, strat);
  dos_cmd->add_option("--class", cls_name, "measurement class: global, oneway, pauli");
  dos_cmd->add_option("--grid", grid, "number of type-I grid points on [0,1]");
  dos_cmd->add_option("--eps", eps, "trace-ball radius around the target (0 = point target)");
  dos_cmd->add_option("--dual-level", dual_level, "separable relaxation level");
  dos_cmd->add_option("--solver-tol", solver_tol, "interior-point tolerance");
  dos_cmd->add_option("--csv", csv_path, "write the (e1, e2, total) curve here");
  dos_cmd->add_option("--save-game", save_game, "write the best design's game document here");
  dos_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* dd_cmd = app.add_subcommand("design-demon",
                                    "optimal measurement-menu protocols with classical memory");
  add_strategy_opts(dd_cmd, strat);
  dd_cmd->add_option("--class", cls_name, "measurement class: oneway, pauli");
  dd_cmd->add_option("--rounds", rounds, "number of rounds")->required();
  dd_cmd->add_option("--e1", e1, "fixed type-I budget (omit to minimize e1 + e2)");
  bool non_adaptive = false;
  dd_cmd->add_flag("--non-adaptive", non_adaptive, "restrict settings to be history-independent");
  long transcript_cap = 4000;
  dd_cmd->add_option("--transcript-cap", transcript_cap, "transcript safety cap");
  dd_cmd->add_option("--solver-tol", solver_tol, "interior-point tolerance");
  dd_cmd->add_option("--save-game", save_game, "write the extracted game document here");
  dd_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* opt_cmd = app.add_subcommand("optimize-rounds",
                                     "coordinate-descent heuristic over round measurements");
  add_strategy_opts(opt_cmd, strat);
  opt_cmd->add_option("--class", cls_name, "measurement class for the optimized rounds");
  opt_cmd->add_option("--rounds", rounds, "number of rounds")->required();
  opt_cmd->add_option("--branches", branches, "configurations per intermediate round");
  opt_cmd->add_option("--e1", e1, "type-I budget enforced on every iterate")->required();
  opt_cmd->add_option("--restarts", restarts, "random restarts");
  opt_cmd->add_option("--iterations", iterations, "descent sweeps per restart");
  opt_cmd->add_option("--seed", seed, "base seed for the random starts");
  opt_cmd->add_option("--objective", objective, "iid or fincorr");
  opt_cmd->add_option("--solver-tol", solver_tol, "interior-point tolerance");
  opt_cmd->add_option("--csv", csv_path, "write the per-iteration trace here");
  opt_cmd->add_option("--save-game", save_game, "write the best iterate here");
  opt_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* comp_cmd = app.add_subcommand("compose", "error rates of repeated play with a threshold");
  comp_cmd->add_option("--m", rep_m, "repetitions");
  comp_cmd->add_option("--v", rep_v, "acceptance threshold (wins needed)");
  comp_cmd->add_option("--e1-single", e1_singles, "single-round type-I rates");
  comp_cmd->add_option("--e2-single", e2_singles, "single-round type-II rates");
  comp_cmd->add_option("--game", game_path, "derive the single-round rates from this document");
  add_strategy_opts(comp_cmd, strat);
  comp_cmd->add_option("--dual-level", dual_level, "separable relaxation level");
  comp_cmd->add_option("--csv", csv_path, "write the composed curve here");
  comp_cmd->add_option("--out", out_path, "also write the JSON summary here");

  auto* grad_cmd = app.add_subcommand("gradient-game",
                                      "witness-walking quantification game and its curves");
  grad_cmd->add_option("--rounds", rounds, "number of rounds");
  grad_cmd->add_option("--lambda", lambda, "separable-mixture weight in the payoff threshold");
  grad_cmd->add_option("--step", step, "parameter step per outcome");
  grad_cmd->add_option("--theta0", theta0, "initial witness angle");
  grad_cmd->add_option("--grid", grid, "angle grid points inside (0, pi/2)");
  grad_cmd->add_option("--negativity", negativity, "negativity caps to bound");
  bool skip_bounds = false;
  grad_cmd->add_flag("--skip-bounds", skip_bounds, "skip the constrained-player bounds");
  grad_cmd->add_option("--solver-tol", solver_tol, "interior-point tolerance");
  grad_cmd->add_option("--csv", csv_path, "write the curve CSV here");
  grad_cmd->add_option("--save-game", save_game, "write the game document here");
  grad_cmd->add_option("--out", out_path, "also write the JSON summary here");

  // Defaults chosen per subcommand where they differ.
  grad_cmd->parse_complete_callback([&] {
    if (!grad_cmd->count("--rounds")) rounds = 41;
    if (!grad_cmd->count("--grid")) grid = 25;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidationExit;
  }

  try {
    if (*score_cmd) return run_score(game_path, strat, out_path);
    if (*sim_cmd) return run_simulate(game_path, strat, shots, seed, trajectories, out_path);
    if (*val_cmd) return run_validate(game_path, out_path);
    if (*dos_cmd)
      return run_design_oneshot(strat, cls_name, grid, eps, dual_level, solver_tol, csv_path,
                                save_game, out_path);
    if (*dd_cmd)
      return run_design_demon(strat, cls_name, rounds, dd_cmd->count("--e1") ? e1 : -1.0,
                              non_adaptive, transcript_cap, solver_tol, save_game, out_path);
    if (*opt_cmd)
      return run_optimize_rounds(strat, cls_name, rounds, branches, e1, restarts, iterations,
                                 seed, solver_tol, objective, csv_path, save_game, out_path);
    if (*comp_cmd)
      return run_compose(rep_m, rep_v, e1_singles, e2_singles, game_path, strat, dual_level,
                         csv_path, out_path);
    if (*grad_cmd)
      return run_gradient_game(rounds, lambda, step, theta0, grid, negativity, skip_bounds,
                               solver_tol, csv_path, save_game, out_path);
  } catch (const ValidationError& e) {
    std::cerr << Json{{"error", e.what()}, {"kind", "validation"}}.dump() << "\n";
    return kValidationExit;
  } catch (const SolverError& e) {
    std::cerr << Json{{"error", e.what()}, {"kind", "solver"}}.dump() << "\n";
    return kSolverExit;
  }
  return kValidationExit;
}
