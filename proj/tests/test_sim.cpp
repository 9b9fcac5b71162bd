#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "game_oracles.hpp"
#include "helpers.hpp"
#include "qprep/sim.hpp"
#include "qprep/states.hpp"

using namespace qprep;
using Catch::Approx;

namespace {

PreparationGame all_zero_game(int n) {
  PreparationGame g;
  g.dims = {2, 2};
  Mat p00 = pure_state({2, 2}, kron_vec(ket0(), ket0())).matrix;
  g.configs.push_back({"ok"});
  for (int k = 1; k <= n; ++k) g.configs.push_back({"ok", "fail"});
  for (int k = 0; k < n; ++k) {
    std::vector<Povm> row;
    row.push_back(Povm({p00, Mat::Identity(4, 4) - p00}, {"ok", "fail"}));
    if (k > 0) row.push_back(Povm({Mat::Identity(4, 4)}, {"fail"}));
    g.povms.push_back(std::move(row));
  }
  g.score["ok"] = 1.0;
  g.score["fail"] = 0.0;
  return g;
}

PreparationGame random_two_config_game(int n, int d, std::mt19937& gen) {
  PreparationGame g;
  g.dims = {d};
  g.configs.push_back({"start"});
  for (int k = 1; k <= n; ++k) g.configs.push_back({"a", "b"});
  for (int k = 0; k < n; ++k) {
    std::vector<Povm> row;
    for (size_t i = 0; i < g.configs[k].size(); ++i)
      row.push_back(Povm(testo::random_povm(d, 2, gen), {"a", "b"}));
    g.povms.push_back(std::move(row));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  g.score["a"] = u(gen);
  g.score["b"] = u(gen);
  return g;
}

// Forward-propagated final-configuration distribution for an i.i.d.
// player, written as plain nested loops independent of the library's
// scoring code.
std::map<std::string, double> iid_final_distribution(const PreparationGame& g, const Mat& rho) {
  std::map<std::string, double> p;
  p[g.configs[0][0]] = 1.0;
  for (int k = 0; k < g.rounds(); ++k) {
    std::map<std::string, double> q;
    for (size_t i = 0; i < g.configs[k].size(); ++i) {
      const auto it = p.find(g.configs[k][i]);
      if (it == p.end() || it->second == 0.0) continue;
      const Povm& m = g.povms[k][i];
      for (int o = 0; o < m.outcomes(); ++o)
        q[m.labels[o]] += it->second * std::real((m.elements[o] * rho).trace());
    }
    p = std::move(q);
  }
  return p;
}

}  // namespace

TEST_CASE("deterministic runs reproduce the analytic score exactly") {
  auto g = all_zero_game(3);
  SimStrategy s{IidPrep{pure_state({2, 2}, kron_vec(ket0(), ket0()))}};
  auto r = simulate(g, s, 2000, 7);
  CHECK(r.mean_score == 1.0);
  CHECK(r.std_error == 0.0);
  CHECK(r.frequencies.at("ok") == 1.0);
  CHECK(r.frequencies.at("fail") == 0.0);
  CHECK(r.shots == 2000);
}

TEST_CASE("maximally mixed input hits the all-zeros game at rate 1/64") {
  auto g = all_zero_game(3);
  SimStrategy s{IidPrep{DensityMatrix({2, 2}, Mat::Identity(4, 4) / 4.0)}};
  auto r = simulate(g, s, 100000, 11);
  double total = 0.0;
  for (const auto& [lab, f] : r.frequencies) total += f;
  CHECK(total == Approx(1.0).margin(1e-12));
  CHECK(std::abs(r.mean_score - 1.0 / 64.0) <= 4.0 * r.std_error);
  CHECK(r.std_error > 0.0);
}

TEST_CASE("identical seeds give identical results, fresh seeds fresh draws") {
  std::mt19937 gen(3);
  auto g = random_two_config_game(2, 2, gen);
  SimStrategy s{IidPrep{DensityMatrix({2}, testo::random_density(2, gen))}};
  std::vector<std::pair<std::string, double>> ta, tb, tc;
  auto a = simulate(g, s, 20000, 42, &ta);
  auto b = simulate(g, s, 20000, 42, &tb);
  CHECK(a.mean_score == b.mean_score);
  CHECK(a.std_error == b.std_error);
  CHECK(a.frequencies == b.frequencies);
  CHECK(ta == tb);
  auto c = simulate(g, s, 20000, 43, &tc);
  CHECK(ta != tc);
}

TEST_CASE("i.i.d. mean agrees with the forward-pass score") {
  std::mt19937 gen(5);
  auto g = random_two_config_game(3, 2, gen);
  DensityMatrix rho({2}, testo::random_density(2, gen));
  const double want = score_iid(g, rho);
  auto r = simulate(g, SimStrategy{IidPrep{rho}}, 100000, 17);
  CHECK(std::abs(r.mean_score - want) <= 4.0 * r.std_error);
}

TEST_CASE("empirical final-configuration distribution matches the analytic chain") {
  std::mt19937 gen(9);
  auto g = random_two_config_game(3, 2, gen);
  DensityMatrix rho({2}, testo::random_density(2, gen));
  const long shots = 100000;
  auto r = simulate(g, SimStrategy{IidPrep{rho}}, shots, 23);
  auto want = iid_final_distribution(g, rho.matrix);
  for (const auto& [lab, p] : want) {
    const double sigma = std::sqrt(std::max(p * (1 - p), 1e-12) / shots);
    CHECK(std::abs(r.frequencies.at(lab) - p) <= 5.0 * sigma);
  }
}

TEST_CASE("correlated-memory simulation tracks the analytic memory score") {
  std::mt19937 gen(13);
  auto g = random_two_config_game(2, 2, gen);
  auto strat = make_fincorr_strategy(testo::random_instrument(2, 2, 2, gen), 2,
                                     make_all_states({2}));
  auto sc = score_fincorr(g, strat);
  DensityMatrix env({2}, testo::random_density(2, gen));
  const double want = std::real((sc.omega * env.matrix).trace());
  auto r = simulate(g, SimStrategy{FinCorrPrep{strat, env}}, 100000, 29);
  CHECK(std::abs(r.mean_score - want) <= 4.0 * r.std_error);
}

TEST_CASE("replaying optimal-table witnesses attains the optimal score") {
  std::mt19937 gen(19);
  auto g = random_two_config_game(2, 2, gen);
  auto table = max_score_constrained(g, make_all_states({2}));
  AdaptivePrep ad;
  for (int k = 0; k < g.rounds(); ++k)
    for (size_t i = 0; i < g.configs[k].size(); ++i)
      ad.table.insert({{k, g.configs[k][i]}, *table.values[k][i].witness});
  auto r = simulate(g, SimStrategy{AdaptivePrep{ad}}, 100000, 31);
  CHECK(std::abs(r.mean_score - table.value()) <= 4.0 * r.std_error);
}

TEST_CASE("trajectory dump records one entry per shot") {
  auto g = all_zero_game(1);
  std::vector<std::pair<std::string, double>> traj;
  SimStrategy s{IidPrep{DensityMatrix({2, 2}, Mat::Identity(4, 4) / 4.0)}};
  auto r = simulate(g, s, 500, 37, &traj);
  REQUIRE(traj.size() == 500);
  long ok = 0;
  for (const auto& [lab, sc] : traj) {
    CHECK((lab == "ok" || lab == "fail"));
    CHECK(sc == (lab == "ok" ? 1.0 : 0.0));
    if (lab == "ok") ++ok;
  }
  CHECK(static_cast<double>(ok) / 500 == Approx(r.frequencies.at("ok")).margin(1e-12));
}

TEST_CASE("adaptive table must cover every configuration") {
  auto g = all_zero_game(2);
  AdaptivePrep ad;
  ad.table.insert({{0, "ok"}, DensityMatrix({2, 2}, Mat::Identity(4, 4) / 4.0)});
  CHECK_THROWS_AS(simulate(g, SimStrategy{AdaptivePrep{ad}}, 10, 1), ValidationError);
}

TEST_CASE("interaction strategy at zero coupling emits the target exactly") {
  std::mt19937 gen(21);
  Vec psi = state_psi_theta(M_PI / 4);
  auto strat = build_interaction_strategy(3, 0.0, pure_state({2, 2}, psi));
  REQUIRE(strat.kraus.size() == 1);
  const Mat& k = strat.kraus[0];
  CHECK(max_abs(Mat(k.adjoint() * k) - Mat::Identity(3, 3)) <= 1e-12);
  Mat env = testo::random_density(3, gen);
  Mat joint = k * env * k.adjoint();
  Mat emitted = partial_trace(joint, {3, 4}, {1});
  CHECK(max_abs(emitted - psi * psi.adjoint()) <= 1e-12);
  Mat env_after = partial_trace(joint, {3, 4}, {0});
  CHECK(max_abs(env_after - env) <= 1e-12);
}

TEST_CASE("interaction Kraus stays isometric at every size") {
  for (int d : {2, 5, 10}) {
    auto strat =
        build_interaction_strategy(d, 0.1, pure_state({2, 2}, state_psi_theta(M_PI / 4)));
    const Mat& k = strat.kraus[0];
    CHECK(max_abs(Mat(k.adjoint() * k) - Mat::Identity(d, d)) <= 1e-10);
  }
}

TEST_CASE("matrix exponential agrees with an eigendecomposition oracle") {
  const int d = 2;
  const double tau = 0.1;
  Vec psi = state_psi_theta(M_PI / 4);
  auto strat = build_interaction_strategy(d, tau, pure_state({2, 2}, psi));

  // Independent propagator: H is Hermitian, so exp(-i tau H) diagonalizes.
  Mat h = interaction_hamiltonian(d);
  auto eig = eig_hermitian(h);
  Mat u = Mat::Zero(h.rows(), h.cols());
  for (int i = 0; i < h.rows(); ++i) {
    const Complex phase = std::exp(Complex(0, -tau * eig.values(i)));
    u += phase * (eig.vectors.col(i) * eig.vectors.col(i).adjoint());
  }
  Mat embed = Mat::Zero(4 * d, d);
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < 4; ++b) embed(a * 4 + b, a) = psi(b);
  Mat kref = u * embed;
  // The builder recovers the target vector from its density matrix, so
  // the Kraus operator is fixed only up to a global phase.
  int rmax = 0, cmax = 0;
  kref.cwiseAbs().maxCoeff(&rmax, &cmax);
  const Complex phase = strat.kraus[0](rmax, cmax) / kref(rmax, cmax);
  CHECK(std::abs(std::abs(phase) - 1.0) <= 1e-12);
  CHECK(max_abs(strat.kraus[0] - phase * kref) <= 1e-12);

  // First-round emitted state for the ground-state environment.
  Mat e0 = Mat::Zero(d, d);
  e0(0, 0) = 1;
  Mat emitted = partial_trace(strat.kraus[0] * e0 * strat.kraus[0].adjoint(), {d, 4}, {1});
  Mat emitted_ref = partial_trace(kref * e0 * kref.adjoint(), {d, 4}, {1});
  CHECK(max_abs(emitted - emitted_ref) <= 1e-12);
  CHECK(std::real(emitted.trace()) == Approx(1.0).margin(1e-10));
  // the interaction must actually move the state at tau > 0
  CHECK(max_abs(emitted - psi * psi.adjoint()) > 1e-4);
}

TEST_CASE("interaction strategy plays a two-qubit game consistently") {
  auto g = all_zero_game(2);
  auto strat = build_interaction_strategy(2, 0.15, pure_state({2, 2}, state_psi_theta(M_PI / 4)));
  auto sc = score_fincorr(g, strat);
  Mat e0 = Mat::Zero(2, 2);
  e0(0, 0) = 1;
  const double want = std::real((sc.omega * e0).trace());
  auto r = simulate(g, SimStrategy{FinCorrPrep{strat, DensityMatrix({2}, e0)}}, 100000, 41);
  CHECK(std::abs(r.mean_score - want) <= 4.0 * r.std_error);
}

TEST_CASE("interaction builder rejects bad inputs") {
  CHECK_THROWS_AS(build_interaction_strategy(1, 0.1, pure_state({2, 2}, state_psi_theta(M_PI / 4))),
                  ValidationError);
  CHECK_THROWS_AS(
      build_interaction_strategy(3, 0.1, DensityMatrix({2, 2}, Mat::Identity(4, 4) / 4.0)),
      ValidationError);
  CHECK_THROWS_AS(build_interaction_strategy(3, 0.1, pure_state({2}, ket0())), ValidationError);
}
