#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "game_oracles.hpp"
#include "helpers.hpp"
#include "qprep/game.hpp"
#include "qprep/states.hpp"

using namespace qprep;
using Catch::Approx;

namespace {

// n rounds of the identity measurement; every run scores 1.
PreparationGame trivial_game(int n, std::vector<int> dims) {
  PreparationGame g;
  g.dims = std::move(dims);
  const int d = g.dim();
  g.configs.assign(n + 1, {"go"});
  g.configs[0] = {"start"};
  for (int k = 0; k < n; ++k)
    g.povms.push_back({Povm({Mat::Identity(d, d)}, {"go"})});
  g.score["go"] = 1.0;
  return g;
}

// Score 1 iff every round's computational-basis measurement of a
// two-qubit state lands on |00>; a failure is absorbing.
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

// Two-round single-qubit game with noisy measurements; its optimum is
// away from the score range's endpoints.
PreparationGame noisy_two_round() {
  PreparationGame g;
  g.dims = {2};
  Mat id = Mat::Identity(2, 2);
  g.configs = {{"start"}, {"p", "m"}, {"w", "l"}};
  g.povms.push_back({Povm({0.3 * id + 0.2 * pauli_z(), 0.7 * id - 0.2 * pauli_z()}, {"p", "m"})});
  g.povms.push_back({Povm({0.25 * id + 0.25 * pauli_x(), 0.75 * id - 0.25 * pauli_x()}, {"w", "l"}),
                     Povm({0.25 * id + 0.1 * pauli_y(), 0.75 * id - 0.1 * pauli_y()}, {"w", "l"})});
  g.score["w"] = 1.0;
  g.score["l"] = 0.2;
  return g;
}

// Random game with two configurations per round and full two-outcome
// measurements everywhere.
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

}  // namespace

TEST_CASE("well-formed games validate cleanly") {
  CHECK(validate(trivial_game(3, {2})).empty());
  CHECK(validate(all_zero_game(2)).empty());
  CHECK(validate(noisy_two_round()).empty());
}

TEST_CASE("validation reports defective measurements with the deviation") {
  auto g = trivial_game(2, {2});
  g.povms[1][0] = Povm::unchecked({0.9 * Mat::Identity(2, 2)}, {"go"});
  auto bad = validate(g);
  REQUIRE_FALSE(bad.empty());
  bool found = false;
  for (const auto& b : bad)
    if (b.find("sum to identity") != std::string::npos && b.find("0.1") != std::string::npos)
      found = true;
  CHECK(found);
  CHECK_THROWS_AS(score_iid(g, DensityMatrix({2}, Mat::Identity(2, 2) / 2.0)), ValidationError);
}

TEST_CASE("validation reports dangling labels, missing scores, missing measurements") {
  auto g = all_zero_game(2);
  SECTION("outcome label that names no configuration") {
    g.povms[0][0].labels[1] = "zz";
    auto bad = validate(g);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].find("'zz'") != std::string::npos);
  }
  SECTION("final configuration without a score") {
    g.score.erase("fail");
    auto bad = validate(g);
    REQUIRE(bad.size() == 1);
    CHECK(bad[0].find("no score") != std::string::npos);
  }
  SECTION("configuration without a measurement") {
    g.povms[1].pop_back();
    auto bad = validate(g);
    REQUIRE_FALSE(bad.empty());
    CHECK(bad[0].find("1 measurements for 2 configurations") != std::string::npos);
  }
  SECTION("duplicate configuration label") {
    g.configs[1] = {"ok", "ok"};
    CHECK_FALSE(validate(g).empty());
  }
  SECTION("wrong measurement dimension") {
    g.povms[1][1] = Povm({Mat::Identity(2, 2)}, {"fail"});
    CHECK_FALSE(validate(g).empty());
  }
}

TEST_CASE("identity game scores one for every state") {
  auto g = trivial_game(4, {2});
  std::mt19937 gen(11);
  for (int t = 0; t < 5; ++t) {
    DensityMatrix rho({2}, testo::random_density(2, gen));
    CHECK(score_iid(g, rho) == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("all-zeros game: certain on |00>, (1/4)^n on the maximally mixed state") {
  auto g3 = all_zero_game(3);
  DensityMatrix zz = pure_state({2, 2}, kron_vec(ket0(), ket0()));
  CHECK(score_iid(g3, zz) == Approx(1.0).margin(1e-12));
  DensityMatrix mixed({2, 2}, Mat::Identity(4, 4) / 4.0);
  CHECK(score_iid(g3, mixed) == Approx(std::pow(0.25, 3)).margin(1e-12));
  CHECK(score_iid(all_zero_game(1), mixed) == Approx(0.25).margin(1e-12));
}

TEST_CASE("one-round optimum over all states is the top eigenvalue of the score operator") {
  std::mt19937 gen(23);
  for (int t = 0; t < 4; ++t) {
    PreparationGame g;
    g.dims = {3};
    g.configs = {{"start"}, {"a", "b", "c"}};
    g.povms.push_back({Povm(testo::random_povm(3, 3, gen), {"a", "b", "c"})});
    std::uniform_real_distribution<double> u(-1.0, 2.0);
    g.score["a"] = u(gen);
    g.score["b"] = u(gen);
    g.score["c"] = u(gen);
    Mat w = g.score["a"] * g.povms[0][0].elements[0] + g.score["b"] * g.povms[0][0].elements[1] +
            g.score["c"] * g.povms[0][0].elements[2];
    auto table = max_score_constrained(g, make_all_states({3}));
    CHECK(table.value() == Approx(max_eigenvalue(hermitize(w))).margin(1e-10));
    REQUIRE(table.values[0][0].witness.has_value());
    CHECK(table.values[0][0].tight);
  }
}

TEST_CASE("a single-state set reduces the optimum to the repeated-state score") {
  std::mt19937 gen(31);
  for (int t = 0; t < 4; ++t) {
    auto g = random_two_config_game(3, 2, gen);
    DensityMatrix rho({2}, testo::random_density(2, gen));
    auto table = max_score_constrained(g, make_singleton(rho));
    CHECK(table.value() == Approx(score_iid(g, rho)).margin(1e-10));
  }
}

TEST_CASE("two-round optimum matches a fine-grid brute force") {
  auto g = noisy_two_round();
  auto table = max_score_constrained(g, make_all_states({2}));
  // Hand recursion: round-2 values 0.6 and 0.48, then the top eigenvalue
  // of 0.516 I + 0.024 Z.
  CHECK(table.values[1][0].value == Approx(0.6).margin(1e-10));
  CHECK(table.values[1][1].value == Approx(0.48).margin(1e-10));
  CHECK(table.value() == Approx(0.54).margin(1e-10));
  const double grid = testo::grid_adaptive_score(g, testo::bloch_grid(40, 25));
  CHECK(table.value() >= grid - 1e-9);
  CHECK(table.value() == Approx(grid).margin(1e-2));
}

TEST_CASE("score table stays within the payoff range and carries tight witnesses") {
  std::mt19937 gen(41);
  auto g = random_two_config_game(2, 2, gen);
  for (const auto& set : {make_all_states({2}), make_sep_outer(1, {1, 2})}) {
    auto table = max_score_constrained(g, set);
    CHECK(table.value() >= g.min_score() - 1e-7);
    CHECK(table.value() <= g.max_score() + 1e-7);
    for (int k = 0; k < 2; ++k)
      for (const auto& e : table.values[k]) {
        REQUIRE(e.witness.has_value());
        CHECK(e.tight);
      }
  }
}

TEST_CASE("optimal score is monotone under state-set relaxation") {
  auto g = noisy_two_round();
  DensityMatrix rho = pure_state({2}, ket_plus());
  const double single = max_score_constrained(g, make_singleton(rho)).value();
  const double ball = max_score_constrained(g, make_eps_ball(rho, 0.3)).value();
  const double all = max_score_constrained(g, make_all_states({2})).value();
  CHECK(single <= ball + 1e-7);
  CHECK(ball <= all + 1e-7);

  auto g2 = all_zero_game(2);
  DensityMatrix rho2 = pure_state({2, 2}, kron_vec(ket_plus(), ket0()));
  const double single2 = max_score_constrained(g2, make_singleton(rho2)).value();
  const double ball2 = max_score_constrained(g2, make_eps_ball(rho2, 0.2)).value();
  const double sep2 = max_score_constrained(g2, make_sep_outer(1, {2, 2})).value();
  const double all2 = max_score_constrained(g2, make_all_states({2, 2})).value();
  CHECK(single2 <= ball2 + 1e-7);
  CHECK(ball2 <= all2 + 1e-7);
  CHECK(sep2 <= all2 + 1e-7);
}

TEST_CASE("rescaling the payoffs rescales every table entry") {
  auto g = noisy_two_round();
  const double a = 2.5, b = -0.7;
  auto g2 = g;
  for (auto& [s, v] : g2.score) v = a * v + b;

  auto t1 = max_score_constrained(g, make_all_states({2}));
  auto t2 = max_score_constrained(g2, make_all_states({2}));
  for (size_t k = 0; k < t1.values.size(); ++k)
    for (size_t i = 0; i < t1.values[k].size(); ++i)
      CHECK(t2.values[k][i].value == Approx(a * t1.values[k][i].value + b).margin(1e-12));

  auto s1 = max_score_constrained(g, make_sep_outer(1, {1, 2}));
  auto s2 = max_score_constrained(g2, make_sep_outer(1, {1, 2}));
  CHECK(s2.value() == Approx(a * s1.value() + b).margin(1e-6));
}

TEST_CASE("a memoryless emitter scores like the state it emits") {
  std::mt19937 gen(53);
  auto g = random_two_config_game(3, 3, gen);
  Vec psi = testo::random_ket(3, gen);
  // One Kraus operator C^1 -> C^1 (x) C^3: emit |psi> and keep a trivial memory.
  auto strat = make_fincorr_strategy({Mat(psi)}, 1,
                                     make_singleton(DensityMatrix({1}, Mat::Identity(1, 1))));
  auto sc = score_fincorr(g, strat);
  CHECK(sc.value == Approx(score_iid(g, pure_state({3}, psi))).margin(1e-10));
}

TEST_CASE("a rotating memory that emits a fixed state scores like that state") {
  std::mt19937 gen(59);
  auto g = random_two_config_game(2, 4, gen);
  g.dims = {2, 2};
  Vec psi = testo::random_ket(4, gen);
  // Isometry x -> (Ux) (x) |psi>: the memory rotates unitarily and the
  // emitted state never depends on it.
  Mat u = Eigen::HouseholderQR<Mat>(testo::random_hermitian(2, gen) +
                                    Complex(0, 1) * testo::random_hermitian(2, gen))
              .householderQ();
  Mat v = Mat::Zero(8, 2);
  for (int c = 0; c < 2; ++c) {
    Vec col = kron_vec(u.col(c), psi);
    v.col(c) = col;
  }
  const double want = score_iid(g, pure_state({2, 2}, psi));
  for (const auto& env : {make_all_states({2}),
                          make_singleton(DensityMatrix({2}, testo::random_density(2, gen)))}) {
    auto sc = score_fincorr(g, make_fincorr_strategy({v}, 2, env));
    CHECK(sc.value == Approx(want).margin(1e-10));
  }
}

TEST_CASE("memory-score operator matches the explicit path sum") {
  std::mt19937 gen(61);
  for (int t = 0; t < 5; ++t) {
    auto g = random_two_config_game(3, 2, gen);
    auto kraus = testo::random_instrument(2, 2, 2, gen);
    auto strat = make_fincorr_strategy(std::move(kraus), 2, make_all_states({2}));
    auto sc = score_fincorr(g, strat);
    Mat ref = testo::path_sum_omega(g, strat);
    CHECK(max_abs(sc.omega - ref) <= 1e-10);
    CHECK(sc.value == Approx(max_eigenvalue(hermitize(ref))).margin(1e-9));
    CHECK(sc.value >= g.min_score() - 1e-9);
    CHECK(sc.value <= g.max_score() + 1e-9);
  }
}

TEST_CASE("claimed bounds on a correlated player are certified or refuted") {
  std::mt19937 gen(67);
  auto g = random_two_config_game(3, 2, gen);
  auto strat = make_fincorr_strategy(testo::random_instrument(2, 2, 3, gen), 2,
                                     make_all_states({2}));
  auto sc = score_fincorr(g, strat);
  CHECK(fincorr_dual_check(sc.omega, sc.value, strat.env_set));
  CHECK(fincorr_dual_check(sc.omega, sc.value + 1e-4, strat.env_set));
  CHECK_FALSE(fincorr_dual_check(sc.omega, sc.value - 0.01, strat.env_set));

  DensityMatrix mem({2}, testo::random_density(2, gen));
  auto pinned = make_fincorr_strategy(strat.kraus, 2, make_singleton(mem));
  auto sp = score_fincorr(g, pinned);
  CHECK(sp.value == Approx(std::real((sc.omega * mem.matrix).trace())).margin(1e-10));
  CHECK(fincorr_dual_check(sp.omega, sp.value, pinned.env_set));
  CHECK_FALSE(fincorr_dual_check(sp.omega, sp.value - 0.01, pinned.env_set));

  auto ball = make_fincorr_strategy(strat.kraus, 2, make_eps_ball(mem, 0.15));
  auto sb = score_fincorr(g, ball);
  CHECK(sb.value >= sp.value - 1e-8);
  CHECK(fincorr_dual_check(sb.omega, sb.value + 1e-6, ball.env_set));
  CHECK_FALSE(fincorr_dual_check(sb.omega, sb.value - 0.01, ball.env_set));
}

TEST_CASE("strategy construction rejects non-trace-preserving Kraus sets") {
  CHECK_THROWS_AS(
      make_fincorr_strategy({0.9 * Mat::Identity(2, 1)}, 1,
                            make_singleton(DensityMatrix({1}, Mat::Identity(1, 1)))),
      ValidationError);
  CHECK_THROWS_AS(make_fincorr_strategy({}, 1, make_all_states({1})), ValidationError);
  // Memory set dimension must match the declared memory dimension.
  CHECK_THROWS_AS(make_fincorr_strategy({Mat::Identity(4, 2)}, 2, make_all_states({3})),
                  ValidationError);
}
