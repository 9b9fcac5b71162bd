// Witness-following games: POVMs from witnesses and gradients, the
// tally-lattice game construction, and the two-qubit entanglement
// quantification instance.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "qprep/gradgame.hpp"
#include "qprep/rng.hpp"

using namespace qprep;
using Catch::Approx;

namespace {

Mat family_at(const std::vector<double>& t) { return ent_quant_witness(t[0]); }

// Parse "a,b" config labels back into lattice coordinates.
std::vector<int> parse_label(const std::string& label) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= label.size()) {
    size_t next = label.find(',', pos);
    if (next == std::string::npos) next = label.size();
    out.push_back(std::stoi(label.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

DensityMatrix random_two_qubit_state(std::uint64_t stream) {
  CounterRng rng(4242, stream);
  return DensityMatrix({2, 2}, detail::random_mixed({2, 2}, rng));
}

}  // namespace

TEST_CASE("binary entropy in bits") {
  CHECK(binary_entropy(0.5) == 1.0);
  CHECK(binary_entropy(0.0) == 0.0);
  CHECK(binary_entropy(1.0) == 0.0);
  CHECK(binary_entropy(0.11) == Approx(0.49991).margin(1e-4));
  for (double x : {0.07, 0.3, 0.44})
    CHECK(binary_entropy(x) == Approx(binary_entropy(1.0 - x)).margin(1e-14));
  CHECK_THROWS_AS(binary_entropy(-0.1), ValidationError);
  CHECK_THROWS_AS(binary_entropy(1.1), ValidationError);
}

TEST_CASE("quantification witness pins its target state") {
  for (double th : {0.3, M_PI / 4, 1.2}) {
    Mat w = ent_quant_witness(th);
    auto psi = pure_state({2, 2}, state_psi_theta(th));
    CHECK(std::real((w * psi.matrix).trace()) == Approx(1.0).margin(1e-12));
    auto e = eig_hermitian(w);
    CHECK(e.values(3) == Approx(1.0).margin(1e-9));
    CHECK(e.values(2) <= 1e-9);  // the unit eigenvalue is simple
  }

  Mat expected = 0.5 * (kron(pauli(3), pauli(3)) + kron(Mat::Identity(2, 2), pauli(3)));
  CHECK((ent_quant_witness(0.0) - expected).cwiseAbs().maxCoeff() <= 1e-12);
  Vec zz = kron_vec(ket0(), ket0());
  CHECK((ent_quant_witness(0.0) * zz - zz).norm() <= 1e-12);

  for (int i = 0; i < 100; ++i) {
    const double th = -M_PI + 2 * M_PI * i / 99.0;
    auto e = eig_hermitian(ent_quant_witness(th));
    CHECK(std::max(std::abs(e.values(0)), std::abs(e.values(3))) <= 1.0 + 1e-9);
  }
}

TEST_CASE("witness estimation POVM") {
  auto zero = povm_from_witness(Mat::Zero(4, 4));
  CHECK((zero.elements[0] - Mat::Identity(4, 4) * 0.5).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((zero.elements[1] - Mat::Identity(4, 4) * 0.5).cwiseAbs().maxCoeff() <= 1e-14);

  auto parity = povm_from_witness(kron(pauli(3), pauli(3)));
  Mat even = Mat::Zero(4, 4), odd = Mat::Zero(4, 4);
  even(0, 0) = even(3, 3) = 1.0;
  odd(1, 1) = odd(2, 2) = 1.0;
  CHECK((parity.elements[1] - even).cwiseAbs().maxCoeff() <= 1e-14);
  CHECK((parity.elements[0] - odd).cwiseAbs().maxCoeff() <= 1e-14);

  const Mat w = ent_quant_witness(0.6);
  auto p = povm_from_witness(w);
  CHECK((p.elements[0] + p.elements[1] - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-14);
  for (std::uint64_t i = 0; i < 100; ++i) {
    auto rho = random_two_qubit_state(i);
    const double via_povm = std::real(((p.elements[1] - p.elements[0]) * rho.matrix).trace());
    const double direct = std::real((w * rho.matrix).trace());
    CHECK(std::abs(via_povm - direct) <= 1e-12);
  }

  CHECK_THROWS_AS(povm_from_witness(1.2 * kron(pauli(3), pauli(3))), ValidationError);
}

TEST_CASE("gradient estimation POVM") {
  // Closed-form element of the quantification family at angle zero.
  auto grad0 = povm_from_gradient(family_at, {0.0}, 0, 1.0);
  Mat plus = pure_state({2}, ket_plus()).matrix, minus = pure_state({2}, ket_minus()).matrix;
  Mat want = kron(plus, (Mat::Identity(2, 2) - pauli(1)) * 0.5) +
             kron(minus, (Mat::Identity(2, 2) + pauli(1)) * 0.5);
  CHECK((grad0.elements[0] - want).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK((grad0.elements[0] + grad0.elements[1] - Mat::Identity(4, 4)).cwiseAbs().maxCoeff() <=
        1e-12);

  for (double th : {0.3, 0.9}) {
    const double h = 1e-5;
    Mat fd = (ent_quant_witness(th + h) - ent_quant_witness(th - h)) / (2 * h);
    auto g = povm_from_gradient(family_at, {th}, 0, 1.0);
    CHECK((g.elements[1] - g.elements[0] - fd).cwiseAbs().maxCoeff() <= 1e-8);
  }

  // The declared bound rescales the encoded derivative.
  {
    auto g = povm_from_gradient(family_at, {0.4}, 0, 2.0);
    const double h = 1e-5;
    Mat fd = (ent_quant_witness(0.4 + h) - ent_quant_witness(0.4 - h)) / (2 * h * 2.0);
    CHECK((g.elements[1] - g.elements[0] - fd).cwiseAbs().maxCoeff() <= 1e-8);
  }

  auto steep = [](const std::vector<double>& t) {
    return std::sin(5.0 * t[0]) * kron(pauli(3), pauli(3));
  };
  CHECK_THROWS_AS(povm_from_gradient(steep, {0.0}, 0, 1.0), ValidationError);
  CHECK_THROWS_AS(povm_from_gradient(family_at, {0.0}, 1, 1.0), ValidationError);
}

TEST_CASE("tally-lattice game construction") {
  auto g1 = ent_quant_game(0.1, 1);
  REQUIRE(validate(g1).empty());
  CHECK(g1.configs[0].size() == 1);
  CHECK(g1.configs[1].size() == 4);

  // Single round: the POVM is the sampling mixture of the two base
  // measurements at the initial angle.
  auto spec1 = ent_quant_spec(0.1, 1);
  const auto& m = g1.povms[0][0];
  REQUIRE(m.outcomes() == 4);
  auto wit = povm_from_witness(ent_quant_witness(0.0));
  auto grd = povm_from_gradient(family_at, {0.0}, 0, 1.0);
  auto idx = [&](const std::string& label) {
    for (int o = 0; o < m.outcomes(); ++o)
      if (m.labels[o] == label) return o;
    FAIL("missing outcome " + label);
    return -1;
  };
  CHECK((m.elements[idx("1,0")] - spec1.sampling[0][0] * wit.elements[1]).cwiseAbs().maxCoeff() <=
        1e-14);
  CHECK((m.elements[idx("-1,0")] - spec1.sampling[0][0] * wit.elements[0]).cwiseAbs().maxCoeff() <=
        1e-14);
  CHECK((m.elements[idx("0,1")] - spec1.sampling[0][1] * grd.elements[1]).cwiseAbs().maxCoeff() <=
        1e-14);
  CHECK((m.elements[idx("0,-1")] - spec1.sampling[0][1] * grd.elements[0]).cwiseAbs().maxCoeff() <=
        1e-14);

  // Reachability: level k holds exactly the tallies of 1-norm at most k
  // with k's parity, (k+1)^2 of them for one walked parameter.
  auto g5 = ent_quant_game(0.1, 5);
  REQUIRE(validate(g5).empty());
  for (int k = 0; k <= 5; ++k) {
    CHECK(g5.configs[k].size() == static_cast<size_t>((k + 1) * (k + 1)));
    for (const auto& label : g5.configs[k]) {
      auto s = parse_label(label);
      REQUIRE(s.size() == 2);
      const int l1 = std::abs(s[0]) + std::abs(s[1]);
      CHECK(l1 <= k);
      CHECK((l1 - k) % 2 == 0);
    }
  }
}

TEST_CASE("iid score matches exhaustive path enumeration") {
  const int n = 5;
  auto spec = ent_quant_spec(0.1, n);
  auto g = build_game(spec, n);
  double p0sum = 0;
  for (const auto& p : spec.sampling) p0sum += p[0];

  for (auto rho : {pure_state({2, 2}, state_psi_theta(0.7)),
                   DensityMatrix({2, 2}, Mat::Identity(4, 4) * 0.25)}) {
    double total = 0;
    for (int code = 0; code < (1 << (2 * n)); ++code) {
      std::vector<int> s = {0, 0};
      double prob = 1.0;
      int c = code;
      for (int k = 0; k < n; ++k) {
        const int x = c & 1;
        const int a = (c >> 1) & 1 ? 1 : -1;
        c >>= 2;
        const std::vector<double> theta = {0.1 * s[1]};
        Povm base = x == 0 ? povm_from_witness(ent_quant_witness(theta[0]))
                           : povm_from_gradient(family_at, theta, 0, 1.0);
        prob *= spec.sampling[k][x] *
                std::real((base.elements[a == 1 ? 1 : 0] * rho.matrix).trace());
        s[x] += a;
      }
      total += prob * spec.final_score({0.1 * s[1]}, s[0] / p0sum);
    }
    CHECK(score_iid(g, rho) == Approx(total).margin(1e-10));
  }

  // Payoff scaling passes straight through the average score.
  auto scaled = spec;
  auto inner = spec.final_score;
  scaled.final_score = [inner](const std::vector<double>& t, double v) {
    return 2.5 * inner(t, v);
  };
  auto gs = build_game(scaled, n);
  auto rho = pure_state({2, 2}, state_psi_theta(0.7));
  CHECK(score_iid(gs, rho) == Approx(2.5 * score_iid(g, rho)).margin(1e-12));
}

TEST_CASE("gradient spec validation") {
  auto good = ent_quant_spec(0.1, 3);
  CHECK(validate_gradient_spec(good, 3).empty());
  CHECK_FALSE(validate_gradient_spec(good, 4).empty());  // sampling length mismatch

  auto unnormalized = good;
  unnormalized.sampling[1] = {0.3, 0.3};
  CHECK_FALSE(validate_gradient_spec(unnormalized, 3).empty());

  auto wrong_len = good;
  wrong_len.sampling[0] = {1.0};
  CHECK_FALSE(validate_gradient_spec(wrong_len, 3).empty());

  auto loud = good;
  loud.witness = [](const std::vector<double>& t) { return 1.5 * ent_quant_witness(t[0]); };
  CHECK_FALSE(validate_gradient_spec(loud, 3).empty());

  auto blank = good;
  blank.final_score = nullptr;
  CHECK_FALSE(validate_gradient_spec(blank, 3).empty());
  CHECK_THROWS_AS(build_game(unnormalized, 3), ValidationError);
  CHECK_THROWS_AS(ent_quant_spec(1.4, 3), ValidationError);
}

TEST_CASE("separable maximum of the witness") {
  CHECK(delta_theta(M_PI / 4) == Approx(0.5).margin(1e-6));
  for (double th : {0.1, 0.5, 1.0, 1.4}) {
    const double d = delta_theta(th);
    CHECK(d <= 1.0 + 1e-8);
    CHECK(std::abs(delta_theta(th + 1e-3) - d) <= 0.1);
  }
  CHECK(delta_theta(M_PI / 4) < 1.0 - 1e-3);
}

TEST_CASE("quantification curves and bounds") {
  // Long protocol: the honest-family score over the angle is unimodal
  // with its peak at the maximally entangled angle.
  auto g41 = ent_quant_game(0.1, 41);
  std::vector<double> thetas;
  for (int i = 1; i <= 25; ++i) thetas.push_back(M_PI / 2 * i / 26.0);
  auto curve = ent_quant_iid_curve(g41, thetas);
  size_t peak = 0;
  for (size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > curve[peak]) peak = i;
  CHECK(std::abs(thetas[peak] - M_PI / 4) <= 0.3);
  for (size_t i = 0; i + 1 < curve.size(); ++i) {
    if (i + 1 <= peak)
      CHECK(curve[i + 1] >= curve[i] - 1e-9);
    else
      CHECK(curve[i + 1] <= curve[i] + 1e-9);
  }
  CHECK(curve[peak] == Approx(0.596348).margin(1e-4));

  // Short protocol: scores of negativity-capped players grow with the
  // allowed negativity.
  auto g5 = ent_quant_game(0.1, 5);
  double prev = -1.0;
  for (double cap : {0.05, 0.15, 0.3, 0.6}) {
    const double bound = max_score_constrained(g5, make_negativity_ball({2, 2}, cap)).value();
    CHECK(bound >= prev - 1e-6);
    prev = bound;
  }

  const double sep5 = max_score_constrained(g5, make_sep_outer(1, {2, 2})).value();
  CHECK(sep5 >= 0.0);
  CHECK(sep5 <= binary_entropy(0.5));

  std::ostringstream csv;
  write_gradient_curve(csv, {0.5, 0.7}, {0.12, 0.34}, sep5, {{0.1, 0.2}, {0.3, 0.4}});
  std::istringstream in(csv.str());
  std::string header;
  std::getline(in, header);
  CHECK(header == "theta,iid_score,separable_bound,negativity_bound[0.1],negativity_bound[0.3]");
  std::string row;
  int rows = 0;
  while (std::getline(in, row)) {
    double th, iid, sep, n1, n2;
    REQUIRE(std::sscanf(row.c_str(), "%lf,%lf,%lf,%lf,%lf", &th, &iid, &sep, &n1, &n2) == 5);
    CHECK(sep == Approx(sep5).epsilon(1e-10));
    CHECK(n1 == 0.2);
    CHECK(n2 == 0.4);
    ++rows;
  }
  CHECK(rows == 2);
}
