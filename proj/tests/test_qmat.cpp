#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qprep/qmat.hpp"
#include "qprep/states.hpp"
#include "helpers.hpp"

using namespace qprep;

TEST_CASE("kron basics") {
  CHECK(max_abs(kron(identity(2), identity(2)) - identity(4)) == 0.0);

  Mat zz = kron(pauli_z(), pauli_z());
  Vec diag(4);
  diag << 1, -1, -1, 1;
  CHECK(max_abs(zz - Mat(diag.asDiagonal())) == 0.0);

  // (X⊗X)|φ+⟩ = |φ+⟩, checked against direct 4-vector multiplication.
  Vec phip = state_phi_plus();
  Vec direct(4);
  Mat xx = kron(pauli_x(), pauli_x());
  for (int i = 0; i < 4; ++i) {
    direct(i) = 0;
    for (int j = 0; j < 4; ++j) direct(i) += xx(i, j) * phip(j);
  }
  CHECK(max_abs(direct - phip) < 1e-15);
  CHECK(max_abs(xx * phip - phip) < 1e-15);
}

TEST_CASE("partial trace") {
  std::mt19937 gen(7);
  Mat rho = testo::random_density(2, gen);
  Mat sigma = testo::random_density(3, gen);

  SECTION("product state factorizes") {
    Mat joint = kron(rho, sigma);
    Mat red = partial_trace(joint, {2, 3}, {0});
    CHECK(max_abs(red - rho) < 1e-12);
    Mat redB = partial_trace(joint, {2, 3}, {1});
    CHECK(max_abs(redB - sigma) < 1e-12);
  }

  SECTION("maximally entangled state reduces to I/2") {
    Vec phip = state_phi_plus();
    Mat proj = phip * phip.adjoint();
    Mat red = partial_trace(proj, {2, 2}, {0});
    Mat oracle = testo::trace_out_second(proj, 2, 2);
    CHECK(max_abs(red - oracle) < 1e-15);
    CHECK(max_abs(red - 0.5 * identity(2)) < 1e-12);
  }

  SECTION("trace preserved and convex-linear") {
    Mat a = testo::random_density(6, gen);
    Mat b = testo::random_density(6, gen);
    Mat ra = partial_trace(a, {2, 3}, {1});
    CHECK(std::abs(ra.trace().real() - a.trace().real()) < 1e-12);
    double p = 0.3;
    Mat mix = partial_trace(p * a + (1 - p) * b, {2, 3}, {1});
    Mat sep = p * partial_trace(a, {2, 3}, {1}) + (1 - p) * partial_trace(b, {2, 3}, {1});
    CHECK(max_abs(mix - sep) < 1e-12);
  }

  SECTION("three factors, middle kept") {
    Mat x = testo::random_density(2, gen);
    Mat y = testo::random_density(2, gen);
    Mat z = testo::random_density(2, gen);
    Mat joint = kron(kron(x, y), z);
    CHECK(max_abs(partial_trace(joint, {2, 2, 2}, {1}) - y) < 1e-12);
  }

  SECTION("dimension mismatch rejected") {
    CHECK_THROWS_AS(partial_trace(identity(4), {2, 3}, {0}), ValidationError);
  }
}

TEST_CASE("partial transpose") {
  std::mt19937 gen(21);

  SECTION("involution") {
    Mat m = testo::random_hermitian(6, gen);
    Mat back = partial_transpose(partial_transpose(m, {2, 3}, {1}), {2, 3}, {1});
    CHECK(max_abs(back - m) == 0.0);
  }

  SECTION("product state stays PSD, B-factor transposed") {
    Mat a = testo::random_density(2, gen);
    Mat b = testo::random_density(2, gen);
    Mat pt = partial_transpose(kron(a, b), {2, 2}, {1});
    CHECK(max_abs(pt - kron(a, b.transpose())) < 1e-15);
    CHECK(min_eigenvalue(pt) > -1e-12);
  }

  SECTION("maximally entangled state has min eigenvalue -1/2") {
    Vec phip = state_phi_plus();
    Mat pt = partial_transpose(phip * phip.adjoint(), {2, 2}, {1});
    // Oracle: full eigendecomposition of the 4x4.
    Eigen::SelfAdjointEigenSolver<Mat> es(pt);
    CHECK(std::abs(es.eigenvalues()(0) - (-0.5)) < 1e-12);
    CHECK(std::abs(min_eigenvalue(pt) - (-0.5)) < 1e-12);
  }

  SECTION("transpose of first factor on 2x3") {
    Mat m = testo::random_hermitian(6, gen);
    Mat pt_a = partial_transpose(m, {2, 3}, {0});
    Mat pt_b = partial_transpose(m, {2, 3}, {1});
    CHECK(max_abs(pt_a.transpose() - pt_b) < 1e-15);  // (T_A)ᵀ = T_B
  }
}

TEST_CASE("symmetric projector") {
  SECTION("single copy is identity") {
    CHECK(max_abs(symmetric_projector(1, 3) - identity(3)) == 0.0);
  }

  SECTION("two qubits: rank 3, trace = binomial") {
    Mat pi2 = symmetric_projector(2, 2);
    Eigen::SelfAdjointEigenSolver<Mat> es(pi2);
    int rank = 0;
    for (int i = 0; i < 4; ++i)
      if (es.eigenvalues()(i) > 0.5) ++rank;
    CHECK(rank == 3);
    CHECK(std::abs(pi2.trace().real() - 3.0) < 1e-12);  // C(2+2-1, 2) = 3
    CHECK(max_abs(pi2 * pi2 - pi2) < 1e-10);
    // Singlet is the orthogonal complement.
    Vec s = state_singlet();
    CHECK((pi2 * s).norm() < 1e-12);
  }

  SECTION("trace equals binomial(d+k-1, k) for a few (k, d)") {
    auto binom = [](int n, int k) {
      double r = 1;
      for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
      return r;
    };
    for (auto [k, d] : {std::pair{2, 3}, {3, 2}, {2, 4}}) {
      Mat p = symmetric_projector(k, d);
      CHECK(std::abs(p.trace().real() - binom(d + k - 1, k)) < 1e-9);
      CHECK(max_abs(p * p - p) < 1e-10);
    }
  }

  SECTION("dimension cap enforced") {
    CHECK_THROWS_AS(symmetric_projector(7, 7), ValidationError);
  }
}

TEST_CASE("hermitian eigensolve") {
  CHECK(eig_hermitian(identity(5)).values.isApproxToConstant(1.0, 1e-14));

  Vec d(4);
  d << 1, -1, -1, 1;
  auto e = eig_hermitian(kron(pauli_z(), pauli_z()));
  RVec expect(4);
  expect << -1, -1, 1, 1;
  CHECK((e.values - expect).cwiseAbs().maxCoeff() < 1e-14);

  std::mt19937 gen(3);
  Mat m = testo::random_hermitian(12, gen);
  auto em = eig_hermitian(m);
  Mat recon = em.vectors * em.values.asDiagonal() * em.vectors.adjoint();
  CHECK(max_abs(recon - m) < 1e-9);
  CHECK(max_abs(em.vectors.adjoint() * em.vectors - identity(12)) < 1e-12);
  for (int i = 1; i < 12; ++i) CHECK(em.values(i) >= em.values(i - 1));

  Mat bad(2, 2);
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS(eig_hermitian(bad), ValidationError);
}

TEST_CASE("trace norm") {
  std::mt19937 gen(11);
  Mat rho = testo::random_density(5, gen);
  CHECK(std::abs(trace_norm(rho) - 1.0) < 1e-10);
  CHECK(trace_norm(rho - rho) == 0.0);
  Mat diff = ket0() * ket0().adjoint() - ket1() * ket1().adjoint();
  // Oracle: eigenvalues of diag(1, -1) are ±1 by direct 2x2 solve.
  CHECK(std::abs(trace_norm(diff) - 2.0) < 1e-14);
}

TEST_CASE("hermitize guards") {
  Mat m(2, 2);
  m << 1.0, Complex(0, 1e-10), Complex(0, 1e-10), 2.0;  // slightly asymmetric imaginary part
  Mat h = hermitize(m);
  CHECK(max_abs(h - h.adjoint()) == 0.0);

  Mat bad(2, 2);
  bad << 0, 1, 0.5, 0;
  CHECK_THROWS_AS(hermitize(bad), ValidationError);
}

TEST_CASE("density matrix validation") {
  CHECK_NOTHROW(two_qubit_state(state_phi()));
  CHECK_NOTHROW(DensityMatrix({2, 2}, 0.25 * identity(4)));
  CHECK_THROWS_AS(DensityMatrix({2, 2}, 0.5 * identity(4)), ValidationError);   // trace 2
  Mat neg = identity(4) / 4.0;
  neg(0, 0) = -0.25;
  neg(1, 1) = 0.75;
  CHECK_THROWS_AS(DensityMatrix({2, 2}, neg), ValidationError);                 // negative eigenvalue
  CHECK_THROWS_AS(DensityMatrix({2, 3}, identity(4) / 4.0), ValidationError);   // dims mismatch
}

TEST_CASE("povm validation") {
  Mat p0 = ket0() * ket0().adjoint();
  Mat p1 = ket1() * ket1().adjoint();
  CHECK_NOTHROW(Povm({p0, p1}));
  CHECK_THROWS_AS(Povm({p0, p0}), ValidationError);  // doesn't sum to identity
  Mat skew = p0;
  skew(0, 1) = 0.5;  // non-Hermitian element
  CHECK_THROWS_AS(Povm({skew, identity(2) - skew}), ValidationError);
  CHECK_THROWS_AS(Povm({1.5 * p0, identity(2) - 1.5 * p0}), ValidationError);  // element not PSD

  std::mt19937 gen(5);
  auto els = testo::random_povm(4, 6, gen);
  CHECK_NOTHROW(Povm(els));
}

TEST_CASE("named states") {
  for (auto& v : {state_phi(), state_psi_adapt(), state_psi_theta(0.3), state_singlet()})
    CHECK(std::abs(v.norm() - 1.0) < 1e-14);
  // |φ⟩ = (|00⟩+|1+⟩)/√2 has ⟨00|φ⟩ = 1/√2.
  CHECK(std::abs(state_phi()(0) - Complex(1 / std::sqrt(2.0), 0)) < 1e-15);
  // ψ-adapt second qubit of the |1⟩ branch is (|0⟩-i|1⟩)/√2.
  CHECK(std::abs(state_psi_adapt()(3) - Complex(0, -0.5)) < 1e-15);
}
