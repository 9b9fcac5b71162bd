#pragma once

// Shared test helpers: independent oracles and random-object generators.
// Oracles deliberately use different computational routes than the library
// (index contractions spelled out, grid searches, direct path sums) so that
// agreement is evidence, not tautology.

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "qprep/qmat.hpp"
#include "qprep/states.hpp"

namespace testo {

using qprep::Complex;
using qprep::Mat;
using qprep::Vec;

// Random Hermitian matrix with entries of scale ~1, seeded mt19937.
inline Mat random_hermitian(int d, std::mt19937& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat a(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) a(i, j) = Complex(n(gen), n(gen));
  return 0.5 * (a + a.adjoint()).eval();
}

// Haar-ish random unit vector.
inline Vec random_ket(int d, std::mt19937& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (int i = 0; i < d; ++i) v(i) = Complex(n(gen), n(gen));
  return v / v.norm();
}

// Random density matrix: mixture of a few random pure states.
inline Mat random_density(int d, std::mt19937& gen, int rank = 0) {
  if (rank <= 0) rank = d;
  std::uniform_real_distribution<double> u(0.1, 1.0);
  Mat rho = Mat::Zero(d, d);
  double tot = 0.0;
  for (int r = 0; r < rank; ++r) {
    Vec v = random_ket(d, gen);
    double w = u(gen);
    rho += w * (v * v.adjoint());
    tot += w;
  }
  return rho / tot;
}

// Random POVM on C^d with m outcomes: normalize random PSD pieces.
inline std::vector<Mat> random_povm(int d, int m, std::mt19937& gen) {
  std::vector<Mat> g;
  Mat s = Mat::Zero(d, d);
  for (int i = 0; i < m; ++i) {
    Mat a(d, d);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) a(r, c) = Complex(n(gen), n(gen));
    Mat p = a * a.adjoint();
    g.push_back(p);
    s += p;
  }
  // M_i = S^{-1/2} G_i S^{-1/2} sums to identity exactly.
  Eigen::SelfAdjointEigenSolver<Mat> es(s);
  Mat si = es.operatorInverseSqrt();
  for (auto& p : g) p = (si * p * si).eval();
  return g;
}

// Oracle: partial trace over the second factor of a (da*db)x(da*db) matrix by
// explicit index contraction, independent of the library's stride logic.
inline Mat trace_out_second(const Mat& m, int da, int db) {
  Mat out = Mat::Zero(da, da);
  for (int i = 0; i < da; ++i)
    for (int j = 0; j < da; ++j)
      for (int t = 0; t < db; ++t) out(i, j) += m(i * db + t, j * db + t);
  return out;
}

// Oracle: best product-state value max_{|a>,|b>} <ab|W|ab> by grid search
// over Bloch angles (two qubits).  Lower-bounds the separable maximum.
inline double product_grid_max(const Mat& w, int steps = 24) {
  double best = -1e300;
  const double pi = 3.14159265358979323846;
  auto bloch = [](double th, double ph) {
    Vec v(2);
    v << std::cos(th / 2), std::exp(Complex(0, ph)) * std::sin(th / 2);
    return v;
  };
  for (int ia = 0; ia <= steps; ++ia)
    for (int ja = 0; ja < 2 * steps; ++ja)
      for (int ib = 0; ib <= steps; ++ib)
        for (int jb = 0; jb < 2 * steps; ++jb) {
          Vec a = bloch(pi * ia / steps, pi * ja / steps);
          Vec b = bloch(pi * ib / steps, pi * jb / steps);
          Vec ab = qprep::kron_vec(a, b);
          double val = (ab.adjoint() * w * ab)(0).real();
          best = std::max(best, val);
        }
  return best;
}

}  // namespace testo
