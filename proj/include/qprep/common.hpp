#pragma once

// Shared scalar types, error taxonomy and small utilities used across qprep.

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qprep {

using Complex = std::complex<double>;
using Mat = Eigen::MatrixXcd;   // dense complex matrix, the workhorse type
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

// Input/contract violations (bad dimensions, non-PSD density matrix, broken
// POVM completeness, malformed documents). CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures inside optimization (no convergence, infeasible model
// where one was required). CLI maps these to exit code 3.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Dense dimension cap: everything here is small (two qubits plus small
// environments); the cap guards symmetric-extension blowups.
inline constexpr int kDimCap = 4096;

namespace tol {
inline constexpr double kHermitian = 1e-8;   // max asymmetry accepted before symmetrization
inline constexpr double kDensity = 1e-9;     // PSD / trace-one slack for density matrices
inline constexpr double kPovm = 1e-9;        // element PSD / completeness slack
inline constexpr double kCert = 1e-7;        // dual certificate reconstruction slack
}  // namespace tol

inline int product(const std::vector<int>& dims) {
  int p = 1;
  for (int d : dims) {
    if (d < 1) throw ValidationError("subsystem dimension must be >= 1");
    p *= d;
  }
  return p;
}

// FNV-1a over raw bytes; used for content hashes (memoization keys, input
// digests in provenance records). Stable across runs and platforms with the
// same endianness, which is all reproducibility here requires.
struct Fnv1a {
  std::uint64_t state = 1469598103934665603ull;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 1099511628211ull;
    }
  }
  void add(double v) { bytes(&v, sizeof v); }
  void add(std::uint64_t v) { bytes(&v, sizeof v); }
  void add(int v) { std::uint64_t w = static_cast<std::uint64_t>(v); bytes(&w, sizeof w); }
  void add(const std::string& s) { add(static_cast<std::uint64_t>(s.size())); bytes(s.data(), s.size()); }
  void add(const Mat& m) {
    add(static_cast<int>(m.rows()));
    add(static_cast<int>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        add(m(i, j).real());
        add(m(i, j).imag());
      }
  }
};

}  // namespace qprep
