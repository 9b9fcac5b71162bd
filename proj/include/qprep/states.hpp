#pragma once

// Pauli operators, standard kets, and the named two-qubit states used by the
// worked examples and the CLI (`phi`, `psi-adapt`, `psi-theta(t)`, `singlet`).

#include <cmath>

#include "qprep/qmat.hpp"

namespace qprep {

inline const Mat& pauli_x() {
  static const Mat m = [] { Mat x(2, 2); x << 0, 1, 1, 0; return x; }();
  return m;
}
inline const Mat& pauli_y() {
  static const Mat m = [] {
    Mat y(2, 2);
    y << 0, Complex(0, -1), Complex(0, 1), 0;
    return y;
  }();
  return m;
}
inline const Mat& pauli_z() {
  static const Mat m = [] { Mat z(2, 2); z << 1, 0, 0, -1; return z; }();
  return m;
}
// Paulis indexed 1..3 = X, Y, Z (0 would be the identity).
inline const Mat& pauli(int i) {
  switch (i) {
    case 1: return pauli_x();
    case 2: return pauli_y();
    case 3: return pauli_z();
    default: throw ValidationError("pauli: index must be 1..3");
  }
}

inline Vec basis_ket(int d, int i) {
  Vec v = Vec::Zero(d);
  v(i) = 1.0;
  return v;
}

inline Vec ket0() { return basis_ket(2, 0); }
inline Vec ket1() { return basis_ket(2, 1); }
inline Vec ket_plus() { return (ket0() + ket1()) / std::sqrt(2.0); }
inline Vec ket_minus() { return (ket0() - ket1()) / std::sqrt(2.0); }
inline Vec ket_minus_i() { return (ket0() - Complex(0, 1) * ket1()) / std::sqrt(2.0); }

inline Vec kron_vec(const Vec& a, const Vec& b) {
  Vec out(a.size() * b.size());
  for (Eigen::Index i = 0; i < a.size(); ++i)
    out.segment(i * b.size(), b.size()) = a(i) * b;
  return out;
}

// (|00⟩ + |1+⟩)/√2 — the entangled target of the one-shot design examples.
inline Vec state_phi() {
  return (kron_vec(ket0(), ket0()) + kron_vec(ket1(), ket_plus())) / std::sqrt(2.0);
}

// (|0+⟩ + |1,-i⟩)/√2 — the target of the adaptive two-round examples.
inline Vec state_psi_adapt() {
  return (kron_vec(ket0(), ket_plus()) + kron_vec(ket1(), ket_minus_i())) / std::sqrt(2.0);
}

// cos θ |00⟩ + sin θ |11⟩.
inline Vec state_psi_theta(double theta) {
  return std::cos(theta) * kron_vec(ket0(), ket0()) +
         std::sin(theta) * kron_vec(ket1(), ket1());
}

// (|01⟩ - |10⟩)/√2.
inline Vec state_singlet() {
  return (kron_vec(ket0(), ket1()) - kron_vec(ket1(), ket0())) / std::sqrt(2.0);
}

// (|00⟩ + |11⟩)/√2.
inline Vec state_phi_plus() {
  return (kron_vec(ket0(), ket0()) + kron_vec(ket1(), ket1())) / std::sqrt(2.0);
}

inline DensityMatrix two_qubit_state(const Vec& psi) { return pure_state({2, 2}, psi); }

}  // namespace qprep
