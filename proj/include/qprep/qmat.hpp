#pragma once

// Dense complex Hermitian linear algebra with tensor-product structure:
// Kronecker products, partial trace/transpose, symmetric projectors,
// Hermitian eigensolves, trace norm.  Subsystem ordering convention: the
// leftmost tensor factor is the most significant index, everywhere.

#include <algorithm>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include "qprep/common.hpp"

namespace qprep {

inline Mat dag(const Mat& a) { return a.adjoint(); }

inline Mat identity(int d) { return Mat::Identity(d, d); }

inline double max_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

// Symmetrize to exact Hermitian form; rejects matrices whose asymmetry
// exceeds `slack` so accumulated drift in recursions cannot pass silently.
inline Mat hermitize(const Mat& a, double slack = tol::kHermitian) {
  if (a.rows() != a.cols()) throw ValidationError("hermitize: matrix not square");
  double asym = max_abs(a - a.adjoint());
  if (asym > slack) {
    throw ValidationError("hermitize: asymmetry " + std::to_string(asym) +
                          " exceeds tolerance " + std::to_string(slack));
  }
  return 0.5 * (a + a.adjoint());
}

inline Mat kron(const Mat& a, const Mat& b) {
  return Eigen::kroneckerProduct(a, b).eval();
}

inline Mat kron(const std::vector<Mat>& factors) {
  if (factors.empty()) throw ValidationError("kron: empty factor list");
  Mat out = factors[0];
  for (std::size_t i = 1; i < factors.size(); ++i) out = kron(out, factors[i]);
  return out;
}

namespace detail {

// Decompose a flat tensor index into per-subsystem digits (leftmost factor
// most significant).
inline void check_dims(const Mat& m, const std::vector<int>& dims) {
  int total = product(dims);
  if (m.rows() != total || m.cols() != total)
    throw ValidationError("tensor dims inconsistent with matrix size");
}

inline std::vector<int> strides_of(const std::vector<int>& dims) {
  std::vector<int> strides(dims.size());
  int s = 1;
  for (int k = static_cast<int>(dims.size()) - 1; k >= 0; --k) {
    strides[k] = s;
    s *= dims[k];
  }
  return strides;
}

}  // namespace detail

// Reduced operator on the kept subsystems (indices into `dims`, interpreted
// as a set); the complement is traced out.
inline Mat partial_trace(const Mat& m, const std::vector<int>& dims,
                         const std::vector<int>& keep) {
  detail::check_dims(m, dims);
  const int r = static_cast<int>(dims.size());
  std::vector<bool> kept(r, false);
  for (int k : keep) {
    if (k < 0 || k >= r) throw ValidationError("partial_trace: subsystem index out of range");
    kept[k] = true;
  }
  std::vector<int> keep_dims, trace_dims, keep_idx, trace_idx;
  for (int k = 0; k < r; ++k) {
    (kept[k] ? keep_dims : trace_dims).push_back(dims[k]);
    (kept[k] ? keep_idx : trace_idx).push_back(k);
  }
  const int dk = keep_dims.empty() ? 1 : product(keep_dims);
  const int dt = trace_dims.empty() ? 1 : product(trace_dims);
  const auto strides = detail::strides_of(dims);

  // Flat index of the full space assembled from (kept digits, traced digits).
  auto flat = [&](int ik, int it) {
    int idx = 0;
    for (std::size_t a = keep_idx.size(); a-- > 0;) {
      idx += (ik % keep_dims[a]) * strides[keep_idx[a]];
      ik /= keep_dims[a];
    }
    for (std::size_t a = trace_idx.size(); a-- > 0;) {
      idx += (it % trace_dims[a]) * strides[trace_idx[a]];
      it /= trace_dims[a];
    }
    return idx;
  };

  Mat out = Mat::Zero(dk, dk);
  for (int i = 0; i < dk; ++i)
    for (int j = 0; j < dk; ++j) {
      Complex acc = 0;
      for (int t = 0; t < dt; ++t) acc += m(flat(i, t), flat(j, t));
      out(i, j) = acc;
    }
  return out;
}

// Transpose the chosen subsystems' indices in place; involutive.
inline Mat partial_transpose(const Mat& m, const std::vector<int>& dims,
                             const std::vector<int>& subsystems) {
  detail::check_dims(m, dims);
  const int r = static_cast<int>(dims.size());
  std::vector<bool> flip(r, false);
  for (int k : subsystems) {
    if (k < 0 || k >= r) throw ValidationError("partial_transpose: subsystem index out of range");
    flip[k] = true;
  }
  const auto strides = detail::strides_of(dims);
  const int total = product(dims);
  Mat out(total, total);
  std::vector<int> di(r), dj(r);
  for (int i = 0; i < total; ++i) {
    int ii = i;
    for (int k = 0; k < r; ++k) { di[k] = ii / strides[k]; ii %= strides[k]; }
    for (int j = 0; j < total; ++j) {
      int jj = j;
      for (int k = 0; k < r; ++k) { dj[k] = jj / strides[k]; jj %= strides[k]; }
      int si = 0, sj = 0;
      for (int k = 0; k < r; ++k) {
        si += (flip[k] ? dj[k] : di[k]) * strides[k];
        sj += (flip[k] ? di[k] : dj[k]) * strides[k];
      }
      out(si, sj) = m(i, j);
    }
  }
  return out;
}

// Orthogonal projector onto the Bose-symmetric subspace of (C^d)^{⊗k},
// built as the average of all k! permutation operators.
inline Mat symmetric_projector(int k, int d) {
  if (k < 1 || d < 2) throw ValidationError("symmetric_projector: need k >= 1, d >= 2");
  double total = std::pow(static_cast<double>(d), k);
  if (total > kDimCap) throw ValidationError("symmetric_projector: d^k exceeds dimension cap");
  const int dim = static_cast<int>(total + 0.5);
  std::vector<int> dims(k, d);
  const auto strides = detail::strides_of(dims);
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  Mat acc = Mat::Zero(dim, dim);
  int count = 0;
  std::vector<int> digits(k);
  do {
    // Permutation operator P_π |i_1..i_k⟩ = |i_{π⁻¹(1)}..i_{π⁻¹(k)}⟩:
    // column index j maps to row index with digit a taken from slot perm[a].
    for (int j = 0; j < dim; ++j) {
      int jj = j;
      for (int a = 0; a < k; ++a) { digits[a] = jj / strides[a]; jj %= strides[a]; }
      int i = 0;
      for (int a = 0; a < k; ++a) i += digits[perm[a]] * strides[a];
      acc(i, j) += 1.0;
    }
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return acc / static_cast<double>(count);
}

struct EigH {
  RVec values;   // ascending
  Mat vectors;   // columns, orthonormal
};

// Hermitian eigensolve (tridiagonalization + implicit QL via Eigen);
// deterministic for fixed input.  Rejects non-Hermitian matrices.
inline EigH eig_hermitian(const Mat& m, double slack = tol::kHermitian) {
  Mat h = hermitize(m, slack);
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  if (es.info() != Eigen::Success) throw SolverError("eig_hermitian: eigensolver failed");
  return EigH{es.eigenvalues(), es.eigenvectors()};
}

inline double min_eigenvalue(const Mat& m) { return eig_hermitian(m).values(0); }
inline double max_eigenvalue(const Mat& m) {
  auto e = eig_hermitian(m);
  return e.values(e.values.size() - 1);
}

// Sum of absolute eigenvalues (Hermitian inputs only in this artifact).
inline double trace_norm(const Mat& m) {
  return eig_hermitian(m).values.cwiseAbs().sum();
}

// --- Validated quantum objects -------------------------------------------

struct DensityMatrix {
  std::vector<int> dims;
  Mat matrix;

  DensityMatrix(std::vector<int> dims_, Mat m) : dims(std::move(dims_)), matrix(std::move(m)) {
    detail::check_dims(matrix, dims);
    matrix = hermitize(matrix);
    double lo = min_eigenvalue(matrix);
    if (lo < -tol::kDensity)
      throw ValidationError("DensityMatrix: min eigenvalue " + std::to_string(lo));
    double tr = matrix.trace().real();
    if (std::abs(tr - 1.0) > tol::kDensity)
      throw ValidationError("DensityMatrix: trace " + std::to_string(tr));
  }
};

inline DensityMatrix pure_state(const std::vector<int>& dims, const Vec& psi) {
  Vec v = psi / psi.norm();
  return DensityMatrix(dims, v * v.adjoint());
}

struct Povm {
  std::vector<Mat> elements;
  std::vector<std::string> labels;  // optional; empty means positional

  explicit Povm(std::vector<Mat> els, std::vector<std::string> labels_ = {})
      : elements(std::move(els)), labels(std::move(labels_)) {
    if (elements.empty()) throw ValidationError("Povm: no elements");
    if (!labels.empty() && labels.size() != elements.size())
      throw ValidationError("Povm: label/element count mismatch");
    const auto d = elements[0].rows();
    Mat sum = Mat::Zero(d, d);
    for (auto& e : elements) {
      if (e.rows() != d || e.cols() != d) throw ValidationError("Povm: ragged element dims");
      Mat h = hermitize(e);
      if (min_eigenvalue(h) < -tol::kPovm)
        throw ValidationError("Povm: element not PSD within tolerance");
      sum += h;
    }
    if (max_abs(sum - Mat::Identity(d, d)) > tol::kPovm)
      throw ValidationError("Povm: elements do not sum to identity (max deviation " +
                            std::to_string(max_abs(sum - Mat::Identity(d, d))) + ")");
  }

  int dim() const { return static_cast<int>(elements[0].rows()); }
  int outcomes() const { return static_cast<int>(elements.size()); }

  // Constructs without validating positivity/completeness.  Intended for
  // loaders that must admit defective measurements so that a later
  // validation pass can report what is wrong instead of refusing to parse.
  static Povm unchecked(std::vector<Mat> els, std::vector<std::string> labels_ = {}) {
    Povm p;
    p.elements = std::move(els);
    p.labels = std::move(labels_);
    if (p.elements.empty()) throw ValidationError("Povm: no elements");
    if (!p.labels.empty() && p.labels.size() != p.elements.size())
      throw ValidationError("Povm: label/element count mismatch");
    return p;
  }

 private:
  Povm() = default;
};

}  // namespace qprep
