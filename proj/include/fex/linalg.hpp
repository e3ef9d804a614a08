#pragma once

#include <vector>

#include "fex/common.hpp"

// Deterministic dense real-symmetric linear algebra. Everything downstream
// (pencil evaluation, SDP steps, kernel computations, certificates) goes
// through these routines so results are bit-stable for a fixed input.

namespace fex {

inline Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Relative asymmetry guard; inputs to eigen routines must be symmetric.
bool is_symmetric(const Matrix& m, double tol = 1e-10);

struct EigenSym {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns, values(i) <-> vectors.col(i)
};

// Cyclic Jacobi with threshold sweeps. No randomness, no branching on
// uninitialized state: equal inputs give bitwise equal output.
EigenSym sym_eigen(const Matrix& m);

double min_eig(const Matrix& m);

Matrix kron(const Matrix& a, const Matrix& b);

// Moore-Penrose inverse of a symmetric matrix; eigenvalues with
// |lambda| <= rank_tol * max|lambda| are treated as zero.
Matrix pinv(const Matrix& m, double rank_tol = 1e-9);

struct KernelBasis {
  int ambient = 0;
  Matrix basis;  // orthonormal columns spanning the near-kernel
  double threshold = 0.0;
  int dim() const { return static_cast<int>(basis.cols()); }
};

// Spans eigenspaces with |eigenvalue| <= tol * max(1, |eigenvalue|_max).
KernelBasis kernel_basis(const Matrix& m, double tol = 1e-9);

// Block regrouping permutation. Input is a (d*N)x(d*N) matrix viewed as a
// d x N tensor grid with the second index partitioned by `dims`
// (N = sum dims). Output groups block j's columns contiguously, keeping the
// d-index major inside each group: index (a, off_j + b) maps to
// d*off_j + a*dims[j] + b. Applied to a pencil evaluation of a dilated tuple
// with dims = {n, 1} this produces the 2x2 bordered form
// [[L(X), Lambda(beta)], [Lambda(beta)^T, L(gamma)]].
Matrix canonical_shuffle(const Matrix& m, int d, const std::vector<int>& dims);
Matrix canonical_unshuffle(const Matrix& m, int d, const std::vector<int>& dims);

// Generalized Schur complement test on P = [[R, S], [S^T, T]] with R of
// order top: true iff T is PSD, ker T is contained in ker S, and
// R - S T^+ S^T is PSD, all at rank_tol relative to the block spectra.
bool schur_complement_psd_check(const Matrix& p, int top, double rank_tol = 1e-9);

// Orthonormal basis of the span of the columns of m (Gram-Schmidt with
// column pivoting on residual norms; deterministic).
Matrix orthonormal_columns(const Matrix& m, double tol = 1e-12);

// Orthonormal basis of the orthogonal complement of span(columns of m)
// inside R^n.
Matrix orthogonal_complement(const Matrix& m, int n, double tol = 1e-12);

}  // namespace fex
