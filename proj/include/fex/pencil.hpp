#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fex/common.hpp"
#include "fex/linalg.hpp"

namespace fex {

// g-tuple of symmetric n x n matrices: a point at level n
struct MatrixTuple {
  std::vector<Matrix> x;

  MatrixTuple() = default;
  explicit MatrixTuple(std::vector<Matrix> xs);

  int g() const { return static_cast<int>(x.size()); }
  int n() const { return x.empty() ? 0 : static_cast<int>(x[0].rows()); }
};

MatrixTuple zero_tuple(int g, int n);
double tuple_norm(const MatrixTuple& X);
MatrixTuple tuple_direct_sum(const MatrixTuple& X, const MatrixTuple& Y);
// (V^T X_l V)_l for V with orthonormal columns (isometric compression)
MatrixTuple tuple_compress(const MatrixTuple& X, const Matrix& v);

// monic linear pencil x -> I - sum A_l x_l with symmetric coefficients
struct LinearPencil {
  std::vector<Matrix> a;

  LinearPencil() = default;
  explicit LinearPencil(std::vector<Matrix> as);

  int g() const { return static_cast<int>(a.size()); }
  int d() const { return a.empty() ? 0 : static_cast<int>(a[0].rows()); }
};

// sum A_l (x) X_l
Matrix eval_lambda(const LinearPencil& A, const MatrixTuple& X);
// I - sum A_l (x) X_l
Matrix eval_l(const LinearPencil& A, const MatrixTuple& X);

struct MembershipVerdict {
  bool inside = false;
  double margin = 0.0;  // min eigenvalue of the evaluated pencil (or lifted margin)
  Vector witness;       // eigenvector attaining the margin, when available
};

MembershipVerdict membership(const LinearPencil& A, const MatrixTuple& X,
                             double tol = 1e-9);

enum class Boundedness { Bounded, Unbounded, Inconclusive };

struct BoundednessReport {
  Boundedness verdict = Boundedness::Inconclusive;
  Vector witness;  // level-1 recession direction with Lambda_A(w) <= 0 when Unbounded
  int trials_used = 0;
};

// Randomized sufficient test over the level-1 recession cone {delta : Lambda_A(delta) <= 0}:
// Bounded only when every generic slice <c,delta> = 1 is dual-certified empty; Unbounded
// returns an explicit verified recession direction; anything murky stays Inconclusive.
BoundednessReport is_bounded(const LinearPencil& A, int trials = 16,
                             std::uint64_t seed = 1);

LinearPencil interval_pencil();   // level-1 set [-1, 1]
LinearPencil cube_pencil(int g);  // {X : ||X_l|| <= 1 for all l}

// closed range {t : t*e_l in D_A(1)}, analytic from the spectrum of A_l;
// unbounded sides come back as +-infinity
std::pair<double, double> level1_range(const LinearPencil& A, int l);

}  // namespace fex
