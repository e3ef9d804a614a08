#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fex/common.hpp"
#include "fex/linalg.hpp"
#include "fex/pencil.hpp"

namespace fex {

// assemble the 1-dilation [[X_l, beta_l],[beta_l^T, gamma_l]]; beta is flattened
// with beta_l = beta.segment(l*n, n)
MatrixTuple dilate_tuple(const MatrixTuple& X, const Vector& beta,
                         const Vector& gamma);

// Everything the dilation engine needs from a closed bounded matrix convex set.
// Implementations exist for free spectrahedra, spectrahedrops, and truncated
// generalized free spectrahedra.
class ConvexBodyOracle {
 public:
  virtual ~ConvexBodyOracle() = default;

  virtual int arity() const = 0;
  virtual MembershipVerdict membership(const MatrixTuple& X) const = 0;

  // orthonormal columns spanning the dilation subspace at X, ambient R^{n*g}
  virtual Matrix dilation_subspace(const MatrixTuple& X) const = 0;

  // largest alpha admitting a corner gamma with dilate(X, alpha*beta, gamma)
  // a member, together with a witnessing gamma; beta must lie in the dilation
  // subspace at X
  virtual std::pair<double, Vector> alpha_max(const MatrixTuple& X,
                                              const Vector& beta) const = 0;

  // maximize <c, gamma> over {gamma = gamma0 + frame*u : dilate(X, beta, gamma)
  // member}; frame columns parametrize the affine face under scrutiny
  virtual Vector gamma_maximize(const MatrixTuple& X, const Vector& beta,
                                const Vector& c, const Vector& gamma0,
                                const Matrix& frame) const = 0;

  // rows are linear functionals vanishing on the affine hull of the face of
  // the corner set through gamma; used to pin faces between rounds (a body
  // with no cheap face description may return the empty default)
  virtual Matrix face_normals(const MatrixTuple& X, const Vector& beta,
                              const Vector& gamma) const {
    return Matrix(0, arity());
  }

  // optional boundary snap of a freshly built 1-dilation; adjusts beta/gamma
  virtual void refine_dilation(const MatrixTuple& X, Vector& beta,
                               Vector& gamma) const {}

  // how strictly positive a probe margin must be to count as interior
  virtual double probe_inside_tol() const { return 1e-10; }
};

struct DilationStep {
  Vector beta;            // scaled so the alpha optimum at beta is 1
  Vector gamma;           // extreme point of the corner set
  double alpha_scale = 0.0;     // rescale applied to the unit direction
  double alpha_residual = 0.0;  // |re-solved alpha optimum - 1|
  int dim_before = 0;
  int dim_after = 0;
  MatrixTuple dilated;
};

struct DecompositionCertificate {
  MatrixTuple input;
  MatrixTuple arveson;  // terminal point of the dilation iteration
  std::vector<DilationStep> steps;
  std::vector<MatrixTuple> components;
  std::vector<Matrix> isometries;  // V_i (n_i x n); sum V_i^T V_i = I_n
  std::vector<int> component_dilation_dims;   // expected all zero
  std::vector<int> component_commutant_dims;  // expected all one
  double reconstruction_residual = 0.0;  // ||X - sum V_i^T X^i V_i||_F
  double partition_residual = 0.0;       // ||sum V_i^T V_i - I||_F
  std::uint64_t seed = 0;
  double membership_tol = 0.0;
  double kernel_tol = 0.0;
};

// extreme point of Gamma_{X,beta} by seeded generic-functional maximization
// with facial fixing, verified by +-1e-5 probes
Vector gamma_extreme_point(const ConvexBodyOracle& K, const MatrixTuple& X,
                           const Vector& beta_hat, std::uint64_t seed,
                           const Vector* gamma_hint = nullptr);

// one maximal 1-dilation; retries fresh directions internally before giving up
DilationStep maximal_one_dilation(const ConvexBodyOracle& K, const MatrixTuple& X,
                                  std::uint64_t seed);

// iterate maximal 1-dilations until the dilation subspace dies
std::pair<MatrixTuple, std::vector<DilationStep>> arveson_dilate(
    const ConvexBodyOracle& K, const MatrixTuple& X, std::uint64_t seed);

// basis of {T = T^T : T X_l = X_l T for all l}; always contains I
std::vector<Matrix> symmetric_commutant(const MatrixTuple& X);

struct IrreducibleComponent {
  MatrixTuple x;
  Matrix u;  // n x n_i orthonormal columns; x = u^T X u
};

std::vector<IrreducibleComponent> irreducible_decomposition(const MatrixTuple& X,
                                                            std::uint64_t seed);

DecompositionCertificate decompose_free_extreme(const ConvexBodyOracle& K,
                                                const MatrixTuple& X,
                                                std::uint64_t seed);

// kernel-containment dilation subspace of a free spectrahedron: the nullspace of
// beta -> (Lambda_A(beta^T) v)_{v in ker L_A(X)}
Matrix dilation_subspace_spectrahedron(const LinearPencil& A, const MatrixTuple& X,
                                       double kernel_tol = 1e-9);

// Gauss-Newton snap onto the boundary manifold: drives the near-zero spectrum of
// base + sum p_j coeffs_j to zero, excluding directions in 'forced' (columns the
// construction already annihilates); returns the corrected parameters
Vector boundary_polish(const Matrix& base, const std::vector<Matrix>& coeffs,
                       const Matrix& forced, Vector p0, double active_tol = 1e-5,
                       double target_rel = 1e-12, int max_iter = 40);

class SpectrahedronOracle : public ConvexBodyOracle {
 public:
  explicit SpectrahedronOracle(LinearPencil pencil, double kernel_tol = 1e-9);

  int arity() const override { return pencil_.g(); }
  MembershipVerdict membership(const MatrixTuple& X) const override;
  Matrix dilation_subspace(const MatrixTuple& X) const override;
  std::pair<double, Vector> alpha_max(const MatrixTuple& X,
                                      const Vector& beta) const override;
  Vector gamma_maximize(const MatrixTuple& X, const Vector& beta, const Vector& c,
                        const Vector& gamma0, const Matrix& frame) const override;
  Matrix face_normals(const MatrixTuple& X, const Vector& beta,
                      const Vector& gamma) const override;
  void refine_dilation(const MatrixTuple& X, Vector& beta,
                       Vector& gamma) const override;

  const LinearPencil& pencil() const { return pencil_; }

 private:
  // shared ingredients of the 2x2 block reduction of the dilated pencil
  struct Reduced {
    Matrix corner;  // sum_l kron(A_l, beta_l), dn x d
    Matrix q;       // corner^T pinv(L_A(X)) corner, d x d
  };
  Reduced reduce(const MatrixTuple& X, const Vector& beta) const;

  LinearPencil pencil_;
  double kernel_tol_;
  std::vector<double> radii_;  // per-coordinate level-1 bound
  double radius_ = 1.0;        // max of radii_
};

}  // namespace fex
