#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "fex/extremal.hpp"
#include "fex/pencil.hpp"

namespace fex {

// proj_x { (X, Y) : I - sum A_i (x) X_i - sum B_j (x) Y_j >= 0 }
// A and B share the ambient order d; h = 0 degenerates to the plain
// spectrahedron of A.
struct DropDescription {
  LinearPencil a;
  LinearPencil b;

  int g() const { return a.g(); }
  int h() const { return b.g(); }
  int d() const { return a.d(); }
};

// x-boundedness of the projection: generic slices of the joint level-1
// recession cone restricted to the x coordinates, dual-certified empty.
BoundednessReport drop_bounded_in_x(const DropDescription& drop, int trials = 16,
                                    std::uint64_t seed = 1);

// sup_Y min-eig of the joint pencil at X; `dual` holds the solver's
// certificate block for the joint constraint (used to factor witnesses)
struct DropLift {
  MatrixTuple y;
  double margin = 0.0;
  Matrix dual;
};
DropLift drop_max_margin_lift(const DropDescription& drop, const MatrixTuple& X);

// membership of X in the projection; h = 0 routes to pencil membership
// verbatim so the two agree exactly
MembershipVerdict drop_membership(const DropDescription& drop,
                                  const MatrixTuple& X, double tol = 1e-9);

// level-m compression data: W has m*d rows (chunk-major: row k*d + a is
// coordinate a of chunk k), r orthonormal columns, and kills every I_m (x) B_j
struct IsometryWitness {
  Matrix w;
  int level = 0;
  int cols = 0;
  double ortho_residual = 0.0;         // ||W^T W - I||_F
  double annihilation_residual = 0.0;  // max_j ||W^T (I_m (x) B_j) W||_F

  bool valid(double tol = 1e-8) const {
    return ortho_residual <= tol && annihilation_residual <= tol;
  }
};

// I_m (x) M in the chunk-major layout above
Matrix direct_sum_power(const Matrix& m, int copies);

// recompute both witness residuals against the drop's B tuple
IsometryWitness make_isometry_witness(const DropDescription& drop, Matrix w,
                                      int level);

// W^T (I_m (x) A_l) W per coordinate
LinearPencil compress_pencil(const LinearPencil& a, const IsometryWitness& w);

// W^T W (x) I_n - Lambda_{compressed}(X): PSD for every member X and every
// valid witness; a negative eigenvalue certifies non-membership
Matrix dnt_test_matrix(const DropDescription& drop, const IsometryWitness& w,
                       const MatrixTuple& X);

// random witness supported on a common isotropic subspace of the I_m (x) B_j;
// nullopt when no such subspace survives (never for h = 0)
std::optional<IsometryWitness> sample_isometry_witness(const DropDescription& drop,
                                                       int level, Rng& rng);

struct NecessaryScan {
  double worst_margin = std::numeric_limits<double>::infinity();
  int samples = 0;
};
// min over sampled witnesses of the compressed-evaluation margin at X
NecessaryScan necessary_condition_scan(const DropDescription& drop,
                                       const MatrixTuple& X, int level,
                                       int samples, std::uint64_t seed);

struct ViolationWitness {
  IsometryWitness w;
  double violation = 0.0;  // min eig of the witness' test matrix at X
};
// non-membership witness factored from the lifted solve's dual certificate;
// requires X outside (DomainError otherwise), nullopt on numerical failure
std::optional<ViolationWitness> dnt_violating_witness(const DropDescription& drop,
                                                      const MatrixTuple& X);

// tr(W) I_n - sum_l <A_l, W> X_l for W in the operator system orthogonal to
// span{B_1..B_h}; DomainError when W leaves that system
Matrix phi_map(const DropDescription& drop, const MatrixTuple& X,
               const Matrix& w, double tol = 1e-9);

// largest c with [[X, c beta],[c beta^T, 0]] in the drop (bisection against
// drop_membership on [lo, hi]); 0 when even lo fails
double max_border_scale(const DropDescription& drop, const MatrixTuple& X,
                        const Vector& beta, double lo = 1e-8, double hi = 1e4);

struct DropSubspace {
  Matrix basis;   // orthonormal columns, ambient R^{n*g}
  Vector scales;  // verified border scaling per column
};
// dilation subspace at a member X by iterative span building over the set of
// zero-corner border directions
DropSubspace drop_dilation_subspace(const DropDescription& drop,
                                    const MatrixTuple& X, std::uint64_t seed);

// dilation engine oracle for drops with h >= 1: every degenerate question is
// answered through always-strictly-feasible max-margin lifts plus bisection
// on the scalar being optimized
class DropOracle final : public ConvexBodyOracle {
 public:
  explicit DropOracle(DropDescription drop, double kernel_tol = 1e-9,
                      std::uint64_t seed = 0x5eed);

  int arity() const override { return drop_.g(); }
  MembershipVerdict membership(const MatrixTuple& X) const override;
  Matrix dilation_subspace(const MatrixTuple& X) const override;
  std::pair<double, Vector> alpha_max(const MatrixTuple& X,
                                      const Vector& beta) const override;
  Vector gamma_maximize(const MatrixTuple& X, const Vector& beta,
                        const Vector& c, const Vector& gamma0,
                        const Matrix& frame) const override;
  Matrix face_normals(const MatrixTuple& X, const Vector& beta,
                      const Vector& gamma) const override;
  void refine_dilation(const MatrixTuple& X, Vector& beta,
                       Vector& gamma) const override;
  double probe_inside_tol() const override { return 1e-7; }

  const DropDescription& drop() const { return drop_; }

 private:
  // Newton-snap (border scale, corner) onto the boundary through the frozen
  // optimal lift, refreezing between rounds; returns (scale, corner)
  std::pair<double, Vector> snap_to_boundary(const MatrixTuple& X,
                                             const Vector& beta,
                                             const Vector& gamma) const;

  DropDescription drop_;
  double kernel_tol_;
  std::uint64_t seed_;
  std::vector<double> radii_;  // per x-coordinate level-1 reach
  double radius_ = 1.0;
};

// engine-ready oracle: h = 0 yields the spectrahedron oracle itself so both
// paths are identical, h >= 1 yields a DropOracle
std::unique_ptr<ConvexBodyOracle> drop_oracle(const DropDescription& drop,
                                              double kernel_tol = 1e-9);

}  // namespace fex
