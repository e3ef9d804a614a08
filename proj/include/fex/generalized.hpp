#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fex/common.hpp"
#include "fex/extremal.hpp"
#include "fex/linalg.hpp"
#include "fex/pencil.hpp"

namespace fex {

// Finite N x N truncation of a tuple of compact self-adjoint operators,
// together with a certified operator-norm bound on what the truncation
// discards: ||A_l - head_l (+) 0||_op <= tail_bound for every l. Structured
// generators record their rules so the truncation can be regenerated at a
// higher order.
struct TruncatedCompactPencil {
  int truncation = 0;
  std::vector<Matrix> head;  // g symmetric truncation x truncation blocks
  double tail_bound = 0.0;
  std::string generator;     // "" when ad hoc; "diag_plus_shift" when structured
  std::string lambda_rule;   // "alternating_harmonic": lambda_i = (-1)^{i+1}/i
  std::string w_rule;        // "geometric_half": w_i = 2^{-i}

  int g() const { return static_cast<int>(head.size()); }
};

enum class Surrogate { Lower, Upper };

// eval_l(head, X) shifted by -/+ tail_bound * (sum_l ||X_l||_op) * I: certified
// lower/upper PSD surrogates for the infinite-dimensional pencil evaluation
Matrix truncated_eval(const TruncatedCompactPencil& p, const MatrixTuple& X,
                      Surrogate dir);

enum class Certainty { CertifiedIn, CertifiedOut, Undecided };

struct TruncatedVerdict {
  Certainty certainty = Certainty::Undecided;
  // certified bracket on the smallest eigenvalue of the untruncated pencil
  // evaluation (the identity acting past the truncation folds in as min(.,1))
  double lower_margin = 0.0;
  double upper_margin = 0.0;
  double tail_term = 0.0;  // tail_bound * sum_l ||X_l||_op
  int truncation = 0;
};

// CertifiedIn iff the lower surrogate is PSD; CertifiedOut iff the upper
// surrogate has an eigenvalue <= -tol; Undecided otherwise (raise N)
TruncatedVerdict generalized_membership(const TruncatedCompactPencil& p,
                                        const MatrixTuple& X, double tol = 1e-9);

// rebuild a structured truncation at a new order (DomainError when the
// generator rules are absent or unknown)
TruncatedCompactPencil regenerate(const TruncatedCompactPencil& p, int order);

// doubles the truncation order (cap n_cap) while the verdict is Undecided and
// the pencil is regenerable; returns the verdict with the truncation used
std::pair<TruncatedVerdict, TruncatedCompactPencil> generalized_membership_adaptive(
    const TruncatedCompactPencil& p, const MatrixTuple& X, double tol = 1e-9,
    int n_cap = 128);

// diagonal-plus-weighted-shift tuple: A_1 = diag(lambda), lambda_i =
// (-1)^{i+1}/i; A_2 = S_w + S_w^T, w_i = 2^{-i}; tail bounds attached
TruncatedCompactPencil notadrop_example(int order);

struct BoundednessCertificate {
  LinearPencil compression;  // the leading 2x2 blocks
  BoundednessReport report;
};

// certifies boundedness of the full generalized set through its leading 2x2
// compression (membership passes to compressions, so a bounded compression
// bounds the set); requires lambda_1 > 0 > lambda_2 and w_1 != 0
BoundednessCertificate compression_boundedness(const TruncatedCompactPencil& p);

struct FiniteInteriorWitness {
  int d = 0;
  std::vector<Vector> v;  // vectors in the truncated space
  Vector residual;        // |sum_j v_j^T A_l v_j| per coordinate
};

// canonical zero-sum witness v_1 = (sqrt(-lambda_2), 0, ...),
// v_2 = (0, sqrt(lambda_1), 0, ...); residual measured against the stored head
FiniteInteriorWitness finite_interior_witness(const TruncatedCompactPencil& p);

struct PolarDualReport {
  Certainty verdict = Certainty::Undecided;
  double worst_margin = 0.0;
  int worst_index = -1;
  int samples_used = 0;
};

// necessary-condition spot check that the candidate tuple lies in the polar
// dual of the sampled set: worst min-eigenvalue of I - sum X_l (x) C_l over
// the samples X (sound for rejection only)
PolarDualReport polar_dual_spot_check(const std::vector<MatrixTuple>& samples,
                                      const MatrixTuple& candidate,
                                      double tol = 1e-8);

// V^T (I_k (x) head) V for an isometry V with k*truncation rows
MatrixTuple ka_compress(const TruncatedCompactPencil& p, const Matrix& isometry);

// random isometric compression of finitely many copies of the head onto R^n:
// a sample from the truncated noncommutative convex hull
MatrixTuple ka_sample(const TruncatedCompactPencil& p, int n, std::uint64_t seed,
                      Matrix* isometry_out = nullptr, int* copies_out = nullptr);

// Engine adapter. The working set is the truncated spectrahedron shrunk by
// c = 1/(1 + R*tail_bound), where R certifies sup of sum_l ||X_l||_op over the
// truncated set; every member X then satisfies eval_l(head, X) >=
// tail_bound * (sum ||X_l||) * I, so each membership the engine certifies is
// a certified membership in the infinite-dimensional set. Kernel vectors of
// the scaled pencil are exactly the active set of that frozen lower
// surrogate, so dilation subspaces realize the kernel-containment
// characterization. Zero tail makes the adapter agree with the plain
// spectrahedron oracle identically.
class GeneralizedOracle : public ConvexBodyOracle {
 public:
  explicit GeneralizedOracle(TruncatedCompactPencil p, double kernel_tol = 1e-9);

  int arity() const override { return inner_.arity(); }
  MembershipVerdict membership(const MatrixTuple& X) const override {
    return inner_.membership(X);
  }
  Matrix dilation_subspace(const MatrixTuple& X) const override {
    return inner_.dilation_subspace(X);
  }
  std::pair<double, Vector> alpha_max(const MatrixTuple& X,
                                      const Vector& beta) const override {
    return inner_.alpha_max(X, beta);
  }
  Vector gamma_maximize(const MatrixTuple& X, const Vector& beta, const Vector& c,
                        const Vector& gamma0, const Matrix& frame) const override {
    return inner_.gamma_maximize(X, beta, c, gamma0, frame);
  }
  Matrix face_normals(const MatrixTuple& X, const Vector& beta,
                      const Vector& gamma) const override {
    return inner_.face_normals(X, beta, gamma);
  }
  void refine_dilation(const MatrixTuple& X, Vector& beta,
                       Vector& gamma) const override {
    inner_.refine_dilation(X, beta, gamma);
  }
  double probe_inside_tol() const override { return inner_.probe_inside_tol(); }

  TruncatedVerdict certified(const MatrixTuple& X, double tol = 1e-9) const {
    return generalized_membership(p_, X, tol);
  }

  const TruncatedCompactPencil& pencil() const { return p_; }
  const LinearPencil& scaled_pencil() const { return inner_.pencil(); }
  double shrink() const { return shrink_; }       // c
  double tail_budget() const { return budget_; }  // c * R

 private:
  TruncatedCompactPencil p_;
  double shrink_ = 1.0;
  double budget_ = 0.0;
  SpectrahedronOracle inner_;
};

struct GeneralizedDecomposition {
  DecompositionCertificate cert;
  TruncatedVerdict input_verdict;
  TruncatedCompactPencil pencil_used;  // possibly regenerated at a higher order
  double shrink = 1.0;
  double tail_budget = 0.0;
};

// certified decomposition: raises the truncation until the input enters the
// certified inner surrogate, then runs the dilation engine on it. Certified
// non-members throw NotMemberError; points still undecided (or outside the
// surrogate) at the cap throw UndecidedError advising a larger truncation.
GeneralizedDecomposition decompose_generalized(const TruncatedCompactPencil& p,
                                               const MatrixTuple& X,
                                               std::uint64_t seed,
                                               double tol = 1e-9, int n_cap = 128);

}  // namespace fex
