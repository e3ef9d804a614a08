#pragma once

#include <optional>
#include <vector>

#include "fex/linalg.hpp"

// Deterministic dense semidefinite feasibility/optimization:
//   maximize  objective . y   subject to   F0^b + sum_i y_i Fi^b  PSD
// solved by NT-scaled infeasible-start primal-dual path following with
// symmetric-eigen steps (no Cholesky, no randomness). Infeasibility is only
// ever declared through a verified dual (Farkas) certificate Z: Z PSD,
// <Z, Fi> ~ 0 for all i, <Z, F0> < 0; iteration exhaustion alone yields
// NumericalFailure.

namespace fex {

enum class SdpStatus { Optimal, Infeasible, NumericalFailure };

struct SdpBlock {
  Matrix f0;
  std::vector<Matrix> fi;  // one coefficient matrix per variable
};

struct SdpProblem {
  int num_vars = 0;
  Vector objective;  // size num_vars; empty or zero => pure feasibility
  std::vector<SdpBlock> blocks;
  // Box |y_i| <= y_bound added to every solve to keep iterates regular
  // (0 picks the default 1e4). Callers with geometric radius knowledge pass
  // 10x their radius estimate.
  double y_bound = 0.0;
  // Strictly feasible y, if the caller knows one; skips the feasibility
  // phase and warm-starts the optimizer.
  std::optional<Vector> feasible_hint;
};

struct SdpResult {
  SdpStatus status = SdpStatus::NumericalFailure;
  Vector y;
  double value = 0.0;       // objective at y
  double dual_bound = 0.0;  // certified upper bound; >= value - 1e-6 at Optimal
  std::vector<Matrix> dual;  // Z per input block; Farkas certificate when Infeasible
  Vector margins;            // min eig of each input block at y (recomputed)
  double feasibility_margin = 0.0;  // min over blocks
  double phase1_value = 0.0;        // best achievable uniform margin t*
  double farkas_obj = 0.0;          // <Z, F0>, certified < 0 when Infeasible
  double farkas_lin = 0.0;          // max_i |<Z, Fi>| when Infeasible
  int iterations = 0;
  double achieved_tol = 0.0;
};

SdpResult sdp_solve(const SdpProblem& p, double feas_tol = 1e-8,
                    int max_iter = 300);

// Feasibility query: ignores the objective, returns the max-margin point or
// the infeasibility certificate.
SdpResult sdp_feasible_point(const SdpProblem& p, double feas_tol = 1e-8,
                             int max_iter = 300);

}  // namespace fex
