#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fex/extremal.hpp"
#include "fex/generalized.hpp"
#include "fex/linalg.hpp"
#include "fex/pencil.hpp"

using namespace fex;

namespace {

MatrixTuple level1(double x1, double x2) {
  MatrixTuple t;
  t.x = {Matrix::Constant(1, 1, x1), Matrix::Constant(1, 1, x2)};
  return t;
}

double op_norm(const Matrix& m) {
  return sym_eigen(sym(m)).values.cwiseAbs().maxCoeff();
}

double sum_norm(const MatrixTuple& X) {
  double s = 0.0;
  for (const Matrix& x : X.x) s += op_norm(x);
  return s;
}

// alternating harmonic diagonal with finite support: the truncation at 12 is
// exact (zero tail), so it behaves as a plain finite spectrahedron
TruncatedCompactPencil finite_diag(int order) {
  Matrix a = Matrix::Zero(order, order);
  for (int i = 0; i < std::min(order, 12); ++i)
    a(i, i) = (i % 2 == 0 ? 1.0 : -1.0) / (i + 1);
  TruncatedCompactPencil p;
  p.truncation = order;
  p.head = {a};
  p.tail_bound = 0.0;
  return p;
}

MatrixTuple scalar1(double x) {
  MatrixTuple t;
  t.x = {Matrix::Constant(1, 1, x)};
  return t;
}

}  // namespace

TEST_CASE("notadrop head matches the order-2 instance") {
  const TruncatedCompactPencil p = notadrop_example(2);
  REQUIRE(p.g() == 2);
  CHECK(p.truncation == 2);
  CHECK(p.head[0](0, 0) == 1.0);
  CHECK(p.head[0](1, 1) == -0.5);
  CHECK(p.head[0](0, 1) == 0.0);
  CHECK(p.head[1](0, 1) == 0.5);
  CHECK(p.head[1](1, 0) == 0.5);
  CHECK(p.head[1](0, 0) == 0.0);
  CHECK(p.tail_bound == 0.5);  // max(1/3, 2*2^-2)
  CHECK_THROWS_AS(notadrop_example(1), DomainError);
}

TEST_CASE("notadrop tail bound decays and the diagonal norms are distinct") {
  double prev = notadrop_example(2).tail_bound;
  CHECK(notadrop_example(3).tail_bound <= 0.5 * prev);  // 1/4 vs 1/2
  for (int n = 3; n <= 20; ++n) {
    const double t = notadrop_example(n).tail_bound;
    CHECK(t == std::max(1.0 / (n + 1), std::ldexp(1.0, 1 - n)));
    CHECK(t < prev);
    prev = t;
  }
  const TruncatedCompactPencil p = notadrop_example(8);
  CHECK(p.tail_bound == 1.0 / 9);
  for (int i = 0; i < 8; ++i)
    for (int j = i + 1; j < 8; ++j)
      CHECK(std::abs(p.head[0](i, i)) != std::abs(p.head[0](j, j)));
}

TEST_CASE("regenerate rebuilds the structured pencil exactly") {
  const TruncatedCompactPencil r = regenerate(notadrop_example(4), 8);
  const TruncatedCompactPencil d = notadrop_example(8);
  CHECK(r.truncation == d.truncation);
  CHECK(r.tail_bound == d.tail_bound);
  CHECK((r.head[0] - d.head[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.head[1] - d.head[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(regenerate(finite_diag(12), 16), DomainError);
}

TEST_CASE("truncated_eval at zero is the identity and shifts by the tail term") {
  const TruncatedCompactPencil p = notadrop_example(4);
  const MatrixTuple z = zero_tuple(2, 2);
  CHECK((truncated_eval(p, z, Surrogate::Lower) - Matrix::Identity(8, 8))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  CHECK((truncated_eval(p, z, Surrogate::Upper) - Matrix::Identity(8, 8))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const MatrixTuple x = level1(0.4, -0.3);
  const double shift = p.tail_bound * sum_norm(x);
  const Matrix lo = truncated_eval(p, x, Surrogate::Lower);
  const Matrix hi = truncated_eval(p, x, Surrogate::Upper);
  CHECK((hi - lo).diagonal().minCoeff() == doctest::Approx(2 * shift).epsilon(1e-12));
  CHECK(min_eig(hi) - min_eig(lo) == doctest::Approx(2 * shift).epsilon(1e-10));
}

TEST_CASE("surrogate sandwich between refinements") {
  const TruncatedCompactPencil p8 = notadrop_example(8);
  const TruncatedCompactPencil p16 = notadrop_example(16);
  const std::vector<MatrixTuple> grid = {level1(0.4, 0.3),  level1(-0.4, 0.3),
                                         level1(0.9, 0.0),  level1(-1.5, 0.5),
                                         level1(0.2, -0.8), level1(0.0, 1.1)};
  for (const MatrixTuple& x : grid) {
    const TruncatedVerdict v8 = generalized_membership(p8, x);
    const TruncatedVerdict v16 = generalized_membership(p16, x);
    const double fold8 = v8.lower_margin + v8.tail_term;
    const double fold16 = v16.lower_margin + v16.tail_term;
    // the refined truncation stays within the coarse tail budget
    CHECK(std::abs(fold16 - fold8) <= v8.tail_term + 1e-12);
    CHECK(v16.lower_margin >= v8.lower_margin - v16.tail_term - 1e-12);
    // the certified bracket tightens monotonically
    CHECK(v16.tail_term < v8.tail_term);
  }
}

TEST_CASE("membership verdicts: analytic instances") {
  const MatrixTuple zero = zero_tuple(2, 1);
  CHECK(generalized_membership(notadrop_example(4), zero).certainty ==
        Certainty::CertifiedIn);
  CHECK(generalized_membership(notadrop_example(4), zero).lower_margin == 1.0);

  // x = (0.92, 0): head margin 0.1 - 0.02 = 0.08 at every order, tail term
  // 0.92 * tail_bound
  const MatrixTuple x = level1(0.92, 0.0);
  const TruncatedVerdict v4 = generalized_membership(notadrop_example(4), x);
  CHECK(v4.certainty == Certainty::Undecided);
  CHECK(v4.lower_margin == doctest::Approx(0.08 - 0.92 * 0.2).epsilon(1e-12));
  const TruncatedVerdict v16 = generalized_membership(notadrop_example(16), x);
  CHECK(v16.certainty == Certainty::CertifiedIn);
  CHECK(v16.lower_margin == doctest::Approx(0.08 - 0.92 / 17).epsilon(1e-12));

  // far outside: fold = 1 - 3 = -2
  const TruncatedVerdict out = generalized_membership(notadrop_example(16),
                                                      level1(3.0, 0.0));
  CHECK(out.certainty == Certainty::CertifiedOut);
  CHECK(out.upper_margin == doctest::Approx(-2.0 + 3.0 / 17).epsilon(1e-12));
}

TEST_CASE("adaptive membership doubles the truncation until decidable") {
  const auto [v, used] =
      generalized_membership_adaptive(notadrop_example(4), level1(0.92, 0.0));
  CHECK(v.certainty == Certainty::CertifiedIn);
  CHECK(v.truncation == 16);
  CHECK(used.truncation == 16);

  // without a structured generator there is nothing to refine
  TruncatedCompactPencil adhoc = notadrop_example(4);
  adhoc.generator.clear();
  const auto [va, ua] = generalized_membership_adaptive(adhoc, level1(0.92, 0.0));
  CHECK(va.certainty == Certainty::Undecided);
  CHECK(ua.truncation == 4);

  // a genuine boundary point stays undecided at the cap
  const auto [vb, ub] =
      generalized_membership_adaptive(notadrop_example(4), level1(1.0, 0.0));
  CHECK(vb.certainty == Certainty::Undecided);
  CHECK(ub.truncation == 128);
}

TEST_CASE("compression boundedness certificate") {
  for (int order : {2, 8, 32}) {
    const BoundednessCertificate c = compression_boundedness(notadrop_example(order));
    CHECK(c.report.verdict == Boundedness::Bounded);
    CHECK(c.compression.a[0](0, 0) == 1.0);
    CHECK(c.compression.a[0](1, 1) == -0.5);
    CHECK(c.compression.a[1](0, 1) == 0.5);
  }

  TruncatedCompactPencil flipped = notadrop_example(4);
  flipped.head[0](1, 1) = 0.5;
  CHECK_THROWS_AS(compression_boundedness(flipped), DomainError);
  // and the flipped compression genuinely admits a recession direction
  const BoundednessReport r = is_bounded(
      LinearPencil({flipped.head[0].topLeftCorner(2, 2),
                    flipped.head[1].topLeftCorner(2, 2)}));
  CHECK(r.verdict == Boundedness::Unbounded);

  TruncatedCompactPencil no_shift = notadrop_example(4);
  no_shift.head[1](0, 1) = no_shift.head[1](1, 0) = 0.0;
  CHECK_THROWS_AS(compression_boundedness(no_shift), DomainError);
}

TEST_CASE("finite interior witness") {
  const TruncatedCompactPencil p = notadrop_example(4);
  const FiniteInteriorWitness w = finite_interior_witness(p);
  REQUIRE(w.d == 2);
  CHECK(w.v[0](0) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  CHECK(w.v[1](1) == 1.0);
  CHECK(w.residual.maxCoeff() <= 1e-15);

  // scaling the witness vectors scales the quadratic sums by the square
  for (int l = 0; l < 2; ++l) {
    const Vector s1 = 3.0 * w.v[0], s2 = 3.0 * w.v[1];
    CHECK(std::abs(s1.dot(p.head[l] * s1) + s2.dot(p.head[l] * s2)) <= 9e-15);
  }

  TruncatedCompactPencil perturbed = p;
  perturbed.head[0](1, 1) = -0.45;
  CHECK(finite_interior_witness(perturbed).residual(0) ==
        doctest::Approx(0.05).epsilon(1e-12));

  TruncatedCompactPencil flipped = p;
  flipped.head[0](1, 1) = 0.5;
  CHECK_THROWS_AS(finite_interior_witness(flipped), DomainError);
}

TEST_CASE("ka compressions unwind the definition") {
  const TruncatedCompactPencil p = notadrop_example(16);
  // identity embedding returns the head itself
  const MatrixTuple self = ka_compress(p, Matrix::Identity(16, 16));
  CHECK((self.x[0] - p.head[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((self.x[1] - p.head[1]).cwiseAbs().maxCoeff() == 0.0);

  Matrix v;
  int copies = 0;
  const MatrixTuple y = ka_sample(p, 3, 5, &v, &copies);
  CHECK(copies == 1);
  CHECK((v.transpose() * v - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <=
        1e-12);
  const MatrixTuple re = ka_compress(p, v);
  CHECK((re.x[0] - y.x[0]).cwiseAbs().maxCoeff() == 0.0);
  CHECK(op_norm(y.x[0]) <= op_norm(p.head[0]) + 1e-12);
  CHECK(op_norm(y.x[1]) <= op_norm(p.head[1]) + 1e-12);

  // a level above the truncation stacks copies
  const MatrixTuple big = ka_sample(p, 20, 7, &v, &copies);
  CHECK(copies == 2);
  CHECK(big.n() == 20);

  const MatrixTuple other = ka_sample(p, 3, 6);
  CHECK((other.x[0] - y.x[0]).cwiseAbs().maxCoeff() > 1e-6);

  CHECK_THROWS_AS(ka_compress(p, Matrix::Identity(15, 3)), ShapeError);
}

TEST_CASE("polar dual spot check") {
  const TruncatedCompactPencil p = notadrop_example(16);
  std::vector<MatrixTuple> samples;
  samples.push_back(ka_compress(p, Matrix::Identity(16, 16)));
  for (int i = 0; i < 6; ++i) samples.push_back(ka_sample(p, 1 + i % 3, 40 + i));

  // scaled-down candidate lies in the polar dual by the scaling argument
  Rng rng(91);
  MatrixTuple cand;
  cand.x = {rng.symmetric_gaussian(2), rng.symmetric_gaussian(2)};
  Matrix pair = kron(p.head[0], cand.x[0]) + kron(p.head[1], cand.x[1]);
  const double tau = 0.5 / op_norm(pair);
  MatrixTuple small = cand;
  small.x[0] *= tau;
  small.x[1] *= tau;
  const PolarDualReport ok = polar_dual_spot_check(samples, small);
  CHECK(ok.verdict == Certainty::Undecided);
  CHECK(ok.samples_used == 7);
  CHECK(ok.worst_margin >= 0.5 - 1e-9);

  MatrixTuple large = cand;
  large.x[0] *= 10 * tau;
  large.x[1] *= 10 * tau;
  const PolarDualReport bad = polar_dual_spot_check(samples, large);
  CHECK(bad.verdict == Certainty::CertifiedOut);
  CHECK(bad.worst_margin < -1.0);

  const PolarDualReport empty = polar_dual_spot_check({}, small);
  CHECK(empty.verdict == Certainty::Undecided);
  CHECK(empty.samples_used == 0);
}

TEST_CASE("zero tail agrees with the plain spectrahedron path identically") {
  const TruncatedCompactPencil p = finite_diag(12);
  const GeneralizedOracle gen(p);
  CHECK(gen.shrink() == 1.0);
  CHECK(gen.tail_budget() == 0.0);
  const SpectrahedronOracle direct(LinearPencil(p.head));

  const MatrixTuple x = scalar1(0.6);
  const DecompositionCertificate a = decompose_free_extreme(gen, x, 17);
  const DecompositionCertificate b = decompose_free_extreme(direct, x, 17);
  REQUIRE(a.steps.size() == b.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].alpha_scale == b.steps[i].alpha_scale);
    CHECK((a.steps[i].gamma - b.steps[i].gamma).cwiseAbs().maxCoeff() == 0.0);
  }
  REQUIRE(a.components.size() == b.components.size());
  for (size_t i = 0; i < a.components.size(); ++i)
    CHECK((a.components[i].x[0] - b.components[i].x[0]).cwiseAbs().maxCoeff() ==
          0.0);

  // padding the support with explicit zeros moves nothing but solver noise
  const TruncatedCompactPencil padded = finite_diag(16);
  const DecompositionCertificate c =
      decompose_free_extreme(GeneralizedOracle(padded), x, 17);
  REQUIRE(c.steps.size() == a.steps.size());
  for (size_t i = 0; i < a.steps.size(); ++i)
    CHECK(c.steps[i].alpha_scale ==
          doctest::Approx(a.steps[i].alpha_scale).epsilon(1e-7));
}

TEST_CASE("zero tail scalar member decomposes onto the interval ends") {
  const GeneralizedDecomposition out =
      decompose_generalized(finite_diag(12), scalar1(0.6), 17);
  CHECK(out.input_verdict.certainty == Certainty::CertifiedIn);
  CHECK(out.input_verdict.lower_margin == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(out.shrink == 1.0);
  CHECK(out.cert.steps.size() == 1);
  int total = 0;
  std::vector<double> vals;
  for (const MatrixTuple& c : out.cert.components) {
    total += c.n();
    vals.push_back(c.x[0](0, 0));
  }
  CHECK(total <= 2);  // n(g+1) with n=1, g=1
  std::sort(vals.begin(), vals.end());
  CHECK(vals.front() == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(vals.back() == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(out.cert.reconstruction_residual <= 1e-8);
  CHECK(out.cert.partition_residual <= 1e-10);
}

TEST_CASE("a point extreme for the truncation needs zero steps") {
  const GeneralizedDecomposition out =
      decompose_generalized(finite_diag(12), scalar1(1.0), 5);
  CHECK(out.cert.steps.empty());
  REQUIRE(out.cert.components.size() == 1);
  CHECK(out.cert.components[0].x[0](0, 0) == 1.0);
}

TEST_CASE("structured decomposition is certified into the compact set") {
  const TruncatedCompactPencil p = notadrop_example(16);
  const GeneralizedOracle oracle(p);
  // the shrink keeps the certified budget: both come from a 2x2-compression
  // dominated geometry, so the budget sits under the analytic bound 2 + 3/sqrt2
  CHECK(oracle.tail_budget() <= 4.13);
  CHECK(oracle.shrink() >= 0.79);
  CHECK(oracle.shrink() <= 0.91);

  const GeneralizedDecomposition out =
      decompose_generalized(p, level1(0.3, 0.2), 23);
  CHECK(out.input_verdict.certainty == Certainty::CertifiedIn);
  CHECK(out.cert.steps.size() <= 2);  // ng with n=1, g=2
  int total = 0;
  for (const MatrixTuple& c : out.cert.components) total += c.n();
  CHECK(total <= 3);  // n(g+1)
  CHECK(out.cert.reconstruction_residual <= 1e-6);
  CHECK(out.cert.partition_residual <= 1e-8);
  int prev = -1;
  for (const DilationStep& s : out.cert.steps) {
    CHECK(s.dim_after < s.dim_before);
    if (prev >= 0) CHECK(s.dim_before <= prev);
    prev = s.dim_after;
  }
  for (int d : out.cert.component_dilation_dims) CHECK(d == 0);
  for (int d : out.cert.component_commutant_dims) CHECK(d == 1);
  // every component is a certified member of the untruncated set
  for (const MatrixTuple& c : out.cert.components) {
    const TruncatedVerdict v = generalized_membership(out.pencil_used, c);
    CHECK(v.lower_margin >= -1e-6);
    CHECK(v.certainty != Certainty::CertifiedOut);
  }
}

TEST_CASE("structured level-2 decomposition stays within the span bound") {
  Rng rng(41);
  MatrixTuple x;
  x.x = {0.22 * rng.symmetric_gaussian(2), 0.22 * rng.symmetric_gaussian(2)};
  const TruncatedCompactPencil p = notadrop_example(16);
  const GeneralizedDecomposition out = decompose_generalized(p, x, 29);
  CHECK(out.cert.steps.size() <= 4);
  int total = 0;
  for (const MatrixTuple& c : out.cert.components) total += c.n();
  CHECK(total <= 6);
  CHECK(out.cert.reconstruction_residual <= 1e-6);
  CHECK(out.cert.partition_residual <= 1e-8);
  for (const DilationStep& s : out.cert.steps) CHECK(s.dim_after < s.dim_before);
}

TEST_CASE("decomposition rejects certified outsiders and flags the undecidable") {
  CHECK_THROWS_AS(decompose_generalized(notadrop_example(4), level1(3.0, 0.0), 1),
                  NotMemberError);
  // exactly on the head wall: every refinement keeps the verdict open
  CHECK_THROWS_AS(
      decompose_generalized(notadrop_example(4), level1(1.0, 0.0), 1, 1e-9, 32),
      UndecidedError);
}

TEST_CASE("dilation subspaces are stable under truncation refinement") {
  // exact-support case: kernels agree between the tight and padded orders
  const GeneralizedOracle g12(finite_diag(12));
  const GeneralizedOracle g16(finite_diag(16));
  CHECK(g12.dilation_subspace(scalar1(1.0)).cols() == 0);
  CHECK(g16.dilation_subspace(scalar1(1.0)).cols() == 0);
  CHECK(g12.dilation_subspace(scalar1(0.6)).cols() == 1);
  CHECK(g16.dilation_subspace(scalar1(0.6)).cols() == 1);

  // interior points of the structured set keep the full subspace at both N
  // and N+4
  const GeneralizedOracle n16(notadrop_example(16));
  const GeneralizedOracle n20(notadrop_example(20));
  for (const MatrixTuple& x : {level1(0.3, 0.2), level1(-0.2, 0.1)}) {
    CHECK(n16.dilation_subspace(x).cols() == 2);
    CHECK(n20.dilation_subspace(x).cols() == 2);
  }
}
