#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fex/sdp.hpp"

using namespace fex;

namespace {

Matrix m1(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return m;
}

SdpBlock scalar_block(double f0, std::vector<double> coeffs) {
  SdpBlock b;
  b.f0 = m1(f0);
  for (double c : coeffs) b.fi.push_back(m1(c));
  return b;
}

}  // namespace

TEST_CASE("1x1 LMI: maximize y with 2 - y >= 0") {
  SdpProblem p;
  p.num_vars = 1;
  p.objective = Vector::Ones(1);
  p.blocks.push_back(scalar_block(2.0, {-1.0}));
  SdpResult r = sdp_solve(p);
  REQUIRE(r.status == SdpStatus::Optimal);
  CHECK(r.y(0) == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-7));
  // dual multiplier of the active row is 1
  CHECK(r.dual[0](0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.dual_bound >= r.value - 1e-6);
  CHECK(r.margins(0) >= -1e-8);
}

TEST_CASE("constant negative block is infeasible with certificate Z=1") {
  SdpProblem p;
  p.num_vars = 0;
  p.blocks.push_back(SdpBlock{m1(-1.0), {}});
  SdpResult r = sdp_solve(p);
  REQUIRE(r.status == SdpStatus::Infeasible);
  CHECK(r.dual[0](0, 0) == doctest::Approx(1.0));
  CHECK(r.farkas_obj == doctest::Approx(-1.0));
}

TEST_CASE("disjoint scalar constraints y>=2, y<=0 infeasible with balanced Farkas pair") {
  SdpProblem p;
  p.num_vars = 1;
  p.blocks.push_back(scalar_block(-2.0, {1.0}));
  p.blocks.push_back(scalar_block(0.0, {-1.0}));
  SdpResult r = sdp_feasible_point(p);
  REQUIRE(r.status == SdpStatus::Infeasible);
  // normalized certificate: z = (1/2, 1/2), <Z,F0> = -1, <Z,F1> = 0
  CHECK(r.dual[0](0, 0) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(r.dual[1](0, 0) == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(r.farkas_obj <= -1e-8);
  CHECK(r.farkas_obj == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(r.farkas_lin <= 1e-7);
}

TEST_CASE("genuine 2x2 SDP: maximize y with [[1-y, y],[y, 1]] PSD") {
  // PSD iff 1-y >= 0 and (1-y) - y^2 >= 0: y* = (sqrt(5)-1)/2
  SdpProblem p;
  p.num_vars = 1;
  p.objective = Vector::Ones(1);
  SdpBlock b;
  b.f0 = Matrix::Identity(2, 2);
  Matrix f(2, 2);
  f << -1, 1, 1, 0;
  b.fi = {f};
  p.blocks.push_back(b);
  SdpResult r = sdp_solve(p);
  REQUIRE(r.status == SdpStatus::Optimal);
  CHECK(r.y(0) == doctest::Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-7));
  CHECK(r.margins(0) >= -1e-8);
  CHECK(r.dual_bound >= r.value - 1e-6);
}

TEST_CASE("feasibility margin matches independent recomputation") {
  SdpProblem p;
  p.num_vars = 2;
  SdpBlock b;
  b.f0 = Matrix::Identity(3, 3);
  Rng rng(7);
  b.fi = {rng.symmetric_gaussian(3), rng.symmetric_gaussian(3)};
  p.blocks.push_back(b);
  SdpResult r = sdp_feasible_point(p);
  REQUIRE(r.status == SdpStatus::Optimal);
  Matrix f = b.f0 + r.y(0) * b.fi[0] + r.y(1) * b.fi[1];
  CHECK(std::abs(r.feasibility_margin - min_eig(sym(f))) <= 1e-8);
  CHECK(r.feasibility_margin > 0);  // strictly feasible from phase 1
}

TEST_CASE("weak duality and feasibility on random bounded problems") {
  Rng rng(2025);
  for (int trial = 0; trial < 25; ++trial) {
    int m = 1 + trial % 3;
    int d = 2 + trial % 3;
    SdpProblem p;
    p.num_vars = m;
    p.objective = rng.gaussian_vector(m);
    SdpBlock b;
    Matrix g = rng.gaussian_matrix(d, d);
    b.f0 = sym(g * g.transpose()) + Matrix::Identity(d, d);
    for (int i = 0; i < m; ++i) b.fi.push_back(rng.symmetric_gaussian(d));
    p.blocks.push_back(b);
    // norm ball on y keeps it bounded even if coefficients align
    SdpBlock ball;
    int n = m + 1;
    ball.f0 = Matrix::Identity(n, n) * 10.0;
    ball.f0(n - 1, n - 1) = 10.0;
    for (int i = 0; i < m; ++i) {
      Matrix f = Matrix::Zero(n, n);
      f(i, n - 1) = f(n - 1, i) = 1.0;
      ball.fi.push_back(f);
    }
    p.blocks.push_back(ball);
    SdpResult r = sdp_solve(p);
    REQUIRE(r.status == SdpStatus::Optimal);
    CHECK(r.feasibility_margin >= -1e-8);
    CHECK(r.dual_bound >= r.value - 1e-6);
    for (const auto& z : r.dual) CHECK(min_eig(z) >= -1e-9);
  }
}

TEST_CASE("determinism: identical problems give bitwise identical results") {
  auto build = [] {
    SdpProblem p;
    p.num_vars = 2;
    p.objective = Vector(2);
    p.objective << 1.0, -0.5;
    SdpBlock b;
    b.f0 = Matrix::Identity(3, 3);
    Rng rng(11);
    b.fi = {rng.symmetric_gaussian(3), rng.symmetric_gaussian(3)};
    p.blocks.push_back(b);
    return p;
  };
  SdpResult a = sdp_solve(build());
  SdpResult b = sdp_solve(build());
  REQUIRE(a.status == b.status);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.value == b.value);
  CHECK((a.dual[0] - b.dual[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feasible_hint path reaches the same optimum") {
  SdpProblem p;
  p.num_vars = 1;
  p.objective = Vector::Ones(1);
  p.blocks.push_back(scalar_block(2.0, {-1.0}));
  p.feasible_hint = Vector::Zero(1);
  SdpResult r = sdp_solve(p);
  REQUIRE(r.status == SdpStatus::Optimal);
  CHECK(r.y(0) == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("block-diagonal structure is handled (coordinate split)") {
  // two independent intervals: maximize y1 + y2 over [-1,1]^2 encoded as
  // one 4x4 block-diagonal LMI
  SdpProblem p;
  p.num_vars = 2;
  p.objective = Vector::Ones(2);
  SdpBlock b;
  b.f0 = Matrix::Identity(4, 4);
  Matrix f1 = Matrix::Zero(4, 4), f2 = Matrix::Zero(4, 4);
  f1(0, 0) = -1;
  f1(1, 1) = 1;
  f2(2, 2) = -1;
  f2(3, 3) = 1;
  b.fi = {f1, f2};
  p.blocks.push_back(b);
  SdpResult r = sdp_solve(p);
  REQUIRE(r.status == SdpStatus::Optimal);
  CHECK(r.value == doctest::Approx(2.0).epsilon(1e-7));
  CHECK(r.y(0) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(r.y(1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("shape validation") {
  SdpProblem p;
  p.num_vars = 1;
  SdpBlock b;
  b.f0 = Matrix::Zero(2, 3);
  b.fi = {Matrix::Zero(2, 2)};
  p.blocks.push_back(b);
  CHECK_THROWS_AS(sdp_solve(p), ShapeError);
}
