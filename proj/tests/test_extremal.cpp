#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fex/extremal.hpp"

using namespace fex;

namespace {

MatrixTuple scalar_tuple(std::initializer_list<double> vals) {
  std::vector<Matrix> x;
  for (double v : vals) x.push_back(Matrix::Constant(1, 1, v));
  return MatrixTuple(std::move(x));
}

// random tuple strictly inside the cube: eigenvalues squeezed into (-0.95, 0.95)
MatrixTuple random_cube_member(int g, int n, Rng& rng) {
  std::vector<Matrix> x;
  for (int l = 0; l < g; ++l) {
    EigenSym e = sym_eigen(rng.symmetric_gaussian(n));
    Vector d(n);
    for (int i = 0; i < n; ++i)
      d(i) = 0.95 * e.values(i) / (1.0 + std::abs(e.values(i)));
    x.push_back(sym(e.vectors * d.asDiagonal() * e.vectors.transpose()));
  }
  return MatrixTuple(std::move(x));
}

double cube_extreme_defect(const MatrixTuple& X) {
  double worst = 0.0;
  const Matrix id = Matrix::Identity(X.n(), X.n());
  for (const Matrix& m : X.x) worst = std::max(worst, (m * m - id).norm());
  return worst;
}

}  // namespace

TEST_CASE("dilate_tuple assembles borders and corners") {
  MatrixTuple X = scalar_tuple({0.25, -0.5});
  Vector beta(2);
  beta << 2.0, 3.0;
  Vector gamma(2);
  gamma << -1.0, 4.0;
  MatrixTuple Y = dilate_tuple(X, beta, gamma);
  CHECK(Y.n() == 2);
  CHECK(Y.x[0](0, 0) == 0.25);
  CHECK(Y.x[0](0, 1) == 2.0);
  CHECK(Y.x[0](1, 0) == 2.0);
  CHECK(Y.x[0](1, 1) == -1.0);
  CHECK(Y.x[1](0, 1) == 3.0);
  CHECK(Y.x[1](1, 1) == 4.0);
  CHECK_THROWS_AS(dilate_tuple(X, Vector::Zero(3), gamma), ShapeError);
}

TEST_CASE("interval dilation subspace dimensions") {
  LinearPencil A = interval_pencil();
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({1.0})).cols() == 0);
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({-1.0})).cols() == 0);
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({0.0})).cols() == 1);
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({0.5})).cols() == 1);
}

TEST_CASE("cube dilation subspace matches the square-identity criterion") {
  LinearPencil A = cube_pencil(2);
  // both coordinates pinned at +-1: nothing left to dilate
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({1.0, -1.0})).cols() == 0);
  // one coordinate pinned: exactly one free direction
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({1.0, 0.3})).cols() == 1);
  // interior: everything is free
  CHECK(dilation_subspace_spectrahedron(A, scalar_tuple({0.2, 0.3})).cols() == 2);
}

TEST_CASE("alpha maximization on the interval is exact and homogeneous") {
  SpectrahedronOracle K{interval_pencil()};
  MatrixTuple X = scalar_tuple({0.0});
  Vector b1 = Vector::Constant(1, 1.0);
  auto [a1, g1] = K.alpha_max(X, b1);
  CHECK(a1 == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(g1(0)) < 1e-5);
  Vector b2 = Vector::Constant(1, 2.0);
  auto [a2, g2] = K.alpha_max(X, b2);
  CHECK(a2 == doctest::Approx(0.5).epsilon(1e-6));
  (void)g2;
  CHECK_THROWS_AS(K.alpha_max(X, Vector::Zero(1)), DomainError);
}

TEST_CASE("alpha maximization rejects directions outside the dilation subspace") {
  SpectrahedronOracle K{interval_pencil()};
  // at a pinned endpoint the dilation subspace is trivial: every direction fails
  CHECK_THROWS_AS(K.alpha_max(scalar_tuple({1.0}), Vector::Constant(1, 1.0)),
                  DomainError);
}

TEST_CASE("gamma extreme point on the interval singleton corner set") {
  SpectrahedronOracle K{interval_pencil()};
  MatrixTuple X = scalar_tuple({0.0});
  Vector beta_hat = Vector::Constant(1, 1.0);  // alpha already maximal
  Vector gamma = gamma_extreme_point(K, X, beta_hat, 7);
  CHECK(std::abs(gamma(0)) < 1e-6);
}

TEST_CASE("maximal 1-dilation of the interval midpoint is the swap involution") {
  SpectrahedronOracle K{interval_pencil()};
  MatrixTuple X = scalar_tuple({0.0});
  DilationStep step = maximal_one_dilation(K, X, 5);
  CHECK(step.dim_before == 1);
  CHECK(step.dim_after == 0);
  CHECK(step.alpha_residual <= 1e-5);
  const Matrix y = step.dilated.x[0];
  CHECK(std::abs(std::abs(y(0, 1)) - 1.0) < 1e-9);
  CHECK(std::abs(y(1, 1)) < 1e-9);
  CHECK((y * y - Matrix::Identity(2, 2)).norm() < 1e-8);
  // the top-left block is the input, bitwise
  CHECK(y(0, 0) == 0.0);
}

TEST_CASE("maximal 1-dilation refuses Arveson extreme input") {
  SpectrahedronOracle K{interval_pencil()};
  CHECK_THROWS_AS(maximal_one_dilation(K, scalar_tuple({1.0}), 3), DomainError);
}

TEST_CASE("arveson dilation terminates immediately on extreme input") {
  SpectrahedronOracle K{cube_pencil(2)};
  MatrixTuple X = scalar_tuple({1.0, -1.0});
  auto [Y, steps] = arveson_dilate(K, X, 11);
  CHECK(steps.empty());
  CHECK(Y.n() == 1);
  CHECK(Y.x[0](0, 0) == 1.0);
  CHECK(Y.x[1](0, 0) == -1.0);
}

TEST_CASE("arveson dilation of a cube interior point") {
  SpectrahedronOracle K{cube_pencil(2)};
  MatrixTuple X = scalar_tuple({0.2, -0.4});
  auto [Y, steps] = arveson_dilate(K, X, 19);
  REQUIRE(!steps.empty());
  CHECK(steps.size() <= 2);  // initial dimension is n*g = 2
  int prev = steps.front().dim_before;
  for (const DilationStep& s : steps) {
    CHECK(s.dim_after < s.dim_before);
    CHECK(s.dim_before <= prev);
    prev = s.dim_after;
    CHECK(K.membership(s.dilated).inside);
  }
  CHECK(steps.back().dim_after == 0);
  CHECK(K.dilation_subspace(Y).cols() == 0);
  CHECK(cube_extreme_defect(Y) < 1e-7);
  // nested compressions reproduce the input exactly
  CHECK(Y.x[0](0, 0) == 0.2);
  CHECK(Y.x[1](0, 0) == -0.4);
}

TEST_CASE("membership is required for dilation and decomposition") {
  SpectrahedronOracle K{interval_pencil()};
  CHECK_THROWS_AS(arveson_dilate(K, scalar_tuple({2.0}), 1), NotMemberError);
  CHECK_THROWS_AS(decompose_free_extreme(K, scalar_tuple({2.0}), 1),
                  NotMemberError);
}

TEST_CASE("symmetric commutant dimensions") {
  {
    std::vector<Matrix> x{(Matrix(2, 2) << 1, 0, 0, 2).finished()};
    CHECK(symmetric_commutant(MatrixTuple(x)).size() == 2);
  }
  {
    std::vector<Matrix> x{(Matrix(2, 2) << 0, 1, 1, 0).finished()};
    CHECK(symmetric_commutant(MatrixTuple(x)).size() == 2);
  }
  {
    // generic irreducible pair: scalars only
    std::vector<Matrix> x{(Matrix(2, 2) << 0, 1, 1, 0).finished(),
                          (Matrix(2, 2) << 1, 0, 0, -1).finished()};
    auto basis = symmetric_commutant(MatrixTuple(x));
    CHECK(basis.size() == 1);
    // the one basis element is a multiple of the identity
    const Matrix& t = basis[0];
    CHECK(std::abs(t(0, 1)) < 1e-10);
    CHECK(t(0, 0) == doctest::Approx(t(1, 1)).epsilon(1e-10));
  }
  {
    // the identity always lies in the span
    std::vector<Matrix> x{(Matrix(3, 3) << 1, 0, 0, 0, 2, 0, 0, 0, 2).finished()};
    auto basis = symmetric_commutant(MatrixTuple(x));
    Matrix residual = Matrix::Identity(3, 3);
    for (const Matrix& t : basis)
      residual -= (t.cwiseProduct(residual).sum() / t.squaredNorm()) * t;
    // basis comes out orthogonal in the Frobenius inner product up to
    // vech weighting; a second sweep removes the rest
    for (const Matrix& t : basis)
      residual -= (t.cwiseProduct(residual).sum() / t.squaredNorm()) * t;
    CHECK(residual.norm() < 1e-6);
  }
}

TEST_CASE("irreducible decomposition splits direct sums and fixes irreducibles") {
  {
    // two copies of a scalar point split into equal scalar components
    std::vector<Matrix> x{(Matrix(2, 2) << 0.3, 0, 0, 0.3).finished(),
                          (Matrix(2, 2) << -0.2, 0, 0, -0.2).finished()};
    auto comps = irreducible_decomposition(MatrixTuple(x), 23);
    REQUIRE(comps.size() == 2);
    for (const auto& c : comps) {
      CHECK(c.x.n() == 1);
      CHECK(c.x.x[0](0, 0) == doctest::Approx(0.3).epsilon(1e-9));
      CHECK(c.x.x[1](0, 0) == doctest::Approx(-0.2).epsilon(1e-9));
      CHECK((c.u.transpose() * c.u - Matrix::Identity(1, 1)).norm() < 1e-10);
    }
  }
  {
    // an irreducible pair stays in one piece
    std::vector<Matrix> x{(Matrix(2, 2) << 0, 1, 1, 0).finished(),
                          (Matrix(2, 2) << 1, 0, 0, -1).finished()};
    auto comps = irreducible_decomposition(MatrixTuple(x), 29);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].x.n() == 2);
    CHECK((comps[0].u - Matrix::Identity(2, 2)).norm() < 1e-12);
  }
  {
    // swap matrix splits into its two eigenvalues
    std::vector<Matrix> x{(Matrix(2, 2) << 0, 1, 1, 0).finished()};
    auto comps = irreducible_decomposition(MatrixTuple(x), 31);
    REQUIRE(comps.size() == 2);
    std::vector<double> vals{comps[0].x.x[0](0, 0), comps[1].x.x[0](0, 0)};
    std::sort(vals.begin(), vals.end());
    CHECK(vals[0] == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(vals[1] == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("interval midpoint decomposes into the two endpoints") {
  SpectrahedronOracle K{interval_pencil()};
  DecompositionCertificate cert = decompose_free_extreme(K, scalar_tuple({0.0}), 41);
  REQUIRE(cert.components.size() == 2);
  std::vector<double> vals;
  for (size_t i = 0; i < cert.components.size(); ++i) {
    CHECK(cert.components[i].n() == 1);
    vals.push_back(cert.components[i].x[0](0, 0));
    // weights are the halves: each 1x1 isometry squares to 1/2
    CHECK(cert.isometries[i].squaredNorm() == doctest::Approx(0.5).epsilon(1e-8));
  }
  std::sort(vals.begin(), vals.end());
  CHECK(vals[0] == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(vals[1] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(cert.reconstruction_residual < 1e-9);
  CHECK(cert.partition_residual < 1e-9);
  CHECK(cert.steps.size() == 1);
}

TEST_CASE("free extreme input is its own certificate") {
  SpectrahedronOracle K{cube_pencil(2)};
  DecompositionCertificate cert =
      decompose_free_extreme(K, scalar_tuple({1.0, -1.0}), 43);
  REQUIRE(cert.components.size() == 1);
  CHECK(cert.steps.empty());
  CHECK(cert.components[0].n() == 1);
  CHECK(cert.isometries[0](0, 0) * cert.isometries[0](0, 0) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cert.reconstruction_residual < 1e-12);
}

TEST_CASE("random cube members satisfy all certificate invariants") {
  const int g = 2, n = 2;
  SpectrahedronOracle K{cube_pencil(g)};
  Rng rng(2024);
  for (int inst = 0; inst < 5; ++inst) {
    MatrixTuple X = random_cube_member(g, n, rng);
    DecompositionCertificate cert = decompose_free_extreme(K, X, 100 + inst);

    CHECK(cert.steps.size() <= static_cast<size_t>(n * g));
    int prev_after = -1;
    for (const DilationStep& s : cert.steps) {
      CHECK(s.dim_after < s.dim_before);
      if (prev_after >= 0) CHECK(s.dim_before == prev_after);
      prev_after = s.dim_after;
      CHECK(s.alpha_residual <= 1e-5);
      CHECK(K.membership(s.dilated).margin >= -1e-7);
    }

    int total = 0;
    Matrix partition = Matrix::Zero(n, n);
    std::vector<Matrix> recon(g, Matrix::Zero(n, n));
    for (size_t i = 0; i < cert.components.size(); ++i) {
      const MatrixTuple& comp = cert.components[i];
      const Matrix& v = cert.isometries[i];
      total += comp.n();
      CHECK(cert.component_dilation_dims[i] == 0);
      CHECK(cert.component_commutant_dims[i] == 1);
      CHECK(cube_extreme_defect(comp) < 1e-6);
      CHECK(K.membership(comp).margin >= -1e-7);
      partition += v.transpose() * v;
      for (int l = 0; l < g; ++l) recon[l] += v.transpose() * comp.x[l] * v;
    }
    CHECK(total <= n * (g + 1));
    CHECK((partition - Matrix::Identity(n, n)).norm() <= 1e-8);
    double rsq = 0.0;
    for (int l = 0; l < g; ++l) rsq += (X.x[l] - recon[l]).squaredNorm();
    CHECK(std::sqrt(rsq) <= 1e-6 * (1.0 + tuple_norm(X)));
  }
}

TEST_CASE("boundary polish drives active eigenvalues to zero") {
  {
    // M(p) = (1 - p) I: exact root at p = 1
    Matrix base = Matrix::Identity(2, 2);
    std::vector<Matrix> coeffs{-Matrix::Identity(2, 2)};
    Vector p0 = Vector::Constant(1, 1.0 - 1e-6);
    Vector p = boundary_polish(base, coeffs, Matrix(2, 0), p0);
    CHECK(std::abs(p(0) - 1.0) < 1e-11);
  }
  {
    // forced direction excluded: only the second eigenvalue is driven
    Matrix base = Matrix::Zero(2, 2);
    base(1, 1) = 1.0;
    std::vector<Matrix> coeffs{(Matrix(2, 2) << 0, 0, 0, -1).finished()};
    Matrix forced(2, 1);
    forced << 1, 0;
    Vector p0 = Vector::Constant(1, 1.0 - 3e-6);
    Vector p = boundary_polish(base, coeffs, forced, p0);
    CHECK(std::abs(p(0) - 1.0) < 1e-11);
  }
  {
    // nothing active: parameters come back untouched
    Matrix base = Matrix::Identity(2, 2);
    std::vector<Matrix> coeffs{-Matrix::Identity(2, 2)};
    Vector p0 = Vector::Constant(1, 0.25);
    Vector p = boundary_polish(base, coeffs, Matrix(2, 0), p0);
    CHECK(p(0) == 0.25);
  }
}

TEST_CASE("decomposition is deterministic for a fixed seed") {
  SpectrahedronOracle K{cube_pencil(2)};
  Rng rng(7777);
  MatrixTuple X = random_cube_member(2, 2, rng);
  DecompositionCertificate a = decompose_free_extreme(K, X, 555);
  DecompositionCertificate b = decompose_free_extreme(K, X, 555);
  REQUIRE(a.components.size() == b.components.size());
  for (size_t i = 0; i < a.components.size(); ++i) {
    for (int l = 0; l < 2; ++l)
      CHECK((a.components[i].x[l] - b.components[i].x[l]).cwiseAbs().maxCoeff() ==
            0.0);
    CHECK((a.isometries[i] - b.isometries[i]).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(a.reconstruction_residual == b.reconstruction_residual);
}
