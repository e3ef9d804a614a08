#include "fex/pencil.hpp"

#include <cmath>
#include <limits>

#include "fex/sdp.hpp"

namespace fex {

namespace {

void check_tuple(const std::vector<Matrix>& ms, const char* what) {
  if (ms.empty()) throw ShapeError(std::string(what) + ": empty tuple");
  const auto rows = ms[0].rows();
  for (const Matrix& m : ms) {
    if (m.rows() != rows || m.cols() != rows)
      throw ShapeError(std::string(what) + ": mixed orders");
    if (!is_symmetric(m)) throw ShapeError(std::string(what) + ": not symmetric");
  }
}

}  // namespace

MatrixTuple::MatrixTuple(std::vector<Matrix> xs) : x(std::move(xs)) {
  check_tuple(x, "MatrixTuple");
}

LinearPencil::LinearPencil(std::vector<Matrix> as) : a(std::move(as)) {
  check_tuple(a, "LinearPencil");
}

MatrixTuple zero_tuple(int g, int n) {
  MatrixTuple t;
  t.x.assign(g, Matrix::Zero(n, n));
  return t;
}

double tuple_norm(const MatrixTuple& X) {
  double s = 0.0;
  for (const Matrix& m : X.x) s += m.squaredNorm();
  return std::sqrt(s);
}

MatrixTuple tuple_direct_sum(const MatrixTuple& X, const MatrixTuple& Y) {
  if (X.g() != Y.g()) throw ShapeError("tuple_direct_sum: arity mismatch");
  MatrixTuple out;
  const int n = X.n(), m = Y.n();
  for (int l = 0; l < X.g(); ++l) {
    Matrix s = Matrix::Zero(n + m, n + m);
    s.topLeftCorner(n, n) = X.x[l];
    s.bottomRightCorner(m, m) = Y.x[l];
    out.x.push_back(s);
  }
  return out;
}

MatrixTuple tuple_compress(const MatrixTuple& X, const Matrix& v) {
  if (v.rows() != X.n()) throw ShapeError("tuple_compress: row mismatch");
  MatrixTuple out;
  for (const Matrix& m : X.x) out.x.push_back(sym(v.transpose() * m * v));
  return out;
}

Matrix eval_lambda(const LinearPencil& A, const MatrixTuple& X) {
  if (A.g() != X.g()) throw ShapeError("eval_lambda: arity mismatch");
  const int d = A.d(), n = X.n();
  Matrix s = Matrix::Zero(d * n, d * n);
  for (int l = 0; l < A.g(); ++l) s += kron(A.a[l], X.x[l]);
  return s;
}

Matrix eval_l(const LinearPencil& A, const MatrixTuple& X) {
  Matrix s = eval_lambda(A, X);
  return Matrix::Identity(s.rows(), s.cols()) - s;
}

MembershipVerdict membership(const LinearPencil& A, const MatrixTuple& X,
                             double tol) {
  EigenSym e = sym_eigen(eval_l(A, X));
  MembershipVerdict v;
  v.margin = e.values(e.values.size() - 1);
  v.inside = v.margin >= -tol;
  v.witness = e.vectors.col(e.values.size() - 1);
  return v;
}

BoundednessReport is_bounded(const LinearPencil& A, int trials,
                             std::uint64_t seed) {
  const int g = A.g();
  Rng rng(seed);
  BoundednessReport rep;

  // slice the recession cone by <c,delta> = 1 for generic c of both signs;
  // parametrize delta = c/|c|^2 + N u with N an orthonormal basis of c-perp
  for (int t = 0; t < trials; ++t) {
    Vector c0 = rng.unit_vector(g);
    for (int sign : {1, -1}) {
      ++rep.trials_used;
      Vector c = sign * c0;
      Vector delta0 = c / c.squaredNorm();
      Matrix nbasis = orthogonal_complement(c, g);

      // maximize the slack s in -Lambda_A(delta) >= s*I; always strictly feasible
      const int m = static_cast<int>(nbasis.cols()) + 1;
      SdpProblem p;
      p.num_vars = m;
      p.objective = Vector::Zero(m);
      p.objective(m - 1) = 1.0;
      SdpBlock blk;
      MatrixTuple d0t;
      d0t.x.reserve(g);
      for (int l = 0; l < g; ++l) d0t.x.push_back(Matrix::Constant(1, 1, delta0(l)));
      blk.f0 = -eval_lambda(A, d0t);
      const int dd = A.d();
      for (int k = 0; k + 1 < m; ++k) {
        Matrix f = Matrix::Zero(dd, dd);
        for (int l = 0; l < g; ++l) f -= nbasis(l, k) * A.a[l];
        blk.fi.push_back(f);
      }
      blk.fi.push_back(-Matrix::Identity(dd, dd));
      p.blocks.push_back(blk);
      SdpBlock cap;  // s <= 1 suffices: rays scale freely
      cap.f0 = Matrix::Constant(1, 1, 1.0);
      cap.fi.assign(m - 1, Matrix::Zero(1, 1));
      cap.fi.push_back(Matrix::Constant(1, 1, -1.0));
      p.blocks.push_back(cap);

      SdpResult r = sdp_solve(p);
      if (r.status != SdpStatus::Optimal) return rep;  // Inconclusive

      if (r.value >= 1e-7) {
        Vector delta = delta0;
        for (int k = 0; k + 1 < m; ++k) delta += r.y(k) * nbasis.col(k);
        delta /= delta.norm();
        MatrixTuple dt;
        for (int l = 0; l < g; ++l) dt.x.push_back(Matrix::Constant(1, 1, delta(l)));
        if (min_eig(-eval_lambda(A, dt)) >= -1e-9) {
          rep.verdict = Boundedness::Unbounded;
          rep.witness = delta;
          return rep;
        }
        return rep;  // positive value but unverifiable direction: Inconclusive
      }
      if (r.dual_bound > -1e-7) return rep;  // not certified empty: Inconclusive
    }
  }
  rep.verdict = Boundedness::Bounded;
  return rep;
}

LinearPencil interval_pencil() {
  Matrix a(2, 2);
  a << 1, 0, 0, -1;
  LinearPencil p;
  p.a.push_back(a);
  return p;
}

LinearPencil cube_pencil(int g) {
  if (g < 1) throw ShapeError("cube_pencil: g must be positive");
  LinearPencil p;
  for (int l = 0; l < g; ++l) {
    Matrix a = Matrix::Zero(2 * g, 2 * g);
    a(2 * l, 2 * l) = 1.0;
    a(2 * l + 1, 2 * l + 1) = -1.0;
    p.a.push_back(a);
  }
  return p;
}

std::pair<double, double> level1_range(const LinearPencil& A, int l) {
  if (l < 0 || l >= A.g()) throw ShapeError("level1_range: index out of range");
  EigenSym e = sym_eigen(A.a[l]);
  const double inf = std::numeric_limits<double>::infinity();
  double top = e.values(0);
  double bot = e.values(e.values.size() - 1);
  double hi = top > 0 ? 1.0 / top : inf;
  double lo = bot < 0 ? 1.0 / bot : -inf;
  return {lo, hi};
}

}  // namespace fex
