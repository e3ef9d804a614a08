#include "fex/extremal.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fex/sdp.hpp"

namespace fex {

namespace {

// orthonormal basis of the null space of an arbitrary (possibly wide) matrix,
// with a relative singular-value cutoff
Matrix null_space_cols(const Matrix& w, double rel_tol) {
  const int k = static_cast<int>(w.cols());
  if (w.rows() == 0 || k == 0) return Matrix::Identity(k, k);
  Matrix gram = sym(w.transpose() * w);
  const double nm = gram.cwiseAbs().maxCoeff();
  if (nm <= 1e-300) return Matrix::Identity(k, k);
  gram /= nm;
  return kernel_basis(gram, std::max(rel_tol * rel_tol, 1e-13)).basis;
}

// embed vectors on the first n of n+1 tensor columns: R^{d*n} -> R^{d*(n+1)}
Matrix embed_top(const Matrix& k, int d, int n) {
  Matrix out = Matrix::Zero(d * (n + 1), k.cols());
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < n; ++b) out.row(a * (n + 1) + b) = k.row(a * n + b);
  return out;
}

double tuple_fro(const MatrixTuple& x) {
  double s = 0.0;
  for (const Matrix& m : x.x) s += m.squaredNorm();
  return std::sqrt(s);
}

}  // namespace

MatrixTuple dilate_tuple(const MatrixTuple& X, const Vector& beta,
                         const Vector& gamma) {
  const int g = X.g();
  const int n = X.n();
  if (beta.size() != static_cast<long>(g) * n)
    throw ShapeError("dilate_tuple: border size mismatch");
  if (gamma.size() != g) throw ShapeError("dilate_tuple: corner size mismatch");
  std::vector<Matrix> out;
  out.reserve(g);
  for (int l = 0; l < g; ++l) {
    Matrix y = Matrix::Zero(n + 1, n + 1);
    y.topLeftCorner(n, n) = X.x[l];
    y.block(0, n, n, 1) = beta.segment(l * n, n);
    y.block(n, 0, 1, n) = beta.segment(l * n, n).transpose();
    y(n, n) = gamma(l);
    out.push_back(std::move(y));
  }
  return MatrixTuple(std::move(out));
}

Vector boundary_polish(const Matrix& base, const std::vector<Matrix>& coeffs,
                       const Matrix& forced, Vector p0, double active_tol,
                       double target_rel, int max_iter) {
  const int dim = static_cast<int>(base.rows());
  const int np = static_cast<int>(p0.size());
  if (static_cast<int>(coeffs.size()) != np)
    throw ShapeError("boundary_polish: coefficient count mismatch");

  auto assemble = [&](const Vector& p) {
    Matrix m = base;
    for (int j = 0; j < np; ++j) m += p(j) * coeffs[j];
    return sym(m);
  };

  Matrix m0 = assemble(p0);
  const double scale = 1.0 + m0.cwiseAbs().maxCoeff();
  const double shift = 2.0 * scale;

  // the near-zero spectrum outside the forced directions fixes the target count
  auto shifted_eig = [&](const Matrix& m) {
    Matrix ms = m;
    if (forced.cols() > 0) ms += shift * forced * forced.transpose();
    return sym_eigen(sym(ms));
  };
  EigenSym e0 = shifted_eig(m0);
  int k = 0;
  for (int i = 0; i < e0.values.size(); ++i)
    if (std::abs(e0.values(i)) <= active_tol * scale) ++k;
  if (k == 0) return p0;

  Vector p = p0, best_p = p0;
  double best_res = 1e300;
  const double step_cap = 0.5 * (1.0 + p0.cwiseAbs().maxCoeff());

  for (int iter = 0; iter < max_iter; ++iter) {
    Matrix m = assemble(p);
    EigenSym e = shifted_eig(m);
    // k smallest |lambda| eigenvectors of the shifted matrix
    std::vector<int> order(e.values.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return std::abs(e.values(a)) < std::abs(e.values(b));
    });
    Matrix v(dim, k);
    for (int i = 0; i < k; ++i) v.col(i) = e.vectors.col(order[i]);

    const int nr = k * (k + 1) / 2;
    Vector r(nr);
    Matrix jac(nr, np);
    int row = 0;
    for (int a = 0; a < k; ++a) {
      for (int b = a; b < k; ++b) {
        r(row) = v.col(a).dot(m * v.col(b));
        for (int j = 0; j < np; ++j)
          jac(row, j) = v.col(a).dot(coeffs[j] * v.col(b));
        ++row;
      }
    }
    const double res = r.cwiseAbs().maxCoeff();
    if (res < best_res) {
      best_res = res;
      best_p = p;
    }
    if (res <= target_rel * scale) break;

    Vector dp = -pinv(sym(jac.transpose() * jac), 1e-12) * (jac.transpose() * r);
    const double dn = dp.cwiseAbs().maxCoeff();
    if (dn > step_cap) dp *= step_cap / dn;
    p += dp;
  }
  return best_p;
}

Matrix dilation_subspace_spectrahedron(const LinearPencil& A, const MatrixTuple& X,
                                       double kernel_tol) {
  const int g = A.g();
  const int d = A.d();
  const int n = X.n();
  if (X.g() != g) throw ShapeError("dilation subspace: arity mismatch");
  const Matrix L = eval_l(A, X);
  const KernelBasis kb = kernel_basis(L, kernel_tol);
  const int nk = kb.dim();
  if (nk == 0) return Matrix::Identity(n * g, n * g);

  // row block j: beta |-> Lambda_A(beta^T) v_j, columns indexed by (l, i)
  Matrix m = Matrix::Zero(d * nk, n * g);
  for (int j = 0; j < nk; ++j) {
    Matrix vj(d, n);
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < n; ++b) vj(a, b) = kb.basis(a * n + b, j);
    for (int l = 0; l < g; ++l) {
      Matrix av = A.a[l] * vj;  // d x n
      m.block(j * d, l * n, d, n) = av;
    }
  }
  Matrix gram = sym(m.transpose() * m);
  const double nm = gram.cwiseAbs().maxCoeff();
  if (nm > 1e-300) gram /= nm;
  return kernel_basis(gram, 1e-12).basis;
}

// ---------------------------------------------------------------------------
// pencil-backed oracle

SpectrahedronOracle::SpectrahedronOracle(LinearPencil pencil, double kernel_tol)
    : pencil_(std::move(pencil)), kernel_tol_(kernel_tol) {
  radii_.reserve(pencil_.g());
  for (int l = 0; l < pencil_.g(); ++l) {
    auto [lo, hi] = level1_range(pencil_, l);
    double r = std::max(std::abs(lo), std::abs(hi));
    if (!std::isfinite(r)) r = 1e6;  // boxes only help when the body is bounded
    radii_.push_back(std::max(r, 1e-6));
  }
  radius_ = 1.0;
  for (double r : radii_) radius_ = std::max(radius_, r);
}

MembershipVerdict SpectrahedronOracle::membership(const MatrixTuple& X) const {
  return fex::membership(pencil_, X, kernel_tol_);
}

Matrix SpectrahedronOracle::dilation_subspace(const MatrixTuple& X) const {
  return dilation_subspace_spectrahedron(pencil_, X, kernel_tol_);
}

SpectrahedronOracle::Reduced SpectrahedronOracle::reduce(const MatrixTuple& X,
                                                         const Vector& beta) const {
  const int g = pencil_.g();
  const int d = pencil_.d();
  const int n = X.n();
  if (beta.size() != static_cast<long>(g) * n)
    throw ShapeError("alpha/gamma solve: direction size mismatch");
  if (beta.cwiseAbs().maxCoeff() <= 1e-300)
    throw DomainError("dilation direction is zero");

  Reduced r;
  r.corner = Matrix::Zero(d * n, d);
  for (int l = 0; l < g; ++l)
    r.corner += kron(pencil_.a[l], Matrix(beta.segment(l * n, n)));

  const Matrix L = eval_l(pencil_, X);
  const KernelBasis kb = kernel_basis(L, kernel_tol_);
  if (kb.dim() > 0) {
    const double res = (r.corner.transpose() * kb.basis).cwiseAbs().maxCoeff();
    if (res > 1e-6 * (1.0 + r.corner.cwiseAbs().maxCoeff()))
      throw DomainError("direction leaves the dilation subspace: no 1-dilation");
  }
  r.q = sym(r.corner.transpose() * pinv(L, kernel_tol_) * r.corner);
  return r;
}

std::pair<double, Vector> SpectrahedronOracle::alpha_max(const MatrixTuple& X,
                                                         const Vector& beta) const {
  const int g = pencil_.g();
  const int d = pencil_.d();
  const int n = X.n();
  const Reduced rd = reduce(X, beta);

  // scale cap: any member has column norms below the per-coordinate radius
  double tau_cap = 1e8;
  for (int l = 0; l < g; ++l) {
    const double bl = beta.segment(l * n, n).norm();
    if (bl > 1e-12) {
      const double a = (radii_[l] + 1.0) / bl;
      tau_cap = std::min(tau_cap, a * a);
    }
  }

  SdpProblem p;
  p.num_vars = g + 1;  // (gamma, tau); alpha = sqrt(tau)
  p.objective = Vector::Zero(g + 1);
  p.objective(g) = 1.0;
  SdpBlock blk;
  blk.f0 = Matrix::Identity(d, d);
  blk.fi.assign(g + 1, Matrix());
  for (int l = 0; l < g; ++l) blk.fi[l] = -pencil_.a[l];
  blk.fi[g] = -rd.q;
  p.blocks.push_back(std::move(blk));
  p.y_bound = std::max(10.0 * (radius_ + 1.0), 1.5 * tau_cap + 10.0);
  p.feasible_hint = Vector::Zero(g + 1);

  const SdpResult res = sdp_solve(p);
  if (res.status != SdpStatus::Optimal)
    throw NumericalFailure("dilation scale optimization failed");
  const double tau = std::max(res.y(g), 0.0);
  return {std::sqrt(tau), res.y.head(g)};
}

Vector SpectrahedronOracle::gamma_maximize(const MatrixTuple& X, const Vector& beta,
                                           const Vector& c, const Vector& gamma0,
                                           const Matrix& frame) const {
  const int g = pencil_.g();
  const int d = pencil_.d();
  const int k = static_cast<int>(frame.cols());
  if (k == 0) return gamma0;
  const Reduced rd = reduce(X, beta);

  // exact-penalty slack restores strict feasibility when the face is thin
  Matrix f0 = Matrix::Identity(d, d) - rd.q;
  for (int l = 0; l < g; ++l) f0 -= gamma0(l) * pencil_.a[l];
  f0 = sym(f0);
  const double rcap = 10.0 * (1.0 + f0.cwiseAbs().maxCoeff());

  SdpProblem p;
  p.num_vars = k + 1;  // (u, slack)
  p.objective = Vector::Zero(k + 1);
  p.objective.head(k) = frame.transpose() * c;

  SdpBlock blk;
  blk.f0 = f0;
  blk.fi.assign(k + 1, Matrix());
  for (int j = 0; j < k; ++j) {
    Matrix fj = Matrix::Zero(d, d);
    for (int l = 0; l < g; ++l) fj -= frame(l, j) * pencil_.a[l];
    blk.fi[j] = fj;
  }
  blk.fi[k] = Matrix::Identity(d, d);
  p.blocks.push_back(std::move(blk));

  auto scalar_block = [&](double f0v, int var, double coeff) {
    SdpBlock sb;
    sb.f0 = Matrix::Constant(1, 1, f0v);
    sb.fi.assign(k + 1, Matrix::Zero(1, 1));
    sb.fi[var](0, 0) = coeff;
    p.blocks.push_back(std::move(sb));
  };
  scalar_block(0.0, k, 1.0);    // slack >= 0
  scalar_block(rcap, k, -1.0);  // slack <= rcap
  for (int l = 0; l < g; ++l) {
    // corner coordinates stay inside the level-1 box
    SdpBlock lo, hi;
    lo.f0 = Matrix::Constant(1, 1, radii_[l] + 1.0 + gamma0(l));
    hi.f0 = Matrix::Constant(1, 1, radii_[l] + 1.0 - gamma0(l));
    lo.fi.assign(k + 1, Matrix::Zero(1, 1));
    hi.fi.assign(k + 1, Matrix::Zero(1, 1));
    for (int j = 0; j < k; ++j) {
      lo.fi[j](0, 0) = frame(l, j);
      hi.fi[j](0, 0) = -frame(l, j);
    }
    p.blocks.push_back(std::move(lo));
    p.blocks.push_back(std::move(hi));
  }

  p.y_bound = 10.0 * (radius_ + 2.0) * std::sqrt(static_cast<double>(g)) + rcap;
  Vector hint = Vector::Zero(k + 1);
  hint(k) = std::max(0.0, -min_eig(f0)) + 0.1;
  p.feasible_hint = hint;

  // the penalty weight must beat the active multipliers for the slack to
  // vanish, but an oversized weight wrecks the solver's scaling; escalate
  // and keep the first solve that is both converged and slack-free
  for (double scale : {1e2, 1e4, 1e6}) {
    p.objective(k) = -scale * (1.0 + c.cwiseAbs().maxCoeff());
    const SdpResult res = sdp_solve(p);
    if (res.status != SdpStatus::Optimal || res.achieved_tol > 1e-8) continue;
    if (res.y(k) > 1e-6 * (1.0 + rcap)) continue;
    if (std::abs(res.dual_bound - res.value) > 1e-5 * (1.0 + std::abs(res.value)))
      continue;
    return gamma0 + frame * res.y.head(k);
  }
  throw NumericalFailure("corner functional optimization failed");
}

Matrix SpectrahedronOracle::face_normals(const MatrixTuple& X, const Vector& beta,
                                         const Vector& gamma) const {
  const int g = pencil_.g();
  const int d = pencil_.d();
  const Reduced rd = reduce(X, beta);
  Matrix slack = Matrix::Identity(d, d) - rd.q;
  for (int l = 0; l < g; ++l) slack -= gamma(l) * pencil_.a[l];
  const KernelBasis kb = kernel_basis(sym(slack), 1e-6);
  const int q = kb.dim();
  if (q == 0) return Matrix(0, g);
  Matrix rows(q * (q + 1) / 2, g);
  int row = 0;
  for (int a = 0; a < q; ++a)
    for (int b = a; b < q; ++b) {
      for (int l = 0; l < g; ++l)
        rows(row, l) = kb.basis.col(a).dot(pencil_.a[l] * kb.basis.col(b));
      ++row;
    }
  return rows;
}

void SpectrahedronOracle::refine_dilation(const MatrixTuple& X, Vector& beta,
                                          Vector& gamma) const {
  const int g = pencil_.g();
  const int d = pencil_.d();
  const int n = X.n();

  const Matrix base =
      eval_l(pencil_, dilate_tuple(X, Vector::Zero(static_cast<long>(g) * n),
                                   Vector::Zero(g)));
  std::vector<Matrix> coeffs;
  coeffs.reserve(1 + g);
  {
    std::vector<Matrix> border;
    border.reserve(g);
    for (int l = 0; l < g; ++l) {
      Matrix s = Matrix::Zero(n + 1, n + 1);
      s.block(0, n, n, 1) = beta.segment(l * n, n);
      s.block(n, 0, 1, n) = beta.segment(l * n, n).transpose();
      border.push_back(std::move(s));
    }
    coeffs.push_back(-eval_lambda(pencil_, MatrixTuple(std::move(border))));
  }
  Matrix corner_unit = Matrix::Zero(n + 1, n + 1);
  corner_unit(n, n) = 1.0;
  for (int l = 0; l < g; ++l) coeffs.push_back(-kron(pencil_.a[l], corner_unit));

  const KernelBasis kb = kernel_basis(eval_l(pencil_, X), kernel_tol_);
  const Matrix forced = embed_top(kb.basis, d, n);

  Vector p0(1 + g);
  p0(0) = 1.0;
  p0.tail(g) = gamma;
  const Vector p = boundary_polish(base, coeffs, forced, p0, 1e-5, 1e-12, 40);

  // accept only a genuinely local correction
  if (std::abs(p(0) - 1.0) <= 1e-3 &&
      (p.tail(g) - gamma).cwiseAbs().maxCoeff() <=
          1e-3 * (1.0 + gamma.cwiseAbs().maxCoeff())) {
    beta *= p(0);
    gamma = p.tail(g);
  }
}

// ---------------------------------------------------------------------------
// oracle-generic engine

Vector gamma_extreme_point(const ConvexBodyOracle& K, const MatrixTuple& X,
                           const Vector& beta_hat, std::uint64_t seed,
                           const Vector* gamma_hint) {
  const int g = K.arity();
  for (int attempt = 0; attempt < 3; ++attempt) {
    try {
      Rng rng(seed + 977ull * attempt);
      Matrix frame = Matrix::Identity(g, g);
      Vector gamma = gamma_hint ? *gamma_hint : Vector::Zero(g);
      int rounds = 0;
      while (frame.cols() > 0 && rounds <= g + 1) {
        const Vector c = frame * rng.unit_vector(static_cast<int>(frame.cols()));
        gamma = K.gamma_maximize(X, beta_hat, c, gamma, frame);
        const Matrix face = K.face_normals(X, beta_hat, gamma);
        Matrix w(face.rows() + 1, frame.cols());
        if (face.rows() > 0) w.topRows(face.rows()) = face * frame;
        w.bottomRows(1) = (frame.transpose() * c).transpose();
        frame = frame * null_space_cols(w, 1e-4);
        ++rounds;
      }
      if (frame.cols() > 0)
        throw NumericalFailure("face fixing failed to terminate");

      // probe both sides of 20 random directions; an extreme point always
      // loses at least one side
      const double theta = K.probe_inside_tol();
      bool extreme = true;
      for (int t = 0; t < 20 && extreme; ++t) {
        const Vector sigma = rng.unit_vector(g);
        const double mp =
            K.membership(dilate_tuple(X, beta_hat, gamma + 1e-5 * sigma)).margin;
        const double mm =
            K.membership(dilate_tuple(X, beta_hat, gamma - 1e-5 * sigma)).margin;
        if (mp >= -theta && mm >= -theta) extreme = false;
      }
      if (extreme) return gamma;
    } catch (const NumericalFailure&) {
      // fall through to the next attempt
    }
  }
  throw NumericalFailure("no verified extreme corner point after retries");
}

namespace {

DilationStep maximal_one_dilation_impl(const ConvexBodyOracle& K,
                                       const MatrixTuple& X, std::uint64_t seed,
                                       const Matrix* subspace_pre) {
  const Matrix subspace =
      subspace_pre ? *subspace_pre : K.dilation_subspace(X);
  const int k0 = static_cast<int>(subspace.cols());
  if (k0 == 0)
    throw DomainError("point is already an Arveson extreme point: nothing to dilate");

  for (int attempt = 0; attempt < 4; ++attempt) {
    try {
      Rng rng(seed + 7919ull * attempt + 1);
      Vector beta = subspace * rng.unit_vector(k0);
      const double bn = beta.norm();
      if (bn <= 1e-300) continue;
      beta /= bn;

      auto [alpha, gamma0] = K.alpha_max(X, beta);
      if (alpha <= 1e-10) continue;
      Vector beta_hat = alpha * beta;
      Vector gamma_hat = gamma_extreme_point(K, X, beta_hat,
                                             seed + 7919ull * attempt + 101,
                                             &gamma0);
      K.refine_dilation(X, beta_hat, gamma_hat);

      const MatrixTuple dilated = dilate_tuple(X, beta_hat, gamma_hat);
      if (K.membership(dilated).margin < -1e-7) continue;

      const double alpha_check = K.alpha_max(X, beta_hat).first;
      const double alpha_res = std::abs(alpha_check - 1.0);
      if (alpha_res > 1e-5) continue;

      const int dim_after =
          static_cast<int>(K.dilation_subspace(dilated).cols());
      if (dim_after >= k0) continue;

      DilationStep step;
      step.beta = beta_hat;
      step.gamma = gamma_hat;
      step.alpha_scale = alpha;
      step.alpha_residual = alpha_res;
      step.dim_before = k0;
      step.dim_after = dim_after;
      step.dilated = dilated;
      return step;
    } catch (const NumericalFailure&) {
    } catch (const DomainError&) {
    }
  }
  throw InvariantViolation(
      "dilation subspace dimension failed to decrease after retries");
}

}  // namespace

DilationStep maximal_one_dilation(const ConvexBodyOracle& K, const MatrixTuple& X,
                                  std::uint64_t seed) {
  return maximal_one_dilation_impl(K, X, seed, nullptr);
}

std::pair<MatrixTuple, std::vector<DilationStep>> arveson_dilate(
    const ConvexBodyOracle& K, const MatrixTuple& X, std::uint64_t seed) {
  if (K.membership(X).margin < -1e-7)
    throw NotMemberError("dilation requested for a point outside the set");

  MatrixTuple Y = X;
  std::vector<DilationStep> steps;
  int k0_initial = -1;
  while (true) {
    const Matrix subspace = K.dilation_subspace(Y);
    const int dim = static_cast<int>(subspace.cols());
    if (dim == 0) break;
    if (k0_initial < 0) k0_initial = dim;
    if (static_cast<int>(steps.size()) >= k0_initial)
      throw InvariantViolation("dilation chain exceeded its dimension budget");
    DilationStep step = maximal_one_dilation_impl(
        K, Y, seed + 1000003ull * steps.size(), &subspace);
    Y = step.dilated;
    steps.push_back(std::move(step));
  }
  return {Y, steps};
}

std::vector<Matrix> symmetric_commutant(const MatrixTuple& X) {
  const int n = X.n();
  const int g = X.g();
  const int m = n * (n + 1) / 2;

  std::vector<Matrix> param;
  param.reserve(m);
  for (int p = 0; p < n; ++p)
    for (int q = p; q < n; ++q) {
      Matrix s = Matrix::Zero(n, n);
      s(p, q) = 1.0;
      s(q, p) = 1.0;
      param.push_back(std::move(s));
    }

  Matrix c(static_cast<long>(g) * n * n, m);
  for (int j = 0; j < m; ++j) {
    for (int l = 0; l < g; ++l) {
      const Matrix comm = X.x[l] * param[j] - param[j] * X.x[l];
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          c(static_cast<long>(l) * n * n + a * n + b, j) = comm(a, b);
    }
  }
  Matrix gram = sym(c.transpose() * c);
  const double nm = gram.cwiseAbs().maxCoeff();
  if (nm > 1e-300) gram /= nm;
  const Matrix basis = kernel_basis(gram, 1e-10).basis;

  std::vector<Matrix> out;
  out.reserve(basis.cols());
  for (int j = 0; j < basis.cols(); ++j) {
    Matrix t = Matrix::Zero(n, n);
    for (int i = 0; i < m; ++i) t += basis(i, j) * param[i];
    out.push_back(sym(t));
  }
  return out;
}

namespace {

void split_irreducible(const MatrixTuple& X, const Matrix& u_acc,
                       std::uint64_t seed, int depth,
                       std::vector<IrreducibleComponent>* out) {
  const int n = X.n();
  if (depth > n)
    throw NumericalFailure("irreducible splitting exceeded its depth budget");

  const std::vector<Matrix> basis = symmetric_commutant(X);
  if (basis.size() == 1) {
    out->push_back({X, u_acc});
    return;
  }

  double xscale = 1.0;
  for (const Matrix& m : X.x) xscale = std::max(xscale, m.cwiseAbs().maxCoeff());

  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(seed + 131ull * trial + 17);
    Matrix t = Matrix::Zero(n, n);
    for (const Matrix& b : basis) t += rng.gaussian() * b;
    t = sym(t);
    const EigenSym e = sym_eigen(t);
    const double tscale = 1.0 + e.values.cwiseAbs().maxCoeff();

    // cluster the (descending) spectrum by gaps
    std::vector<std::pair<int, int>> clusters;  // [begin, end)
    int begin = 0;
    for (int i = 1; i <= n; ++i) {
      if (i == n || e.values(i - 1) - e.values(i) > 1e-6 * tscale) {
        clusters.push_back({begin, i});
        begin = i;
      }
    }
    if (clusters.size() < 2) continue;

    // verify the clusters genuinely reduce the tuple before recursing
    bool good = true;
    for (size_t ci = 0; ci < clusters.size() && good; ++ci)
      for (size_t cj = ci + 1; cj < clusters.size() && good; ++cj) {
        const auto [bi, ei] = clusters[ci];
        const auto [bj, ej] = clusters[cj];
        const Matrix ui = e.vectors.middleCols(bi, ei - bi);
        const Matrix uj = e.vectors.middleCols(bj, ej - bj);
        for (int l = 0; l < X.g() && good; ++l)
          if ((ui.transpose() * X.x[l] * uj).cwiseAbs().maxCoeff() >
              1e-8 * (1.0 + xscale))
            good = false;
      }
    if (!good) continue;

    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      const auto [b, eN] = clusters[ci];
      const Matrix uc = e.vectors.middleCols(b, eN - b);
      split_irreducible(tuple_compress(X, uc), u_acc * uc,
                        seed + 9176ull * (ci + 1) + 131ull * trial, depth + 1,
                        out);
    }
    return;
  }
  throw NumericalFailure("commutant-based splitting failed: degenerate draws");
}

}  // namespace

std::vector<IrreducibleComponent> irreducible_decomposition(const MatrixTuple& X,
                                                            std::uint64_t seed) {
  std::vector<IrreducibleComponent> out;
  split_irreducible(X, Matrix::Identity(X.n(), X.n()), seed, 0, &out);
  return out;
}

DecompositionCertificate decompose_free_extreme(const ConvexBodyOracle& K,
                                                const MatrixTuple& X,
                                                std::uint64_t seed) {
  const MembershipVerdict verdict = K.membership(X);
  if (verdict.margin < -1e-7)
    throw NotMemberError("decomposition requested for a point outside the set");

  DecompositionCertificate cert;
  cert.input = X;
  cert.seed = seed;
  cert.membership_tol = 1e-7;
  cert.kernel_tol = 1e-9;

  auto [Y, steps] = arveson_dilate(K, X, seed);
  cert.arveson = Y;
  cert.steps = std::move(steps);

  const int n = X.n();
  const int g = X.g();
  const std::vector<IrreducibleComponent> comps =
      irreducible_decomposition(Y, seed ^ 0x9e3779b97f4a7c15ull);

  Matrix partition = Matrix::Zero(n, n);
  std::vector<Matrix> recon(g, Matrix::Zero(n, n));
  int total_order = 0;
  for (const IrreducibleComponent& comp : comps) {
    const Matrix v = comp.u.topRows(n).transpose();  // n_i x n
    if (v.norm() <= 1e-12) continue;                 // zero-weight summand

    const int dil_dim = static_cast<int>(K.dilation_subspace(comp.x).cols());
    const int comm_dim = static_cast<int>(symmetric_commutant(comp.x).size());
    if (dil_dim != 0)
      throw InvariantViolation("component is not an Arveson extreme point");
    if (comm_dim != 1)
      throw InvariantViolation("component is reducible");

    cert.components.push_back(comp.x);
    cert.isometries.push_back(v);
    cert.component_dilation_dims.push_back(dil_dim);
    cert.component_commutant_dims.push_back(comm_dim);
    partition += v.transpose() * v;
    for (int l = 0; l < g; ++l) recon[l] += v.transpose() * comp.x.x[l] * v;
    total_order += comp.x.n();
  }

  if (total_order > n * (g + 1))
    throw InvariantViolation("component orders exceed the dilation size bound");

  double recon_sq = 0.0;
  for (int l = 0; l < g; ++l) recon_sq += (X.x[l] - recon[l]).squaredNorm();
  cert.reconstruction_residual = std::sqrt(recon_sq);
  cert.partition_residual = (partition - Matrix::Identity(n, n)).norm();

  const double xnorm = tuple_fro(X);
  if (cert.reconstruction_residual > 1e-5 * (1.0 + xnorm))
    throw InvariantViolation("matrix convex combination failed to reconstruct");
  if (cert.partition_residual > 1e-6)
    throw InvariantViolation("isometries fail the partition identity");
  return cert;
}

}  // namespace fex
