#include "fex/linalg.hpp"

#include <algorithm>
#include <numeric>

namespace fex {

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  if (m.size() == 0) return true;
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

namespace {

// One Jacobi rotation in the (p,q) plane, applied symmetrically to a and
// accumulated into v.
void jacobi_rotate(Matrix& a, Matrix& v, int p, int q) {
  const double apq = a(p, q);
  if (apq == 0.0) return;
  const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
  double t;
  if (tau >= 0.0)
    t = 1.0 / (tau + std::sqrt(1.0 + tau * tau));
  else
    t = -1.0 / (-tau + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const int n = static_cast<int>(a.rows());
  for (int k = 0; k < n; ++k) {
    const double akp = a(k, p), akq = a(k, q);
    a(k, p) = c * akp - s * akq;
    a(k, q) = s * akp + c * akq;
  }
  for (int k = 0; k < n; ++k) {
    const double apk = a(p, k), aqk = a(q, k);
    a(p, k) = c * apk - s * aqk;
    a(q, k) = s * apk + c * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (int k = 0; k < n; ++k) {
    const double vkp = v(k, p), vkq = v(k, q);
    v(k, p) = c * vkp - s * vkq;
    v(k, q) = s * vkp + c * vkq;
  }
}

double off_norm(const Matrix& a) {
  double s = 0.0;
  const int n = static_cast<int>(a.rows());
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
  return std::sqrt(2.0 * s);
}

}  // namespace

EigenSym sym_eigen(const Matrix& m) {
  if (m.rows() != m.cols()) throw ShapeError("sym_eigen: matrix not square");
  const int n = static_cast<int>(m.rows());
  EigenSym out;
  if (n == 0) {
    out.values = Vector(0);
    out.vectors = Matrix(0, 0);
    return out;
  }
  if (!is_symmetric(m, 1e-9))
    throw ShapeError("sym_eigen: matrix not symmetric");

  Matrix a = sym(m);
  Matrix v = Matrix::Identity(n, n);
  const double scale = a.cwiseAbs().maxCoeff();
  if (scale > 0.0) {
    const double stop = 1e-15 * scale * n;
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      const double off = off_norm(a);
      if (off <= stop) break;
      // threshold sweep: skip tiny pivots early so convergence is quadratic
      const double thresh = (sweep < 3) ? 0.2 * off / (n * n) : 0.0;
      for (int p = 0; p < n - 1; ++p)
        for (int q = p + 1; q < n; ++q)
          if (std::abs(a(p, q)) > thresh && a(p, q) != 0.0)
            jacobi_rotate(a, v, p, q);
    }
  }

  // sort descending, stable on the original diagonal index
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int i, int j) { return a(i, i) > a(j, j); });

  out.values = Vector(n);
  out.vectors = Matrix(n, n);
  for (int k = 0; k < n; ++k) {
    out.values(k) = a(idx[k], idx[k]);
    Vector col = v.col(idx[k]);
    // deterministic sign: largest-magnitude entry (first among ties) positive
    int best = 0;
    double besta = std::abs(col(0));
    for (int i = 1; i < n; ++i) {
      if (std::abs(col(i)) > besta) {
        besta = std::abs(col(i));
        best = i;
      }
    }
    if (col(best) < 0.0) col = -col;
    out.vectors.col(k) = col;
  }
  return out;
}

double min_eig(const Matrix& m) {
  if (m.rows() == 0) return std::numeric_limits<double>::infinity();
  EigenSym e = sym_eigen(m);
  return e.values(e.values.size() - 1);
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Matrix pinv(const Matrix& m, double rank_tol) {
  EigenSym e = sym_eigen(m);
  const int n = static_cast<int>(m.rows());
  if (n == 0) return Matrix(0, 0);
  const double amax = e.values.cwiseAbs().maxCoeff();
  Matrix out = Matrix::Zero(n, n);
  if (amax == 0.0) return out;
  const double cut = rank_tol * amax;
  for (int k = 0; k < n; ++k) {
    if (std::abs(e.values(k)) > cut)
      out += (1.0 / e.values(k)) * e.vectors.col(k) * e.vectors.col(k).transpose();
  }
  return sym(out);
}

KernelBasis kernel_basis(const Matrix& m, double tol) {
  EigenSym e = sym_eigen(m);
  const int n = static_cast<int>(m.rows());
  KernelBasis kb;
  kb.ambient = n;
  const double amax = n == 0 ? 0.0 : e.values.cwiseAbs().maxCoeff();
  kb.threshold = tol * std::max(1.0, amax);
  std::vector<int> cols;
  for (int k = 0; k < n; ++k)
    if (std::abs(e.values(k)) <= kb.threshold) cols.push_back(k);
  kb.basis = Matrix(n, static_cast<int>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) kb.basis.col(i) = e.vectors.col(cols[i]);
  return kb;
}

namespace {

std::vector<int> shuffle_perm(int d, const std::vector<int>& dims) {
  int n_total = 0;
  for (int nj : dims) {
    if (nj < 0) throw ShapeError("canonical_shuffle: negative block dim");
    n_total += nj;
  }
  std::vector<int> perm(d * n_total);
  int off = 0, base = 0;
  for (int nj : dims) {
    for (int a = 0; a < d; ++a)
      for (int b = 0; b < nj; ++b)
        perm[a * n_total + off + b] = base + a * nj + b;
    off += nj;
    base += d * nj;
  }
  return perm;
}

}  // namespace

Matrix canonical_shuffle(const Matrix& m, int d, const std::vector<int>& dims) {
  const std::vector<int> perm = shuffle_perm(d, dims);
  const int sz = static_cast<int>(perm.size());
  if (m.rows() != sz || m.cols() != sz)
    throw ShapeError("canonical_shuffle: size mismatch");
  Matrix out(sz, sz);
  for (int i = 0; i < sz; ++i)
    for (int j = 0; j < sz; ++j) out(perm[i], perm[j]) = m(i, j);
  return out;
}

Matrix canonical_unshuffle(const Matrix& m, int d, const std::vector<int>& dims) {
  const std::vector<int> perm = shuffle_perm(d, dims);
  const int sz = static_cast<int>(perm.size());
  if (m.rows() != sz || m.cols() != sz)
    throw ShapeError("canonical_unshuffle: size mismatch");
  Matrix out(sz, sz);
  for (int i = 0; i < sz; ++i)
    for (int j = 0; j < sz; ++j) out(i, j) = m(perm[i], perm[j]);
  return out;
}

bool schur_complement_psd_check(const Matrix& p, int top, double rank_tol) {
  if (p.rows() != p.cols()) throw ShapeError("schur check: not square");
  if (top < 0 || top > p.rows()) throw ShapeError("schur check: bad split");
  const int bot = static_cast<int>(p.rows()) - top;
  const Matrix r = p.topLeftCorner(top, top);
  const Matrix s = p.topRightCorner(top, bot);
  const Matrix t = sym(p.bottomRightCorner(bot, bot));

  const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());

  if (bot > 0 && min_eig(t) < -rank_tol * scale) return false;
  KernelBasis kt = kernel_basis(t, rank_tol);
  if (kt.dim() > 0 && top > 0) {
    if ((s * kt.basis).cwiseAbs().maxCoeff() > rank_tol * scale * 10.0)
      return false;
  }
  if (top == 0) return true;
  Matrix comp = sym(r - s * pinv(t, rank_tol) * s.transpose());
  return min_eig(comp) >= -rank_tol * scale;
}

Matrix orthonormal_columns(const Matrix& m, double tol) {
  const int n = static_cast<int>(m.rows());
  std::vector<Vector> basis;
  // greedy modified Gram-Schmidt with largest-residual pivoting
  std::vector<bool> used(m.cols(), false);
  for (int step = 0; step < m.cols(); ++step) {
    int best = -1;
    double best_norm = tol;
    Vector best_res;
    for (int j = 0; j < m.cols(); ++j) {
      if (used[j]) continue;
      Vector res = m.col(j);
      for (const Vector& b : basis) res -= b.dot(res) * b;
      for (const Vector& b : basis) res -= b.dot(res) * b;  // re-orthogonalize
      double nr = res.norm();
      if (nr > best_norm) {
        best_norm = nr;
        best = j;
        best_res = res;
      }
    }
    if (best < 0) break;
    used[best] = true;
    basis.push_back(best_res / best_norm);
  }
  Matrix out(n, static_cast<int>(basis.size()));
  for (size_t i = 0; i < basis.size(); ++i) out.col(i) = basis[i];
  return out;
}

Matrix orthogonal_complement(const Matrix& m, int n, double tol) {
  Matrix q = m.cols() == 0 ? Matrix(n, 0) : orthonormal_columns(m, tol);
  Matrix proj = Matrix::Identity(n, n) - q * q.transpose();
  return orthonormal_columns(proj, std::max(tol, 1e-9));
}

}  // namespace fex
