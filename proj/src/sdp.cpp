#include "fex/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace fex {

namespace {

constexpr double kDefaultBox = 1e4;

struct Blocks {
  std::vector<Matrix> f0;
  std::vector<std::vector<Matrix>> fi;  // [block][var]
  int m = 0;

  int total_dim() const {
    int t = 0;
    for (const auto& f : f0) t += static_cast<int>(f.rows());
    return t;
  }
};

// Structural connected components of the union sparsity pattern across
// f0 and all fi of one block. Splitting keeps the eigen work cubic in the
// true coupled sizes (a coordinate-block pencil stays coordinate-block).
std::vector<std::vector<int>> sparsity_components(const Matrix& f0,
                                                  const std::vector<Matrix>& fi) {
  const int d = static_cast<int>(f0.rows());
  std::vector<int> parent(d);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  auto touch = [&](const Matrix& mat) {
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j)
        if (mat(i, j) != 0.0 || mat(j, i) != 0.0) unite(i, j);
  };
  touch(f0);
  for (const Matrix& f : fi) touch(f);
  std::vector<std::vector<int>> comps;
  std::vector<int> where(d, -1);
  for (int i = 0; i < d; ++i) {
    int r = find(i);
    if (where[r] < 0) {
      where[r] = static_cast<int>(comps.size());
      comps.emplace_back();
    }
    comps[where[r]].push_back(i);
  }
  return comps;
}

Matrix extract(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(idx.size(), idx.size());
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t j = 0; j < idx.size(); ++j) out(i, j) = m(idx[i], idx[j]);
  return out;
}

struct SplitMap {
  // per original block: list of (work-block index, original index set)
  std::vector<std::vector<std::pair<int, std::vector<int>>>> parts;
};

Blocks split_blocks(const Blocks& in, SplitMap* map) {
  Blocks out;
  out.m = in.m;
  map->parts.assign(in.f0.size(), {});
  for (size_t b = 0; b < in.f0.size(); ++b) {
    auto comps = sparsity_components(in.f0[b], in.fi[b]);
    for (const auto& idx : comps) {
      map->parts[b].push_back({static_cast<int>(out.f0.size()), idx});
      out.f0.push_back(extract(in.f0[b], idx));
      std::vector<Matrix> fis;
      fis.reserve(in.m);
      for (int i = 0; i < in.m; ++i) fis.push_back(extract(in.fi[b][i], idx));
      out.fi.push_back(std::move(fis));
    }
  }
  return out;
}

struct IpmOut {
  bool ok = false;
  Vector y;
  std::vector<Matrix> Z;
  int iters = 0;
  double err = 1e30;  // max of the three relative residuals at exit
};

struct EigCache {
  EigenSym e;
  Matrix inv, inv_half, half;
};

EigCache cache_psd_eig(const Matrix& s) {
  EigCache c;
  c.e = sym_eigen(s);
  const int d = static_cast<int>(s.rows());
  // relative floor: a boundary iterate can carry a tiny negative eigenvalue
  // from step rounding; flooring keeps the scaling finite and well bounded
  const double top = c.e.values.size() ? c.e.values.maxCoeff() : 0.0;
  Vector vals = c.e.values.cwiseMax(1e-14 * std::max(1.0, top));
  Matrix q = c.e.vectors;
  c.inv = q * vals.cwiseInverse().asDiagonal() * q.transpose();
  c.inv_half = q * vals.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  c.half = q * vals.cwiseSqrt().asDiagonal() * q.transpose();
  (void)d;
  return c;
}

// largest alpha <= cap with x + alpha*dx PSD, via the scaled spectrum
double step_length(const EigCache& xc, const Matrix& dx, double cap) {
  Matrix d = sym(xc.inv_half * dx * xc.inv_half);
  double lam = min_eig(d);
  if (lam >= -1e-14) return cap;
  return std::min(cap, -1.0 / lam);
}

IpmOut ipm(const Blocks& B, const Vector& c, const std::optional<Vector>& y0,
           const std::vector<Matrix>* s0, double tol, int max_iter) {
  const int m = B.m;
  const int nb = static_cast<int>(B.f0.size());
  int totdim = B.total_dim();

  IpmOut out;
  Vector y = (y0 && y0->size() == m) ? *y0 : Vector::Zero(m);
  std::vector<Matrix> S(nb), Z(nb);
  const double zscale = 1.0 + (c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
  for (int b = 0; b < nb; ++b) {
    const int d = static_cast<int>(B.f0[b].rows());
    double fs = 1.0 + B.f0[b].cwiseAbs().maxCoeff();
    for (int i = 0; i < m; ++i) fs = std::max(fs, B.fi[b][i].cwiseAbs().maxCoeff());
    S[b] = (s0 ? (*s0)[b] : Matrix(fs * Matrix::Identity(d, d)));
    Z[b] = zscale * Matrix::Identity(d, d);
  }

  const double cnorm = 1.0 + (c.size() ? c.cwiseAbs().maxCoeff() : 0.0);
  std::vector<double> f0norm(nb);
  for (int b = 0; b < nb; ++b) f0norm[b] = 1.0 + B.f0[b].cwiseAbs().maxCoeff();

  Vector best_y = y;
  std::vector<Matrix> best_Z = Z;
  double best_err = 1e30;
  int stall = 0;

  for (int iter = 0; iter < max_iter; ++iter) {
    out.iters = iter;
    // residuals
    std::vector<Matrix> Rd(nb);
    Vector Rp = c;
    double gap = 0.0;
    double rd_rel = 0.0;
    for (int b = 0; b < nb; ++b) {
      Matrix f = B.f0[b];
      for (int i = 0; i < m; ++i) f += y(i) * B.fi[b][i];
      Rd[b] = f - S[b];
      rd_rel = std::max(rd_rel, Rd[b].cwiseAbs().maxCoeff() / f0norm[b]);
      gap += S[b].cwiseProduct(Z[b]).sum();
      for (int i = 0; i < m; ++i) Rp(i) += B.fi[b][i].cwiseProduct(Z[b]).sum();
    }
    const double mu = gap / std::max(1, totdim);
    const double obj = c.size() ? c.dot(y) : 0.0;
    const double rp_rel = m ? Rp.cwiseAbs().maxCoeff() / cnorm : 0.0;
    const double gap_rel = std::abs(gap) / (1.0 + std::abs(obj));
    const double err = std::max({rd_rel, rp_rel, gap_rel});

    if (err < best_err) {
      best_err = err;
      best_y = y;
      best_Z = Z;
      stall = 0;
    } else if (++stall > 12) {
      break;
    }
    if (rd_rel <= tol && rp_rel <= tol && gap_rel <= tol) {
      best_err = err;
      best_y = y;
      best_Z = Z;
      out.ok = true;
      break;
    }

    // NT scalings
    std::vector<EigCache> sc(nb);
    std::vector<Matrix> G(nb), GRdG(nb);
    for (int b = 0; b < nb; ++b) {
      sc[b] = cache_psd_eig(S[b]);
      Matrix t = sym(sc[b].half * Z[b] * sc[b].half);
      EigenSym et = sym_eigen(t);
      Matrix thalf = et.vectors *
                     et.values.cwiseMax(1e-300).cwiseSqrt().asDiagonal() *
                     et.vectors.transpose();
      G[b] = sym(sc[b].inv_half * thalf * sc[b].inv_half);
      GRdG[b] = G[b] * Rd[b] * G[b];
    }

    // reduced system M dy = r(sigma)
    Matrix M = Matrix::Zero(m, m);
    Vector qv = Vector::Zero(m), wv = Vector::Zero(m);
    for (int b = 0; b < nb; ++b) {
      std::vector<Matrix> H(m);
      for (int i = 0; i < m; ++i) H[i] = G[b] * B.fi[b][i] * G[b];
      for (int i = 0; i < m; ++i) {
        for (int j = i; j < m; ++j) {
          double v = H[i].cwiseProduct(B.fi[b][j]).sum();
          M(i, j) += v;
        }
        qv(i) += B.fi[b][i].cwiseProduct(sc[b].inv).sum();
        wv(i) += B.fi[b][i].cwiseProduct(GRdG[b]).sum();
      }
    }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < i; ++j) M(i, j) = M(j, i);

    EigenSym em = m ? sym_eigen(sym(M)) : EigenSym{Vector(0), Matrix(0, 0)};
    const double mcut =
        m ? 1e-13 * std::max(1.0, em.values.cwiseAbs().maxCoeff()) : 0.0;
    auto msolve = [&](const Vector& r) {
      Vector dy = Vector::Zero(m);
      for (int k = 0; k < m; ++k) {
        if (em.values(k) > mcut)
          dy += (em.vectors.col(k).dot(r) / em.values(k)) * em.vectors.col(k);
      }
      return dy;
    };

    auto direction = [&](double sigma, Vector& dy, std::vector<Matrix>& dS,
                         std::vector<Matrix>& dZ) {
      Vector r(m);
      for (int i = 0; i < m; ++i)
        r(i) = (c.size() ? c(i) : 0.0) + sigma * mu * qv(i) - wv(i);
      dy = msolve(r);
      dS.resize(nb);
      dZ.resize(nb);
      for (int b = 0; b < nb; ++b) {
        dS[b] = Rd[b];
        for (int i = 0; i < m; ++i) dS[b] += dy(i) * B.fi[b][i];
        dZ[b] = sym(sigma * mu * sc[b].inv - Z[b] - G[b] * dS[b] * G[b]);
      }
    };

    // predictor probe fixes the centering weight
    Vector dya;
    std::vector<Matrix> dSa, dZa;
    direction(0.0, dya, dSa, dZa);
    double as = 1.0, az = 1.0;
    for (int b = 0; b < nb; ++b) {
      as = std::min(as, step_length(sc[b], dSa[b], 1.0));
      EigCache zc = cache_psd_eig(Z[b]);
      az = std::min(az, step_length(zc, dZa[b], 1.0));
    }
    double mu_aff = 0.0;
    for (int b = 0; b < nb; ++b)
      mu_aff += (S[b] + as * dSa[b]).cwiseProduct(Z[b] + az * dZa[b]).sum();
    mu_aff = std::max(0.0, mu_aff / std::max(1, totdim));
    double sigma = mu > 0 ? std::pow(mu_aff / mu, 3.0) : 0.1;
    sigma = std::clamp(sigma, 1e-10, 0.9);

    Vector dy;
    std::vector<Matrix> dS, dZ;
    direction(sigma, dy, dS, dZ);
    double alpha_s = 1.0, alpha_z = 1.0;
    for (int b = 0; b < nb; ++b) {
      alpha_s = std::min(alpha_s, 0.99 * step_length(sc[b], dS[b], 1.0 / 0.99));
      EigCache zc = cache_psd_eig(Z[b]);
      alpha_z = std::min(alpha_z, 0.99 * step_length(zc, dZ[b], 1.0 / 0.99));
    }
    y += alpha_s * dy;
    for (int b = 0; b < nb; ++b) {
      S[b] = sym(S[b] + alpha_s * dS[b]);
      Z[b] = sym(Z[b] + alpha_z * dZ[b]);
    }
    bool bad = m && (!y.allFinite() || y.cwiseAbs().maxCoeff() > 1e13);
    for (int b = 0; b < nb && !bad; ++b)
      bad = !S[b].allFinite() || !Z[b].allFinite() ||
            Z[b].cwiseAbs().maxCoeff() > 1e13;
    if (bad) break;
  }

  out.y = best_y;
  out.Z = best_Z;
  out.err = best_err;
  return out;
}

Vector block_margins(const std::vector<SdpBlock>& blocks, const Vector& y) {
  Vector margins(blocks.size());
  for (size_t b = 0; b < blocks.size(); ++b) {
    if (blocks[b].f0.rows() == 0) {
      margins(b) = 1e30;  // empty block: vacuously PSD
      continue;
    }
    Matrix f = blocks[b].f0;
    for (int i = 0; i < y.size(); ++i) f += y(i) * blocks[b].fi[i];
    margins(b) = min_eig(sym(f));
  }
  return margins;
}

void validate(const SdpProblem& p) {
  const int m = p.num_vars;
  if (m < 0) throw ShapeError("sdp: negative num_vars");
  if (p.objective.size() != 0 && p.objective.size() != m)
    throw ShapeError("sdp: objective size mismatch");
  for (const auto& b : p.blocks) {
    if (b.f0.rows() != b.f0.cols()) throw ShapeError("sdp: block f0 not square");
    if (static_cast<int>(b.fi.size()) != m)
      throw ShapeError("sdp: block coefficient count mismatch");
    if (!is_symmetric(b.f0, 1e-9)) throw ShapeError("sdp: block f0 not symmetric");
    for (const auto& f : b.fi) {
      if (f.rows() != b.f0.rows() || f.cols() != b.f0.cols())
        throw ShapeError("sdp: block coefficient shape mismatch");
      if (!is_symmetric(f, 1e-9)) throw ShapeError("sdp: coefficient not symmetric");
    }
  }
}

// work problem: original blocks (split) first, then box rows, then
// optionally the phase-1 margin variable with its cap row
struct Work {
  Blocks blocks;
  SplitMap smap;
  int n_orig_work = 0;  // work blocks that came from original blocks
};

Work build_work(const SdpProblem& p, double box, bool phase1, double cap) {
  const int m = p.num_vars;
  const int mt = phase1 ? m + 1 : m;
  Blocks raw;
  raw.m = mt;
  for (const auto& blk : p.blocks) {
    if (blk.f0.rows() == 0) continue;
    raw.f0.push_back(sym(blk.f0));
    std::vector<Matrix> fis;
    fis.reserve(mt);
    for (int i = 0; i < m; ++i) fis.push_back(sym(blk.fi[i]));
    if (phase1)
      fis.push_back(-Matrix::Identity(blk.f0.rows(), blk.f0.cols()));
    raw.fi.push_back(std::move(fis));
  }
  Work w;
  w.blocks = split_blocks(raw, &w.smap);
  w.n_orig_work = static_cast<int>(w.blocks.f0.size());
  auto scalar_block = [&](double f0v, int var, double coeff) {
    Matrix f0(1, 1);
    f0(0, 0) = f0v;
    std::vector<Matrix> fis(mt, Matrix::Zero(1, 1));
    if (var >= 0) fis[var](0, 0) = coeff;
    w.blocks.f0.push_back(f0);
    w.blocks.fi.push_back(std::move(fis));
  };
  for (int i = 0; i < m; ++i) {
    scalar_block(box, i, -1.0);
    scalar_block(box, i, 1.0);
  }
  if (phase1) scalar_block(cap, mt - 1, -1.0);
  return w;
}

std::vector<Matrix> reassemble_duals(const SdpProblem& p, const Work& w,
                                     const std::vector<Matrix>& z_work) {
  std::vector<Matrix> out;
  size_t raw_b = 0;
  for (const auto& blk : p.blocks) {
    if (blk.f0.rows() == 0) {
      out.push_back(Matrix(0, 0));
      continue;
    }
    Matrix z = Matrix::Zero(blk.f0.rows(), blk.f0.cols());
    for (const auto& [wb, idx] : w.smap.parts[raw_b]) {
      for (size_t i = 0; i < idx.size(); ++i)
        for (size_t j = 0; j < idx.size(); ++j)
          z(idx[i], idx[j]) = z_work[wb](i, j);
    }
    out.push_back(sym(z));
    ++raw_b;
  }
  return out;
}

// PSD projection for certificates: clamp tiny negative ripple
Matrix psd_part(const Matrix& m) {
  EigenSym e = sym_eigen(m);
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (int k = 0; k < e.values.size(); ++k)
    if (e.values(k) > 0)
      out += e.values(k) * e.vectors.col(k) * e.vectors.col(k).transpose();
  return sym(out);
}

double dual_objective(const Blocks& b, const std::vector<Matrix>& z) {
  double v = 0.0;
  for (size_t k = 0; k < b.f0.size(); ++k) v += b.f0[k].cwiseProduct(z[k]).sum();
  return v;
}

SdpResult trivial_solve(const SdpProblem& p, double feas_tol) {
  // no variables: a direct eigen check decides everything
  SdpResult res;
  res.y = Vector(0);
  res.margins = block_margins(p.blocks, res.y);
  res.feasibility_margin =
      res.margins.size() ? res.margins.minCoeff() : 1e30;
  res.phase1_value = res.feasibility_margin;
  if (res.feasibility_margin >= -feas_tol) {
    res.status = SdpStatus::Optimal;
    for (const auto& b : p.blocks)
      res.dual.push_back(Matrix::Zero(b.f0.rows(), b.f0.cols()));
    return res;
  }
  // Farkas certificate: projector onto the negative eigenspace of the most
  // violated block
  int worst = 0;
  for (int b = 1; b < res.margins.size(); ++b)
    if (res.margins(b) < res.margins(worst)) worst = b;
  for (size_t b = 0; b < p.blocks.size(); ++b) {
    Matrix z = Matrix::Zero(p.blocks[b].f0.rows(), p.blocks[b].f0.cols());
    if (static_cast<int>(b) == worst) {
      EigenSym e = sym_eigen(sym(p.blocks[b].f0));
      double tr = 0.0;
      for (int k = 0; k < e.values.size(); ++k)
        if (e.values(k) < 0) {
          z += e.vectors.col(k) * e.vectors.col(k).transpose();
          tr += 1.0;
        }
      if (tr > 0) z /= tr;
    }
    res.dual.push_back(z);
  }
  res.farkas_obj = 0.0;
  for (size_t b = 0; b < p.blocks.size(); ++b)
    res.farkas_obj += res.dual[b].cwiseProduct(sym(p.blocks[b].f0)).sum();
  res.farkas_lin = 0.0;
  res.status = SdpStatus::Infeasible;
  return res;
}

}  // namespace

SdpResult sdp_feasible_point(const SdpProblem& p, double feas_tol, int max_iter) {
  SdpProblem q = p;
  q.objective = Vector::Zero(p.num_vars);
  return sdp_solve(q, feas_tol, max_iter);
}

SdpResult sdp_solve(const SdpProblem& p, double feas_tol, int max_iter) {
  validate(p);
  const int m = p.num_vars;
  if (m == 0) return trivial_solve(p, feas_tol);

  const double box = p.y_bound > 0 ? p.y_bound : kDefaultBox;
  Vector c = p.objective.size() ? p.objective : Vector::Zero(m);
  const bool pure_feasibility = c.cwiseAbs().maxCoeff() == 0.0;
  const double ipm_tol = std::min(1e-10, feas_tol * 1e-2);

  SdpResult res;

  Vector y_start;
  bool have_start = false;
  if (p.feasible_hint && p.feasible_hint->size() == m &&
      p.feasible_hint->cwiseAbs().maxCoeff() < box) {
    Vector hint_margins = block_margins(p.blocks, *p.feasible_hint);
    if (hint_margins.size() == 0 || hint_margins.minCoeff() > 0) {
      y_start = *p.feasible_hint;
      have_start = true;
    }
  }

  double t_star = 0.0;
  if (!have_start) {
    // phase 1: maximize the uniform margin t
    double cap = 10.0;
    for (const auto& b : p.blocks)
      if (b.f0.rows() > 0) cap = std::max(cap, 1.0 + b.f0.cwiseAbs().maxCoeff() * b.f0.rows());
    Work w1 = build_work(p, box, true, cap);
    Vector c1 = Vector::Zero(m + 1);
    c1(m) = 1.0;
    IpmOut o1 = ipm(w1.blocks, c1, std::nullopt, nullptr, ipm_tol, max_iter);
    res.iterations += o1.iters;
    if (!o1.ok && o1.err > 1e-5) {
      res.status = SdpStatus::NumericalFailure;
      res.achieved_tol = o1.err;
      return res;
    }
    t_star = o1.y(m);
    res.phase1_value = t_star;
    Vector y1 = o1.y.head(m);

    if (t_star <= feas_tol) {
      // candidate infeasibility (or boundary): try the Farkas certificate
      std::vector<Matrix> z_orig = reassemble_duals(p, w1, o1.Z);
      double tr = 0.0;
      for (auto& z : z_orig) {
        z = psd_part(z);
        tr += z.trace();
      }
      if (tr > 1e-300) {
        double fobj = 0.0, flin = 0.0;
        for (size_t b = 0; b < p.blocks.size(); ++b) z_orig[b] /= tr;
        for (size_t b = 0; b < p.blocks.size(); ++b)
          if (p.blocks[b].f0.rows() > 0)
            fobj += z_orig[b].cwiseProduct(sym(p.blocks[b].f0)).sum();
        for (int i = 0; i < m; ++i) {
          double v = 0.0;
          for (size_t b = 0; b < p.blocks.size(); ++b)
            if (p.blocks[b].f0.rows() > 0)
              v += z_orig[b].cwiseProduct(sym(p.blocks[b].fi[i])).sum();
          flin = std::max(flin, std::abs(v));
        }
        if (fobj <= -feas_tol && flin <= 10.0 * feas_tol) {
          res.status = SdpStatus::Infeasible;
          res.y = y1;
          res.dual = z_orig;
          res.farkas_obj = fobj;
          res.farkas_lin = flin;
          res.margins = block_margins(p.blocks, y1);
          res.feasibility_margin =
              res.margins.size() ? res.margins.minCoeff() : 1e30;
          res.achieved_tol = o1.err;
          return res;
        }
      }
      if (t_star < -feas_tol) {
        // margin is decisively negative but the certificate did not verify
        res.status = SdpStatus::NumericalFailure;
        res.achieved_tol = o1.err;
        res.margins = block_margins(p.blocks, y1);
        res.feasibility_margin =
            res.margins.size() ? res.margins.minCoeff() : 1e30;
        return res;
      }
    }

    if (pure_feasibility) {
      res.status = SdpStatus::Optimal;
      res.y = y1;
      res.value = 0.0;
      res.dual = reassemble_duals(p, w1, o1.Z);
      res.margins = block_margins(p.blocks, y1);
      res.feasibility_margin =
          res.margins.size() ? res.margins.minCoeff() : 1e30;
      res.dual_bound = 0.0;
      res.achieved_tol = o1.err;
      return res;
    }
    y_start = y1;
    have_start = t_star > 0;
  }

  // phase 2: optimize the objective
  Work w2 = build_work(p, box, false, 0.0);
  std::optional<Vector> y0;
  std::vector<Matrix> s0;
  const std::vector<Matrix>* s0p = nullptr;
  if (have_start) {
    y0 = y_start;
    bool good = true;
    s0.reserve(w2.blocks.f0.size());
    for (size_t b = 0; b < w2.blocks.f0.size(); ++b) {
      Matrix f = w2.blocks.f0[b];
      for (int i = 0; i < m; ++i) f += y_start(i) * w2.blocks.fi[b][i];
      f = sym(f);
      double lam = min_eig(f);
      if (lam <= 0) {
        f += (std::abs(lam) + 1e-6) * Matrix::Identity(f.rows(), f.cols());
      }
      if (!(f.cwiseAbs().maxCoeff() < 1e300)) good = false;
      s0.push_back(f);
    }
    if (good) s0p = &s0;
  }
  IpmOut o2 = ipm(w2.blocks, c, y0, s0p, ipm_tol, max_iter);
  res.iterations += o2.iters;

  const bool accept = o2.ok || o2.err <= 1e-6;
  res.y = o2.y;
  res.value = c.dot(o2.y);
  res.dual = reassemble_duals(p, w2, o2.Z);
  res.margins = block_margins(p.blocks, o2.y);
  res.feasibility_margin = res.margins.size() ? res.margins.minCoeff() : 1e30;
  res.dual_bound = dual_objective(w2.blocks, o2.Z);
  res.achieved_tol = o2.err;
  res.status = accept ? SdpStatus::Optimal : SdpStatus::NumericalFailure;
  return res;
}

}  // namespace fex
