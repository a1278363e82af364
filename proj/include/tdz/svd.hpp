// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "tdz/tensor.hpp"

namespace tdz {

/// u (I×P, orthonormal columns), s (P values, non-increasing), v (P×J,
/// orthonormal rows) with u·diag(s)·v ≈ m. P = min(I,J), or the requested
/// rank for truncated decompositions.
template <std::floating_point T>
struct SvdTriple {
  Tensor<T> u;
  std::vector<double> s;
  Tensor<T> v;
};

struct SvdOptions {
  /// Converged once every column pair satisfies |g_p·g_q| / (‖g_p‖‖g_q‖) below this.
  double tolerance = 1e-10;
  int max_sweeps = 60;
};

namespace detail {

// Column-major double matrix; column j occupies [j*rows, (j+1)*rows).
struct ColMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<double> v;

  ColMatrix() = default;
  ColMatrix(Index r, Index c) : rows(r), cols(c), v(r * c, 0.0) {}

  double* col(Index j) { return v.data() + j * rows; }
  const double* col(Index j) const { return v.data() + j * rows; }
  double& operator()(Index i, Index j) { return v[j * rows + i]; }
  double operator()(Index i, Index j) const { return v[j * rows + i]; }
};

inline double dot(const double* a, const double* b, Index n) {
  double s = 0.0;
  for (Index i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// Householder reflectors of a thin QR, a = Q·R with Q = H_0·H_1·…·H_{n-1}.
struct HouseholderQr {
  std::vector<std::vector<double>> reflectors;  // reflector k acts on rows [k, m)
  std::vector<double> beta;                     // H_k = I − beta_k v vᵀ
  ColMatrix r;                                  // n×n upper triangle
  Index m = 0;
};

inline HouseholderQr householder_qr(ColMatrix a) {
  const Index m = a.rows, n = a.cols;
  HouseholderQr qr;
  qr.m = m;
  qr.reflectors.resize(n);
  qr.beta.assign(n, 0.0);
  for (Index k = 0; k < n; ++k) {
    double* x = a.col(k) + k;
    const Index len = m - k;
    const double norm = std::sqrt(dot(x, x, len));
    std::vector<double> vk(x, x + len);
    if (norm == 0.0) {
      qr.reflectors[k] = std::move(vk);
      continue;
    }
    const double alpha = x[0] > 0 ? -norm : norm;
    vk[0] -= alpha;
    const double vv = dot(vk.data(), vk.data(), len);
    if (vv > 0.0) {
      const double beta = 2.0 / vv;
      qr.beta[k] = beta;
      for (Index j = k + 1; j < n; ++j) {
        double* y = a.col(j) + k;
        const double f = beta * dot(vk.data(), y, len);
        for (Index i = 0; i < len; ++i) y[i] -= f * vk[i];
      }
    }
    x[0] = alpha;
    std::fill(x + 1, x + len, 0.0);
    qr.reflectors[k] = std::move(vk);
  }
  qr.r = ColMatrix(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i <= j; ++i) qr.r(i, j) = a(i, j);
  return qr;
}

// Q·[y; 0] for an n×k block y.
inline ColMatrix apply_q(const HouseholderQr& qr, const ColMatrix& y) {
  const Index n = y.rows;
  ColMatrix out(qr.m, y.cols);
  for (Index j = 0; j < y.cols; ++j) std::copy(y.col(j), y.col(j) + n, out.col(j));
  for (Index kk = n; kk-- > 0;) {
    if (qr.beta[kk] == 0.0) continue;
    const auto& vk = qr.reflectors[kk];
    const Index len = qr.m - kk;
    for (Index j = 0; j < out.cols; ++j) {
      double* c = out.col(j) + kk;
      const double f = qr.beta[kk] * dot(vk.data(), c, len);
      if (f == 0.0) continue;
      for (Index i = 0; i < len; ++i) c[i] -= f * vk[i];
    }
  }
  return out;
}

// Fills the columns of `basis` not flagged in `keep` with unit basis vectors
// orthogonalized (two Gram-Schmidt passes) against every flagged column.
inline void complete_orthonormal(ColMatrix& basis, std::vector<bool> keep) {
  const Index m = basis.rows;
  std::vector<double> cand(m);
  Index next_unit = 0;
  for (Index j = 0; j < basis.cols; ++j) {
    if (keep[j]) continue;
    while (next_unit < m) {
      std::fill(cand.begin(), cand.end(), 0.0);
      cand[next_unit++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (Index q = 0; q < basis.cols; ++q) {
          if (!keep[q]) continue;
          const double f = dot(basis.col(q), cand.data(), m);
          for (Index i = 0; i < m; ++i) cand[i] -= f * basis(i, q);
        }
      }
      const double nrm = std::sqrt(dot(cand.data(), cand.data(), m));
      if (nrm > 1e-8) {
        for (Index i = 0; i < m; ++i) basis(i, j) = cand[i] / nrm;
        break;
      }
    }
    keep[j] = true;
  }
}

struct TallSvd {
  ColMatrix u;  // m×n
  std::vector<double> s;
  ColMatrix v;  // n×n
};

// One-sided (Hestenes) Jacobi on the columns of g, accumulating rotations in v.
inline void jacobi_orthogonalize(ColMatrix& g, ColMatrix& v, const SvdOptions& opt) {
  const Index m = g.rows, n = g.cols;
  constexpr double kTiny = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon();
  for (int sweep = 0;; ++sweep) {
    if (sweep >= opt.max_sweeps) {
      throw ConvergenceError("Jacobi SVD did not converge within " + std::to_string(opt.max_sweeps) +
                             " sweeps");
    }
    double off = 0.0;
    for (Index p = 0; p + 1 < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        double* gp = g.col(p);
        double* gq = g.col(q);
        const double a = dot(gp, gp, m);
        const double b = dot(gq, gq, m);
        const double c = dot(gp, gq, m);
        if (a <= kTiny || b <= kTiny) continue;
        const double ratio = std::abs(c) / std::sqrt(a * b);
        off = std::max(off, ratio);
        if (ratio <= std::numeric_limits<double>::epsilon()) continue;
        const double zeta = (b - a) / (2.0 * c);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (Index i = 0; i < m; ++i) {
          const double x = gp[i], y = gq[i];
          gp[i] = cs * x - sn * y;
          gq[i] = sn * x + cs * y;
        }
        double* vp = v.col(p);
        double* vq = v.col(q);
        for (Index i = 0; i < v.rows; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = cs * x - sn * y;
          vq[i] = sn * x + cs * y;
        }
      }
    }
    if (off < opt.tolerance) return;
  }
}

// SVD of a tall (rows >= cols) matrix. Tall inputs are first reduced to their
// square R factor so the Jacobi sweeps run on an n×n problem.
inline TallSvd tall_svd(ColMatrix a, bool want_u, const SvdOptions& opt) {
  const Index m = a.rows, n = a.cols;
  const bool reduce = m > n;
  HouseholderQr qr;
  ColMatrix g;
  if (reduce) {
    qr = householder_qr(std::move(a));
    g = qr.r;
  } else {
    g = std::move(a);
  }
  ColMatrix v(n, n);
  for (Index i = 0; i < n; ++i) v(i, i) = 1.0;
  jacobi_orthogonalize(g, v, opt);

  std::vector<double> norms(n);
  for (Index j = 0; j < n; ++j) norms[j] = std::sqrt(dot(g.col(j), g.col(j), g.rows));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return norms[x] > norms[y]; });

  TallSvd out;
  out.s.resize(n);
  out.v = ColMatrix(n, n);
  ColMatrix ug(g.rows, n);
  std::vector<bool> keep(n, true);
  const double smax = n ? norms[order[0]] : 0.0;
  const double cutoff = smax * 1e-14;
  for (Index j = 0; j < n; ++j) {
    const Index src = order[j];
    std::copy(v.col(src), v.col(src) + n, out.v.col(j));
    const double sigma = norms[src];
    if (sigma <= cutoff || sigma == 0.0) {
      out.s[j] = 0.0;
      keep[j] = false;
      continue;
    }
    out.s[j] = sigma;
    for (Index i = 0; i < g.rows; ++i) ug(i, j) = g(i, src) / sigma;
  }
  if (!want_u) return out;
  complete_orthonormal(ug, keep);
  out.u = reduce ? apply_q(qr, ug) : std::move(ug);
  return out;
}

// Full SVD of a row-major I×J matrix in double precision. Either side may be
// skipped; the skipped factor is left empty.
struct SvdResult {
  ColMatrix u;  // I×P
  std::vector<double> s;
  ColMatrix v;  // J×P (right singular vectors as columns)
};

inline SvdResult svd_double(Index rows, Index cols, std::span<const double> row_major, bool want_u,
                            bool want_v, const SvdOptions& opt) {
  for (double x : row_major) {
    if (!std::isfinite(x)) throw ValueError("svd: input contains a non-finite value");
  }
  SvdResult res;
  if (rows >= cols) {
    ColMatrix a(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) a(i, j) = row_major[i * cols + j];
    auto t = tall_svd(std::move(a), want_u, opt);
    res.u = std::move(t.u);
    res.s = std::move(t.s);
    if (want_v) res.v = std::move(t.v);
  } else {
    // The row-major buffer of A is the column-major buffer of Aᵀ.
    ColMatrix at(cols, rows);
    std::copy(row_major.begin(), row_major.end(), at.v.begin());
    auto t = tall_svd(std::move(at), want_v, opt);
    res.u = std::move(t.v);
    res.s = std::move(t.s);
    if (want_v) res.v = std::move(t.u);
  }
  return res;
}

template <std::floating_point T>
std::vector<double> to_double(const Tensor<T>& m) {
  return std::vector<double>(m.data().begin(), m.data().end());
}

template <std::floating_point T>
Tensor<T> leading_columns(const ColMatrix& c, Index count) {
  std::vector<T> out(c.rows * count);
  for (Index i = 0; i < c.rows; ++i)
    for (Index j = 0; j < count; ++j) out[i * count + j] = static_cast<T>(c(i, j));
  return Tensor<T>({c.rows, count}, std::move(out));
}

template <std::floating_point T>
Tensor<T> leading_columns_as_rows(const ColMatrix& c, Index count) {
  std::vector<T> out(count * c.rows);
  for (Index j = 0; j < count; ++j)
    for (Index i = 0; i < c.rows; ++i) out[j * c.rows + i] = static_cast<T>(c(i, j));
  return Tensor<T>({count, c.rows}, std::move(out));
}

/// Leading `rank` left singular vectors of m (I×rank). The right factor is
/// never formed, which matters for the wide unfoldings HOSVD produces.
template <std::floating_point T>
Tensor<T> left_singular_vectors(const Tensor<T>& m, Index rank, const SvdOptions& opt = {},
                                std::vector<double>* singular_values = nullptr) {
  if (m.order() != 2) throw ShapeError("left_singular_vectors expects an order-2 tensor");
  const Index p = std::min(m.rows(), m.cols());
  if (rank < 1 || rank > m.rows()) throw ShapeError("left_singular_vectors: rank out of range");
  auto buf = to_double(m);
  auto res = svd_double(m.rows(), m.cols(), buf, true, false, opt);
  if (singular_values) *singular_values = res.s;
  if (rank <= p) return leading_columns<T>(res.u, rank);
  // More vectors than the rank of m: extend the basis orthonormally.
  ColMatrix ext(m.rows(), rank);
  std::vector<bool> keep(rank, false);
  for (Index j = 0; j < p; ++j) {
    std::copy(res.u.col(j), res.u.col(j) + m.rows(), ext.col(j));
    keep[j] = true;
  }
  complete_orthonormal(ext, keep);
  return leading_columns<T>(ext, rank);
}

// Symmetric eigendecomposition by Householder tridiagonalization and the
// implicit QL method. `a` is row-major n×n; on return `values` is sorted
// descending and column k of the row-major `vectors` belongs to values[k].
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;
};

inline SymmetricEigen symmetric_eigen(std::vector<double> a, Index n) {
  auto v = [&](Index i, Index j) -> double& { return a[i * n + j]; };
  std::vector<double> d(n), e(n);
  for (Index j = 0; j < n; ++j) d[j] = v(n - 1, j);

  // Tridiagonalize.
  for (Index i = n - 1; i > 0; --i) {
    double scale = 0.0, h = 0.0;
    for (Index k = 0; k < i; ++k) scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (Index j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (Index k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0) g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (Index j = 0; j < i; ++j) e[j] = 0.0;
      for (Index j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (Index k = j + 1; k < i; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (Index j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (Index j = 0; j < i; ++j) e[j] -= hh * d[j];
      for (Index j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (Index k = j; k < i; ++k) v(k, j) -= f * e[k] + g * d[k];
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }
  // Accumulate the transformations.
  for (Index i = 0; i + 1 < n; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (Index k = 0; k <= i; ++k) d[k] = v(k, i + 1) / h;
      for (Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Index k = 0; k <= i; ++k) g += v(k, i + 1) * v(k, j);
        for (Index k = 0; k <= i; ++k) v(k, j) -= g * d[k];
      }
    }
    for (Index k = 0; k <= i; ++k) v(k, i + 1) = 0.0;
  }
  for (Index j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;

  // Implicit QL on the tridiagonal matrix. Rotations act on rows of zᵀ = vᵀ
  // so they stay contiguous.
  std::vector<double> z(n * n);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < n; ++k) z[i * n + k] = v(k, i);
  for (Index i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;
  double f = 0.0, tst1 = 0.0;
  const double eps = std::numeric_limits<double>::epsilon();
  for (Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    Index m = l;
    while (m < n && std::abs(e[m]) > eps * tst1) ++m;
    if (m == n) m = n - 1;
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > 100) throw ConvergenceError("symmetric_eigen: QL iteration did not converge");
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0) r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (Index i = l + 2; i < n; ++i) d[i] -= h;
        f += h;
        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0, s = 0.0, s2 = 0.0;
        const double el1 = e[l + 1];
        for (Index i = m; i-- > l;) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          double* zi = &z[i * n];
          double* zn = &z[(i + 1) * n];
          for (Index k = 0; k < n; ++k) {
            h = zn[k];
            zn[k] = s * zi[k] + c * h;
            zi[k] = c * zi[k] - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }

  std::vector<Index> order(n);
  for (Index i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) { return d[x] > d[y]; });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (Index k = 0; k < n; ++k) {
    out.values[k] = d[order[k]];
    for (Index i = 0; i < n; ++i) out.vectors[i * n + k] = z[order[k] * n + i];
  }
  return out;
}

/// Orthonormal basis (I×rank) of the dominant left subspace of m. Wide
/// matrices go through the eigenvectors of m·mᵀ, which is far cheaper than a
/// full SVD when I ≪ J and accurate enough for subspace truncation; other
/// shapes fall back to left_singular_vectors.
template <std::floating_point T>
Tensor<T> leading_subspace(const Tensor<T>& m, Index rank, const SvdOptions& opt = {}) {
  if (m.order() != 2) throw ShapeError("leading_subspace expects an order-2 tensor");
  const Index rows = m.rows(), cols = m.cols();
  if (rank < 1 || rank > rows) throw ShapeError("leading_subspace: rank out of range");
  if (rows > cols) return left_singular_vectors(m, rank, opt);
  auto x = m.data();
  for (T val : x) {
    if (!std::isfinite(val)) throw ValueError("leading_subspace: non-finite input");
  }
  std::vector<double> gram(rows * rows, 0.0);
  std::vector<double> ri(cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) ri[k] = x[i * cols + k];
    for (Index j = 0; j <= i; ++j) {
      const T* rj = &x[j * cols];
      double s = 0.0;
      for (Index k = 0; k < cols; ++k) s += ri[k] * rj[k];
      gram[i * rows + j] = s;
      gram[j * rows + i] = s;
    }
  }
  const auto eig = symmetric_eigen(std::move(gram), rows);
  std::vector<T> out(rows * rank);
  for (Index i = 0; i < rows; ++i)
    for (Index k = 0; k < rank; ++k) out[i * rank + k] = static_cast<T>(eig.vectors[i * rows + k]);
  return Tensor<T>({rows, rank}, std::move(out));
}

}  // namespace detail

/// Full thin SVD, P = min(I,J). Computed in double precision by one-sided
/// Jacobi after a Householder reduction of the longer side.
template <std::floating_point T>
SvdTriple<T> svd_full(const Tensor<T>& m, const SvdOptions& opt = {}) {
  if (m.order() != 2) throw ShapeError("svd_full expects an order-2 tensor");
  auto buf = detail::to_double(m);
  auto res = detail::svd_double(m.rows(), m.cols(), buf, true, true, opt);
  const Index p = std::min(m.rows(), m.cols());
  return {detail::leading_columns<T>(res.u, p), std::move(res.s),
          detail::leading_columns_as_rows<T>(res.v, p)};
}

/// Leading `rank` singular triplets (best rank-R approximation).
template <std::floating_point T>
SvdTriple<T> svd_truncated(const Tensor<T>& m, Index rank, const SvdOptions& opt = {}) {
  if (m.order() != 2) throw ShapeError("svd_truncated expects an order-2 tensor");
  const Index p = std::min(m.rows(), m.cols());
  if (rank < 1 || rank > p) {
    throw ShapeError("svd_truncated: rank " + std::to_string(rank) + " outside [1, " +
                     std::to_string(p) + "]");
  }
  auto buf = detail::to_double(m);
  auto res = detail::svd_double(m.rows(), m.cols(), buf, true, true, opt);
  res.s.resize(rank);
  return {detail::leading_columns<T>(res.u, rank), std::move(res.s),
          detail::leading_columns_as_rows<T>(res.v, rank)};
}

}  // namespace tdz
