// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "tdz/factors.hpp"
#include "tdz/svd.hpp"
#include "tdz/tensor_ops.hpp"

namespace tdz {

// ---------------------------------------------------------------------------
// Truncated SVD with S·V pre-composed.

inline SvdFactors decompose_svd(const DenseTensor& m, Index rank, const SvdOptions& opt = {}) {
  if (m.order() != 2) throw ShapeError("decompose_svd expects an order-2 tensor");
  const Index p = std::min(m.rows(), m.cols());
  if (rank < 1 || rank > p) {
    throw ShapeError("decompose_svd: rank " + std::to_string(rank) + " outside [1, " + std::to_string(p) + "]");
  }
  const auto x = m.cast<double>();
  auto res = detail::svd_double(m.rows(), m.cols(), x.data(), true, true, opt);
  const Index cols = m.cols();
  std::vector<float> b(rank * cols);
  for (Index r = 0; r < rank; ++r)
    for (Index j = 0; j < cols; ++j) b[r * cols + j] = static_cast<float>(res.s[r] * res.v(j, r));
  return {detail::leading_columns<float>(res.u, rank), DenseTensor({rank, cols}, std::move(b))};
}

// ---------------------------------------------------------------------------
// Tucker: HOSVD initialization followed by HOOI sweeps.

namespace detail {

inline double core_error(double norm2, const Tensor<double>& core) {
  if (norm2 == 0.0) return 0.0;
  const double c = frobenius_norm(core);
  return std::sqrt(std::max(0.0, norm2 - c * c) / norm2);
}

inline Tensor<double> unit_factor(Index cols) {
  return Tensor<double>({1, cols}, std::vector<double>(cols, 1.0));
}

// x ×_m U^mᵀ for every m != skip (pass skip >= order to project all modes).
// Modes that shrink the most go first.
inline Tensor<double> project(const Tensor<double>& x, const std::vector<Tensor<double>>& factors, Index skip) {
  std::vector<Index> modes;
  for (Index m = 0; m < factors.size(); ++m) {
    if (m != skip) modes.push_back(m);
  }
  std::stable_sort(modes.begin(), modes.end(), [&](Index a, Index b) {
    return factors[a].cols() * factors[b].rows() < factors[b].cols() * factors[a].rows();
  });
  Tensor<double> y = x;
  for (Index m : modes) y = mode_n_product(y, transpose(factors[m]), m);
  return y;
}

inline Tensor<double> mode_basis(const Tensor<double>& y, Index mode, Index rank, const SvdOptions& opt) {
  if (y.dim(mode) == 1) return Tensor<double>({1, 1}, {1.0});
  return leading_subspace(unfold(y, mode), rank, opt);
}

}  // namespace detail

struct TuckerOptions {
  int hooi_sweeps = 2;
  SvdOptions svd;
};

/// Tucker decomposition at the given per-mode ranks.
///
/// `error_trace`, when given, receives the relative reconstruction error after
/// the HOSVD initialization followed by one entry per HOOI sweep.
inline TuckerFactors decompose_tucker(const DenseTensor& t, std::span<const Index> ranks,
                                      const TuckerOptions& opt = {},
                                      std::vector<double>* error_trace = nullptr) {
  validate_ranks(Method::kTucker, t.shape(), ranks);
  if (opt.hooi_sweeps < 0) throw ValueError("decompose_tucker: hooi_sweeps must be >= 0");
  const Index order = t.order();
  const auto x = t.cast<double>();
  const double norm = frobenius_norm(x);
  const double norm2 = norm * norm;

  std::vector<Tensor<double>> u(order);
  for (Index n = 0; n < order; ++n) u[n] = detail::mode_basis(x, n, ranks[n], opt.svd);
  auto core = detail::project(x, u, order);
  if (error_trace) {
    error_trace->clear();
    error_trace->push_back(detail::core_error(norm2, core));
  }

  for (int sweep = 0; sweep < opt.hooi_sweeps; ++sweep) {
    for (Index n = 0; n < order; ++n) {
      const auto y = detail::project(x, u, n);
      u[n] = detail::mode_basis(y, n, ranks[n], opt.svd);
    }
    core = detail::project(x, u, order);
    if (error_trace) error_trace->push_back(detail::core_error(norm2, core));
  }

  TuckerFactors f;
  f.core = core.cast<float>();
  for (auto& m : u) f.factors.push_back(m.cast<float>());
  return f;
}

// ---------------------------------------------------------------------------
// CP by alternating least squares.

enum class CpInit { kHosvd, kRandom };

struct CpOptions {
  Index max_iters = 100;
  /// Stop once a sweep improves the relative error by less than this.
  double tol = 1e-8;
  CpInit init = CpInit::kHosvd;
  std::uint64_t seed = 0;
  SvdOptions svd;
};

namespace detail {

// Matricized tensor times Khatri-Rao product for mode n:
// out[i_n, r] = Σ x[i] Π_{m≠n} U^m[i_m, r].
inline std::vector<double> mttkrp(const Tensor<double>& x, const std::vector<Tensor<double>>& u, Index n,
                                  Index rank) {
  const auto& shape = x.shape();
  const Index order = shape.size();
  std::vector<double> out(shape[n] * rank, 0.0);
  std::vector<std::vector<double>> prefix(order + 1, std::vector<double>(rank, 1.0));
  std::vector<Index> idx(order, 0);
  auto data = x.data();
  Index level = 0;
  Index pos = 0;
  while (true) {
    for (; level < order; ++level) {
      if (level == n) {
        prefix[level + 1] = prefix[level];
        continue;
      }
      auto f = u[level].data();
      for (Index r = 0; r < rank; ++r) prefix[level + 1][r] = prefix[level][r] * f[idx[level] * rank + r];
    }
    const double v = data[pos++];
    if (v != 0.0) {
      double* row = &out[idx[n] * rank];
      for (Index r = 0; r < rank; ++r) row[r] += v * prefix[order][r];
    }
    Index k = order;
    bool done = true;
    while (k > 0) {
      --k;
      if (++idx[k] < shape[k]) {
        done = false;
        break;
      }
      idx[k] = 0;
    }
    if (done) return out;
    level = k;
  }
}

inline std::vector<double> gram(const Tensor<double>& u, Index rank) {
  std::vector<double> g(rank * rank, 0.0);
  auto d = u.data();
  for (Index i = 0; i < u.rows(); ++i)
    for (Index p = 0; p < rank; ++p)
      for (Index q = 0; q < rank; ++q) g[p * rank + q] += d[i * rank + p] * d[i * rank + q];
  return g;
}

// Cholesky of a symmetric R×R matrix in place (lower triangle). False if not
// numerically positive definite.
inline bool cholesky(std::vector<double>& a, Index n) {
  double scale = 0.0;
  for (Index i = 0; i < n; ++i) scale = std::max(scale, a[i * n + i]);
  if (!(scale > 0.0)) return false;
  for (Index j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (Index k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > scale * 1e-13)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (Index i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (Index k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  return true;
}

inline void cholesky_solve(const std::vector<double>& l, Index n, double* b) {
  for (Index i = 0; i < n; ++i) {
    double s = b[i];
    for (Index k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
    b[i] = s / l[i * n + i];
  }
  for (Index i = n; i-- > 0;) {
    double s = b[i];
    for (Index k = i + 1; k < n; ++k) s -= l[k * n + i] * b[k];
    b[i] = s / l[i * n + i];
  }
}

}  // namespace detail

/// CP decomposition of rank R by ALS.
///
/// After every mode update the new factor's column norms are moved into the
/// weights, so all factors stay unit-norm. `error_trace`, when given, receives
/// the relative reconstruction error after each sweep.
inline CpFactors decompose_cp(const DenseTensor& t, Index rank, const CpOptions& opt = {},
                              std::vector<double>* error_trace = nullptr) {
  validate_ranks(Method::kCp, t.shape(), std::span<const Index>(&rank, 1));
  const Index order = t.order();
  const auto x = t.cast<double>();
  const double norm = frobenius_norm(x);
  const double norm2 = norm * norm;

  std::vector<Tensor<double>> u(order);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  for (Index n = 0; n < order; ++n) {
    if (t.dim(n) == 1) {
      u[n] = detail::unit_factor(rank);
      continue;
    }
    if (opt.init == CpInit::kHosvd) {
      u[n] = detail::leading_subspace(unfold(x, n), rank, opt.svd);
    } else {
      Tensor<double> m({t.dim(n), rank});
      for (double& v : m.data()) v = normal(rng);
      u[n] = std::move(m);
    }
  }
  std::vector<double> lambda(rank, 1.0);
  if (error_trace) error_trace->clear();
  if (t.size() == 1) {
    // Every mode is unit-size: the weight carries the single value.
    CpFactors f;
    f.weights = {t.data()[0]};
    for (Index n = 0; n < order; ++n) f.factors.emplace_back(Shape{1, 1}, std::vector<float>{1.0f});
    if (error_trace) error_trace->push_back(0.0);
    return f;
  }

  double previous = std::numeric_limits<double>::infinity();
  std::vector<double> last_mttkrp;
  Index last_mode = 0;
  for (Index sweep = 0; sweep < opt.max_iters; ++sweep) {
    for (Index n = 0; n < order; ++n) {
      if (t.dim(n) == 1) continue;  // unit modes keep their fixed all-ones factor
      std::vector<double> v(rank * rank, 1.0);
      for (Index m = 0; m < order; ++m) {
        if (m == n) continue;
        const auto g = detail::gram(u[m], rank);
        for (Index k = 0; k < v.size(); ++k) v[k] *= g[k];
      }
      auto rhs = detail::mttkrp(x, u, n, rank);
      last_mttkrp = rhs;
      last_mode = n;
      if (!detail::cholesky(v, rank)) throw SingularSystemError(sweep, n);
      const Index rows = t.dim(n);
      for (Index i = 0; i < rows; ++i) detail::cholesky_solve(v, rank, &rhs[i * rank]);

      auto prev = u[n].data();
      for (Index r = 0; r < rank; ++r) {
        double s = 0.0;
        for (Index i = 0; i < rows; ++i) s += rhs[i * rank + r] * rhs[i * rank + r];
        const double nrm = std::sqrt(s);
        if (nrm <= std::numeric_limits<double>::min()) {
          // The component vanished; keep its old direction with zero weight.
          for (Index i = 0; i < rows; ++i) rhs[i * rank + r] = prev[i * rank + r];
          lambda[r] = 0.0;
          continue;
        }
        for (Index i = 0; i < rows; ++i) rhs[i * rank + r] /= nrm;
        lambda[r] = nrm;
      }
      u[n] = Tensor<double>({rows, rank}, std::move(rhs));
    }

    // ‖x − x̂‖² = ‖x‖² − 2⟨x, x̂⟩ + ‖x̂‖², with ⟨x, x̂⟩ read off the last MTTKRP.
    double inner = 0.0;
    auto ul = u[last_mode].data();
    for (Index i = 0; i < t.dim(last_mode); ++i)
      for (Index r = 0; r < rank; ++r) inner += ul[i * rank + r] * last_mttkrp[i * rank + r] * lambda[r];
    std::vector<double> h(rank * rank, 1.0);
    for (Index m = 0; m < order; ++m) {
      const auto g = detail::gram(u[m], rank);
      for (Index k = 0; k < h.size(); ++k) h[k] *= g[k];
    }
    double model2 = 0.0;
    for (Index p = 0; p < rank; ++p)
      for (Index q = 0; q < rank; ++q) model2 += lambda[p] * h[p * rank + q] * lambda[q];
    const double err = norm2 == 0.0 ? 0.0 : std::sqrt(std::max(0.0, norm2 - 2.0 * inner + model2) / norm2);
    if (error_trace) error_trace->push_back(err);
    if (previous - err < opt.tol) break;
    previous = err;
  }

  CpFactors f;
  f.weights.reserve(rank);
  for (double l : lambda) f.weights.push_back(static_cast<float>(l));
  for (auto& m : u) f.factors.push_back(m.cast<float>());
  return f;
}

// ---------------------------------------------------------------------------
// Tensor-Train by left-to-right TT-SVD.

/// TT-SVD at the given N−1 ranks. A requested rank larger than the local
/// unfolding admits is zero-padded so the stored ranks always equal the
/// requested ones. `tail_norms`, when given, receives the discarded singular
/// value norm of each split.
inline TtFactors decompose_tt(const DenseTensor& t, std::span<const Index> ranks, const SvdOptions& opt = {},
                              std::vector<double>* tail_norms = nullptr) {
  validate_ranks(Method::kTt, t.shape(), ranks);
  const Index order = t.order();
  const auto& shape = t.shape();
  std::vector<double> rest(t.data().begin(), t.data().end());
  Index r_prev = 1;
  Index remaining = t.size();
  TtFactors f;
  if (tail_norms) tail_norms->clear();
  for (Index n = 0; n + 1 < order; ++n) {
    const Index rows = r_prev * shape[n];
    const Index cols = remaining / shape[n];
    auto res = detail::svd_double(rows, cols, rest, true, true, opt);
    const Index r_req = ranks[n];
    const Index r_eff = std::min({r_req, rows, cols});
    double tail = 0.0;
    for (Index i = r_eff; i < res.s.size(); ++i) tail += res.s[i] * res.s[i];
    if (tail_norms) tail_norms->push_back(std::sqrt(tail));

    std::vector<float> core(rows * r_req, 0.0f);
    for (Index i = 0; i < rows; ++i)
      for (Index r = 0; r < r_eff; ++r) core[i * r_req + r] = static_cast<float>(res.u(i, r));
    f.cores.emplace_back(Shape{r_prev, shape[n], r_req}, std::move(core));

    std::vector<double> next(r_req * cols, 0.0);
    for (Index r = 0; r < r_eff; ++r)
      for (Index j = 0; j < cols; ++j) next[r * cols + j] = res.s[r] * res.v(j, r);
    rest = std::move(next);
    remaining = cols;
    r_prev = r_req;
  }
  std::vector<float> last(rest.size());
  for (Index i = 0; i < rest.size(); ++i) last[i] = static_cast<float>(rest[i]);
  f.cores.emplace_back(Shape{r_prev, shape[order - 1], 1}, std::move(last));
  return f;
}

}  // namespace tdz
