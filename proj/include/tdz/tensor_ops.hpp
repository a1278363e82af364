// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tdz/tensor.hpp"

namespace tdz {

namespace detail {

// A row-major tensor seen as (before, dim(mode), after).
struct ModeSplit {
  Index before = 1;
  Index extent = 1;
  Index after = 1;
};

inline ModeSplit split_at(std::span<const Index> shape, Index mode) {
  ModeSplit s;
  for (Index n = 0; n < mode; ++n) s.before *= shape[n];
  s.extent = shape[mode];
  for (Index n = mode + 1; n < shape.size(); ++n) s.after *= shape[n];
  return s;
}

inline void require_matrix(std::span<const Index> shape, const char* what) {
  if (shape.size() != 2) throw ShapeError(std::string(what) + " expects an order-2 tensor");
}

}  // namespace detail

/// Mode-n matricization. Rows index `mode`; columns enumerate the remaining
/// modes in increasing order with the last one varying fastest.
template <std::floating_point T>
Tensor<T> unfold(const Tensor<T>& t, Index mode) {
  if (mode >= t.order()) {
    throw ShapeError("unfold mode " + std::to_string(mode) + " out of range for order " +
                     std::to_string(t.order()));
  }
  const auto s = detail::split_at(t.shape(), mode);
  const Index cols = s.before * s.after;
  std::vector<T> out(t.size());
  auto in = t.data();
  for (Index a = 0; a < s.before; ++a) {
    for (Index i = 0; i < s.extent; ++i) {
      const T* src = &in[(a * s.extent + i) * s.after];
      T* dst = &out[i * cols + a * s.after];
      std::copy(src, src + s.after, dst);
    }
  }
  return Tensor<T>({s.extent, cols}, std::move(out));
}

/// Inverse of unfold().
template <std::floating_point T>
Tensor<T> fold(const Tensor<T>& m, Index mode, const Shape& target_shape) {
  detail::require_matrix(m.shape(), "fold");
  if (target_shape.empty() || mode >= target_shape.size()) throw ShapeError("fold mode out of range");
  const Index total = element_count(target_shape);
  if (m.size() != total) {
    throw ShapeError("fold: matrix has " + std::to_string(m.size()) + " elements, target shape " +
                     shape_string(target_shape) + " needs " + std::to_string(total));
  }
  const auto s = detail::split_at(target_shape, mode);
  if (m.rows() != s.extent) throw ShapeError("fold: row count does not match target mode dimension");
  const Index cols = s.before * s.after;
  std::vector<T> out(total);
  auto in = m.data();
  for (Index a = 0; a < s.before; ++a) {
    for (Index i = 0; i < s.extent; ++i) {
      const T* src = &in[i * cols + a * s.after];
      std::copy(src, src + s.after, &out[(a * s.extent + i) * s.after]);
    }
  }
  return Tensor<T>(target_shape, std::move(out));
}

/// t ×_mode m: contracts dimension `mode` of t with the columns of m.
template <std::floating_point T>
Tensor<T> mode_n_product(const Tensor<T>& t, const Tensor<T>& m, Index mode) {
  detail::require_matrix(m.shape(), "mode_n_product");
  if (mode >= t.order()) throw ShapeError("mode_n_product mode out of range");
  if (m.cols() != t.dim(mode)) {
    throw ShapeError("mode_n_product: matrix columns " + std::to_string(m.cols()) +
                     " != tensor dimension " + std::to_string(t.dim(mode)) + " at mode " +
                     std::to_string(mode));
  }
  const auto s = detail::split_at(t.shape(), mode);
  const Index rows = m.rows();
  Shape shape = t.shape();
  shape[mode] = rows;
  std::vector<T> out(s.before * rows * s.after);
  std::vector<double> acc(s.after);
  auto src = t.data();
  auto mat = m.data();
  for (Index a = 0; a < s.before; ++a) {
    for (Index r = 0; r < rows; ++r) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (Index i = 0; i < s.extent; ++i) {
        const double w = mat[r * s.extent + i];
        if (w == 0.0) continue;
        const T* row = &src[(a * s.extent + i) * s.after];
        for (Index b = 0; b < s.after; ++b) acc[b] += w * static_cast<double>(row[b]);
      }
      T* dst = &out[(a * rows + r) * s.after];
      for (Index b = 0; b < s.after; ++b) dst[b] = static_cast<T>(acc[b]);
    }
  }
  return Tensor<T>(std::move(shape), std::move(out));
}

template <std::floating_point T>
Tensor<T> transpose(const Tensor<T>& m) {
  detail::require_matrix(m.shape(), "transpose");
  const Index r = m.rows(), c = m.cols();
  std::vector<T> out(m.size());
  auto in = m.data();
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return Tensor<T>({c, r}, std::move(out));
}

/// Matrix product with 64-bit accumulation.
template <std::floating_point T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a.shape(), "matmul");
  detail::require_matrix(b.shape(), "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  const Index n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<T> out(n * m);
  std::vector<double> acc(m);
  auto x = a.data();
  auto y = b.data();
  for (Index i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index p = 0; p < k; ++p) {
      const double w = x[i * k + p];
      if (w == 0.0) continue;
      const T* row = &y[p * m];
      for (Index j = 0; j < m; ++j) acc[j] += w * static_cast<double>(row[j]);
    }
    for (Index j = 0; j < m; ++j) out[i * m + j] = static_cast<T>(acc[j]);
  }
  return Tensor<T>({n, m}, std::move(out));
}

template <std::floating_point T>
double frobenius_norm(const Tensor<T>& t) {
  double sum = 0.0;
  for (T v : t.data()) sum += static_cast<double>(v) * static_cast<double>(v);
  return std::sqrt(sum);
}

/// ‖original − approx‖_F / ‖original‖_F.
template <std::floating_point T, std::floating_point U>
double relative_error(const Tensor<T>& original, const Tensor<U>& approx) {
  if (original.shape() != approx.shape()) {
    throw ShapeError("relative_error: shapes " + shape_string(original.shape()) + " and " +
                     shape_string(approx.shape()) + " differ");
  }
  const double norm = frobenius_norm(original);
  if (norm == 0.0) throw ValueError("relative_error: original tensor has zero norm");
  double diff = 0.0;
  auto x = original.data();
  auto y = approx.data();
  for (Index i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    diff += d * d;
  }
  return std::sqrt(diff) / norm;
}

}  // namespace tdz
