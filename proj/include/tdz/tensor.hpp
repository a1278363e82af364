// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "tdz/error.hpp"

namespace tdz {

using Index = std::size_t;
using Shape = std::vector<Index>;

inline std::string shape_string(std::span<const Index> shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t n = 0; n < shape.size(); ++n) os << (n ? "," : "") << shape[n];
  os << ')';
  return os.str();
}

/// Product of dimensions; throws on overflow so hostile shapes cannot wrap.
inline Index element_count(std::span<const Index> shape) {
  Index count = 1;
  for (Index d : shape) {
    if (d != 0 && count > SIZE_MAX / d) throw ShapeError("element count overflows " + shape_string(shape));
    count *= d;
  }
  return count;
}

/// Dense order-N tensor, row-major (last index fastest).
///
/// Order >= 1, every dimension >= 1, and all values finite at construction.
/// Accessors hand out mutable spans for building results in place; the
/// finiteness invariant is only checked on construction.
template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{1}, data_(1, T(0)) {}

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(element_count(shape_), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
    for (T v : data_) {
      if (!std::isfinite(v)) throw ValueError("tensor data contains a non-finite value");
    }
  }

  /// Order-2 tensor from nested rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    const Index r = rows.size();
    const Index c = r ? rows.begin()->size() : 0;
    std::vector<T> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  static Tensor identity(Index n) {
    Tensor t({n, n});
    for (Index i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
    return t;
  }

  static Tensor diagonal(std::span<const T> values) {
    const Index n = values.size();
    Tensor t({n, n});
    for (Index i = 0; i < n; ++i) t.data_[i * n + i] = values[i];
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index order() const noexcept { return shape_.size(); }
  Index dim(Index mode) const { return shape_.at(mode); }
  Index size() const noexcept { return data_.size(); }
  Index rows() const { return shape_.at(0); }
  Index cols() const { return order() == 2 ? shape_[1] : throw ShapeError("cols() on non-matrix"); }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  template <std::integral... I>
  T& operator()(I... idx) {
    return data_[offset(idx...)];
  }
  template <std::integral... I>
  const T& operator()(I... idx) const {
    return data_[offset(idx...)];
  }

  T& at(std::span<const Index> idx) { return data_[checked_offset(idx)]; }
  const T& at(std::span<const Index> idx) const { return data_[checked_offset(idx)]; }

  template <std::floating_point U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  /// Same data viewed under a new shape of equal element count.
  Tensor reshaped(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshaped(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_shape() const {
    if (shape_.empty()) throw ShapeError("tensor order must be >= 1");
    for (Index d : shape_) {
      if (d == 0) throw ShapeError("tensor dimensions must be >= 1, got " + shape_string(shape_));
    }
  }

  template <std::integral... I>
  Index offset(I... idx) const {
    const Index ids[] = {static_cast<Index>(idx)...};
    Index off = 0;
    for (Index n = 0; n < sizeof...(I); ++n) off = off * shape_[n] + ids[n];
    return off;
  }

  Index checked_offset(std::span<const Index> idx) const {
    if (idx.size() != shape_.size()) throw ShapeError("index arity does not match tensor order");
    Index off = 0;
    for (Index n = 0; n < idx.size(); ++n) {
      if (idx[n] >= shape_[n]) throw ShapeError("index out of range");
      off = off * shape_[n] + idx[n];
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using DenseTensor = Tensor<float>;

/// Bitwise equality, stricter than operator== (distinguishes -0.0f from 0.0f).
template <std::floating_point T>
bool bit_identical(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::equal(x.begin(), x.end(), y.begin(), [](T p, T q) {
    return std::memcmp(&p, &q, sizeof(T)) == 0;
  });
}

}  // namespace tdz
