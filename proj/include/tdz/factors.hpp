// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "tdz/rank_planner.hpp"
#include "tdz/tensor.hpp"
#include "tdz/tensor_ops.hpp"

namespace tdz {

/// W ≈ a·b with a = U (I×R) and b = S·V (R×J) pre-composed.
struct SvdFactors {
  DenseTensor a;
  DenseTensor b;

  Shape shape() const { return {a.rows(), b.cols()}; }
  Index rank() const { return a.cols(); }
  std::vector<Index> ranks() const { return {rank()}; }

  void validate() const {
    if (a.order() != 2 || b.order() != 2 || a.cols() != b.rows()) {
      throw ShapeError("inconsistent svd factors " + shape_string(a.shape()) + " / " + shape_string(b.shape()));
    }
  }

  friend bool operator==(const SvdFactors&, const SvdFactors&) = default;
};

/// W ≈ core ×_1 U¹ ×_2 U² … ×_N U^N, U^n of shape I_n×R_n.
struct TuckerFactors {
  DenseTensor core;
  std::vector<DenseTensor> factors;

  Shape shape() const {
    Shape s;
    for (const auto& u : factors) s.push_back(u.rows());
    return s;
  }
  std::vector<Index> ranks() const { return core.shape(); }

  void validate() const {
    if (factors.size() != core.order()) throw ShapeError("tucker: factor count does not match core order");
    for (Index n = 0; n < factors.size(); ++n) {
      if (factors[n].order() != 2 || factors[n].cols() != core.dim(n)) {
        throw ShapeError("tucker: factor " + std::to_string(n) + " shape " + shape_string(factors[n].shape()) +
                         " does not match core " + shape_string(core.shape()));
      }
    }
  }

  friend bool operator==(const TuckerFactors&, const TuckerFactors&) = default;
};

/// W ≈ Σ_r λ_r U¹_r ∘ U²_r ∘ … ∘ U^N_r with unit-norm factor columns.
struct CpFactors {
  std::vector<float> weights;
  std::vector<DenseTensor> factors;

  Shape shape() const {
    Shape s;
    for (const auto& u : factors) s.push_back(u.rows());
    return s;
  }
  Index rank() const { return weights.size(); }
  std::vector<Index> ranks() const { return {rank()}; }

  void validate() const {
    if (factors.empty() || weights.empty()) throw ShapeError("cp: empty factorization");
    for (const auto& u : factors) {
      if (u.order() != 2 || u.cols() != weights.size()) throw ShapeError("cp: factor columns do not match rank");
    }
  }

  friend bool operator==(const CpFactors&, const CpFactors&) = default;
};

/// W[i_1,…,i_N] = G¹[1,i_1,:]·G²[:,i_2,:]·…·G^N[:,i_N,1].
struct TtFactors {
  std::vector<DenseTensor> cores;

  Shape shape() const {
    Shape s;
    for (const auto& g : cores) s.push_back(g.dim(1));
    return s;
  }
  std::vector<Index> ranks() const {
    std::vector<Index> r;
    for (Index n = 0; n + 1 < cores.size(); ++n) r.push_back(cores[n].dim(2));
    return r;
  }

  void validate() const {
    if (cores.empty()) throw ShapeError("tt: no cores");
    for (Index n = 0; n < cores.size(); ++n) {
      const auto& g = cores[n];
      if (g.order() != 3) throw ShapeError("tt: cores must be order-3");
      const Index left = n == 0 ? 1 : cores[n - 1].dim(2);
      if (g.dim(0) != left) throw ShapeError("tt: rank mismatch between cores " + std::to_string(n));
    }
    if (cores.back().dim(2) != 1) throw ShapeError("tt: last core must close with rank 1");
  }

  friend bool operator==(const TtFactors&, const TtFactors&) = default;
};

/// Number of stored values, tallied element by element.
inline Index stored_values(const SvdFactors& f) { return f.a.size() + f.b.size(); }
inline Index stored_values(const TuckerFactors& f) {
  Index n = f.core.size();
  for (const auto& u : f.factors) n += u.size();
  return n;
}
inline Index stored_values(const CpFactors& f) {
  Index n = f.weights.size();
  for (const auto& u : f.factors) n += u.size();
  return n;
}
inline Index stored_values(const TtFactors& f) {
  Index n = 0;
  for (const auto& g : f.cores) n += g.size();
  return n;
}

inline Method method_of(const SvdFactors&) { return Method::kSvd; }
inline Method method_of(const TuckerFactors&) { return Method::kTucker; }
inline Method method_of(const CpFactors&) { return Method::kCp; }
inline Method method_of(const TtFactors&) { return Method::kTt; }

// ---------------------------------------------------------------------------
// Dense reconstruction. Everything is accumulated in double.

inline DenseTensor reconstruct(const SvdFactors& f) {
  f.validate();
  return matmul(f.a.cast<double>(), f.b.cast<double>()).cast<float>();
}

inline DenseTensor reconstruct(const TuckerFactors& f) {
  f.validate();
  auto x = f.core.cast<double>();
  for (Index n = 0; n < f.factors.size(); ++n) x = mode_n_product(x, f.factors[n].cast<double>(), n);
  return x.cast<float>();
}

namespace detail {

template <std::floating_point T, std::floating_point W>
Tensor<T> cp_dense(std::span<const W> weights, const std::vector<Tensor<T>>& factors) {
  Shape shape;
  for (const auto& u : factors) shape.push_back(u.rows());
  const Index rank = weights.size();
  const Index order = shape.size();
  std::vector<T> out(element_count(shape));
  // prefix[k] holds the running product of the first k factor rows.
  std::vector<std::vector<double>> prefix(order + 1, std::vector<double>(rank));
  for (Index r = 0; r < rank; ++r) prefix[0][r] = weights[r];
  std::vector<Index> idx(order, 0);
  Index level = 0;
  Index pos = 0;
  // Odometer walk with incremental prefix products.
  while (true) {
    for (; level < order; ++level) {
      auto u = factors[level].data();
      for (Index r = 0; r < rank; ++r) prefix[level + 1][r] = prefix[level][r] * u[idx[level] * rank + r];
    }
    double s = 0.0;
    for (Index r = 0; r < rank; ++r) s += prefix[order][r];
    out[pos++] = static_cast<T>(s);
    Index k = order;
    while (k > 0) {
      --k;
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
      if (k == 0) return Tensor<T>(shape, std::move(out));
    }
    level = k;
  }
}

template <std::floating_point T>
Tensor<T> tt_dense(const std::vector<Tensor<T>>& cores) {
  // Left-to-right: m has shape (Π_{m<n} I_m, r_{n−1}).
  Index rows = 1;
  Tensor<double> m({1, 1}, {1.0});
  Shape shape;
  for (const auto& g : cores) {
    const Index r_in = g.dim(0), extent = g.dim(1), r_out = g.dim(2);
    auto next = matmul(m, g.template cast<double>().reshaped({r_in, extent * r_out}));
    rows *= extent;
    m = std::move(next).reshaped({rows, r_out});
    shape.push_back(extent);
  }
  return m.cast<T>().reshaped(shape);
}

}  // namespace detail

inline DenseTensor reconstruct(const CpFactors& f) {
  f.validate();
  return detail::cp_dense<float, float>(f.weights, f.factors);
}

inline DenseTensor reconstruct(const TtFactors& f) {
  f.validate();
  return detail::tt_dense(f.cores);
}

using FactoredTensor = std::variant<SvdFactors, TuckerFactors, CpFactors, TtFactors>;

inline DenseTensor reconstruct(const FactoredTensor& f) {
  return std::visit([](const auto& x) { return reconstruct(x); }, f);
}

inline Shape shape_of(const FactoredTensor& f) {
  return std::visit([](const auto& x) { return x.shape(); }, f);
}

inline std::vector<Index> ranks_of(const FactoredTensor& f) {
  return std::visit([](const auto& x) { return x.ranks(); }, f);
}

inline Method method_of(const FactoredTensor& f) {
  return std::visit([](const auto& x) { return method_of(x); }, f);
}

inline Index stored_values(const FactoredTensor& f) {
  return std::visit([](const auto& x) { return stored_values(x); }, f);
}

}  // namespace tdz
