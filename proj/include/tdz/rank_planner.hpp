// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdz/tensor.hpp"

namespace tdz {

enum class Method { kSvd, kTucker, kCp, kTt };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kSvd: return "svd";
    case Method::kTucker: return "tucker";
    case Method::kCp: return "cp";
    case Method::kTt: return "tt";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  if (s == "svd") return Method::kSvd;
  if (s == "tucker") return Method::kTucker;
  if (s == "cp") return Method::kCp;
  if (s == "tt") return Method::kTt;
  return std::nullopt;
}

/// Ranks resolved from a target compression ratio.
///
/// `ranks` has one entry for svd/cp, N for tucker and N−1 for tt.
/// `predicted_ratio` is always factored_params / original_params.
struct RankPlan {
  Method method = Method::kSvd;
  double target_ratio = 1.0;
  std::vector<Index> ranks;
  double predicted_ratio = 1.0;
  Index original_params = 0;
  Index factored_params = 0;

  friend bool operator==(const RankPlan&, const RankPlan&) = default;
};

// ---------------------------------------------------------------------------
// Closed-form parameter counts of the factored forms.

/// IR + RJ (U and the pre-composed S·V).
inline Index svd_params(Index i, Index j, Index rank) { return i * rank + rank * j; }

/// Π R_n + Σ I_n R_n.
inline Index tucker_params(std::span<const Index> shape, std::span<const Index> ranks) {
  Index core = 1, legs = 0;
  for (Index n = 0; n < shape.size(); ++n) {
    core *= ranks[n];
    legs += shape[n] * ranks[n];
  }
  return core + legs;
}

/// R (1 + Σ I_n).
inline Index cp_params(std::span<const Index> shape, Index rank) {
  Index sum = 1;
  for (Index d : shape) sum += d;
  return rank * sum;
}

/// Σ r_{n−1} I_n r_n with r_0 = r_N = 1.
inline Index tt_params(std::span<const Index> shape, std::span<const Index> ranks) {
  Index total = 0;
  for (Index n = 0; n < shape.size(); ++n) {
    const Index left = n == 0 ? 1 : ranks[n - 1];
    const Index right = n + 1 == shape.size() ? 1 : ranks[n];
    total += left * shape[n] * right;
  }
  return total;
}

/// Exact-representation TT rank bounds min(Π_{m≤n} I_m, Π_{m>n} I_m).
inline std::vector<Index> tt_rank_bounds(std::span<const Index> shape) {
  std::vector<Index> bounds;
  if (shape.size() < 2) return bounds;
  for (Index n = 0; n + 1 < shape.size(); ++n) {
    // Saturating products: only the smaller side matters.
    double left = 1, right = 1;
    for (Index m = 0; m <= n; ++m) left *= static_cast<double>(shape[m]);
    for (Index m = n + 1; m < shape.size(); ++m) right *= static_cast<double>(shape[m]);
    bounds.push_back(static_cast<Index>(std::min(left, right)));
  }
  return bounds;
}

namespace detail {

inline void require_positive_ratio(double gamma, const char* what) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValueError(std::string(what) + ": compression ratio must be a finite value > 0");
  }
}

inline void require_unit_ratio(double gamma, const char* what) {
  require_positive_ratio(gamma, what);
  if (gamma > 1.0) throw ValueError(std::string(what) + ": compression ratio must be <= 1");
}

inline void require_dims(std::span<const Index> shape, Index min_order, const char* what) {
  if (shape.size() < min_order) {
    throw ShapeError(std::string(what) + ": order must be >= " + std::to_string(min_order));
  }
  for (Index d : shape) {
    if (d < 1) throw ShapeError(std::string(what) + ": dimensions must be >= 1");
  }
}

// floor() that tolerates a ratio like 0.3 landing a hair under an integer.
inline Index floor_count(double x) {
  return static_cast<Index>(std::floor(x + 1e-9));
}

// The halving loop shared by the Tucker and TT planners: start from `ranks`,
// halve every rank (real-valued, clamped below at 1) until ratio(ranks) <=
// target. The first halving is unconditional because the current ratio
// starts at infinity. Stops early if halving no longer changes anything, in
// which case the all-ones plan is returned even though it misses the target.
template <typename RatioFn>
std::vector<double> halve_until(std::vector<double> ranks, double target, RatioFn ratio) {
  double current = std::numeric_limits<double>::infinity();
  while (current > target) {
    bool changed = false;
    for (double& r : ranks) {
      const double next = std::max(1.0, r / 2.0);
      changed = changed || next != r;
      r = next;
    }
    current = ratio(ranks);
    if (!changed) break;
  }
  return ranks;
}

inline std::vector<Index> floor_ranks(const std::vector<double>& ranks) {
  std::vector<Index> out;
  out.reserve(ranks.size());
  for (double r : ranks) out.push_back(std::max<Index>(1, static_cast<Index>(std::floor(r))));
  return out;
}

}  // namespace detail

/// R = γ·IJ/(I+J), floored and clamped to [1, min(I,J)].
inline RankPlan svd_rank(Index i, Index j, double gamma) {
  detail::require_unit_ratio(gamma, "svd_rank");
  if (i < 1 || j < 1) throw ShapeError("svd_rank: dimensions must be >= 1");
  const double middle = gamma * static_cast<double>(i) * static_cast<double>(j) /
                        static_cast<double>(i + j);
  const Index r = std::max<Index>(1, std::min(detail::floor_count(middle), std::min(i, j)));
  RankPlan plan;
  plan.method = Method::kSvd;
  plan.target_ratio = gamma;
  plan.ranks = {r};
  plan.original_params = i * j;
  plan.factored_params = svd_params(i, j, r);
  plan.predicted_ratio = static_cast<double>(plan.factored_params) / static_cast<double>(plan.original_params);
  return plan;
}

/// Size halving for Tucker ranks, generalized to order N: ranks start at the
/// dimensions and are halved together until the ratio drops to gamma_hat,
/// then floored.
inline RankPlan tucker_ranks(std::span<const Index> shape, double gamma_hat) {
  detail::require_positive_ratio(gamma_hat, "tucker_ranks");
  detail::require_dims(shape, 2, "tucker_ranks");
  const double total = static_cast<double>(element_count(shape));
  auto ratio = [&](const std::vector<double>& r) {
    double core = 1.0, legs = 0.0;
    for (Index n = 0; n < shape.size(); ++n) {
      core *= r[n];
      legs += static_cast<double>(shape[n]) * r[n];
    }
    return (core + legs) / total;
  };
  std::vector<double> start(shape.begin(), shape.end());
  const auto real_ranks = detail::halve_until(std::move(start), gamma_hat, ratio);

  RankPlan plan;
  plan.method = Method::kTucker;
  plan.target_ratio = gamma_hat;
  plan.ranks = detail::floor_ranks(real_ranks);
  for (Index n = 0; n < shape.size(); ++n) plan.ranks[n] = std::min(plan.ranks[n], shape[n]);
  plan.original_params = element_count(shape);
  plan.factored_params = tucker_params(shape, plan.ranks);
  plan.predicted_ratio = static_cast<double>(plan.factored_params) / static_cast<double>(plan.original_params);
  return plan;
}

/// R = γ·ΠI/(1+ΣI), floored and clamped to [1, min(shape)].
inline RankPlan cp_rank(std::span<const Index> shape, double gamma) {
  detail::require_unit_ratio(gamma, "cp_rank");
  detail::require_dims(shape, 1, "cp_rank");
  double sum = 1.0;
  for (Index d : shape) sum += static_cast<double>(d);
  const double unclamped = gamma * static_cast<double>(element_count(shape)) / sum;
  const Index smallest = *std::min_element(shape.begin(), shape.end());
  const Index r = std::max<Index>(1, std::min(detail::floor_count(unclamped), smallest));
  RankPlan plan;
  plan.method = Method::kCp;
  plan.target_ratio = gamma;
  plan.ranks = {r};
  plan.original_params = element_count(shape);
  plan.factored_params = cp_params(shape, r);
  plan.predicted_ratio = static_cast<double>(plan.factored_params) / static_cast<double>(plan.original_params);
  return plan;
}

/// TT ranks by the same halving loop as Tucker, starting from the
/// exact-representation bounds and halving all N−1 ranks in lockstep.
inline RankPlan tt_ranks(std::span<const Index> shape, double gamma_hat) {
  detail::require_positive_ratio(gamma_hat, "tt_ranks");
  detail::require_dims(shape, 2, "tt_ranks");
  const double total = static_cast<double>(element_count(shape));
  auto ratio = [&](const std::vector<double>& r) {
    double sum = 0.0;
    for (Index n = 0; n < shape.size(); ++n) {
      const double left = n == 0 ? 1.0 : r[n - 1];
      const double right = n + 1 == shape.size() ? 1.0 : r[n];
      sum += left * static_cast<double>(shape[n]) * right;
    }
    return sum / total;
  };
  const auto bounds = tt_rank_bounds(shape);
  std::vector<double> start(bounds.begin(), bounds.end());
  const auto real_ranks = detail::halve_until(std::move(start), gamma_hat, ratio);

  RankPlan plan;
  plan.method = Method::kTt;
  plan.target_ratio = gamma_hat;
  plan.ranks = detail::floor_ranks(real_ranks);
  plan.original_params = element_count(shape);
  plan.factored_params = tt_params(shape, plan.ranks);
  plan.predicted_ratio = static_cast<double>(plan.factored_params) / static_cast<double>(plan.original_params);
  return plan;
}

/// Resolves a plan for `method` on `shape`. Order-2 svd takes the matrix
/// dims; every other method takes the full shape.
inline RankPlan plan_ranks(Method method, std::span<const Index> shape, double gamma) {
  switch (method) {
    case Method::kSvd:
      if (shape.size() != 2) throw ShapeError("svd planning needs an order-2 shape");
      return svd_rank(shape[0], shape[1], gamma);
    case Method::kTucker: return tucker_ranks(shape, gamma);
    case Method::kCp: return cp_rank(shape, gamma);
    case Method::kTt: return tt_ranks(shape, gamma);
  }
  throw ValueError("unknown method");
}

/// Checks that `ranks` has the right arity and respects the structural bounds
/// of `method` on `shape`.
inline void validate_ranks(Method method, std::span<const Index> shape, std::span<const Index> ranks) {
  auto fail = [&](const std::string& why) {
    throw ShapeError(std::string(to_string(method)) + " ranks for shape " + shape_string(shape) + ": " + why);
  };
  for (Index r : ranks) {
    if (r < 1) fail("ranks must be >= 1");
  }
  switch (method) {
    case Method::kSvd:
      if (shape.size() != 2) fail("svd needs an order-2 shape");
      if (ranks.size() != 1) fail("svd takes one rank");
      if (ranks[0] > std::min(shape[0], shape[1])) fail("rank exceeds min(I,J)");
      return;
    case Method::kTucker:
      if (ranks.size() != shape.size()) fail("tucker takes one rank per mode");
      for (Index n = 0; n < shape.size(); ++n) {
        if (ranks[n] > shape[n]) fail("rank exceeds its mode dimension");
      }
      return;
    case Method::kCp:
      if (ranks.size() != 1) fail("cp takes one rank");
      if (shape.empty()) fail("empty shape");
      if (ranks[0] > *std::min_element(shape.begin(), shape.end())) fail("rank exceeds the smallest dimension");
      return;
    case Method::kTt: {
      if (shape.size() < 1 || ranks.size() + 1 != shape.size()) fail("tt takes order-1 ranks");
      const auto bounds = tt_rank_bounds(shape);
      for (Index n = 0; n < ranks.size(); ++n) {
        if (ranks[n] > bounds[n]) fail("rank exceeds its TT bound");
      }
      return;
    }
  }
}

/// Factored parameter count of `method` at `ranks` on `shape`.
inline Index factored_param_count(Method method, std::span<const Index> shape, std::span<const Index> ranks) {
  validate_ranks(method, shape, ranks);
  switch (method) {
    case Method::kSvd: return svd_params(shape[0], shape[1], ranks[0]);
    case Method::kTucker: return tucker_params(shape, ranks);
    case Method::kCp: return cp_params(shape, ranks[0]);
    case Method::kTt: return tt_params(shape, ranks);
  }
  return 0;
}

/// Compression ratio of a plan re-evaluated from its ranks on `shape`.
inline double achieved_ratio(const RankPlan& plan, std::span<const Index> shape) {
  const Index factored = factored_param_count(plan.method, shape, plan.ranks);
  return static_cast<double>(factored) / static_cast<double>(element_count(shape));
}

}  // namespace tdz
