// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "tdz/container.hpp"
#include "tdz/decompose.hpp"
#include "tdz/factored_layers.hpp"

namespace tdz {

struct PolicyOverride {
  std::optional<Method> method;
  std::optional<double> ratio;
};

/// Linear weights go through SVD and convolution kernels through
/// `conv_method`; `other`-role tensors pass through untouched.
struct CompressionPolicy {
  double encoder_ratio = 0.25;
  double decoder_ratio = 0.25;
  double other_ratio = 0.25;
  Method conv_method = Method::kTucker;
  std::map<std::string, PolicyOverride> overrides;

  TuckerOptions tucker;
  CpOptions cp;
  SvdOptions svd;

  double ratio_for(Group g) const {
    switch (g) {
      case Group::kEncoder: return encoder_ratio;
      case Group::kDecoder: return decoder_ratio;
      case Group::kOther: return other_ratio;
    }
    return other_ratio;
  }
};

struct PlannedTensor {
  std::string name;
  RankPlan plan;

  friend bool operator==(const PlannedTensor&, const PlannedTensor&) = default;
};

namespace detail {

inline void require_policy_ratio(double r, const std::string& what) {
  if (!(r > 0.0 && r <= 1.0)) throw ValueError(what + " must lie in (0, 1], got " + std::to_string(r));
}

}  // namespace detail

/// Rank plans for every tensor the policy decomposes, in container order.
/// Entries that are already factored are left alone.
inline std::vector<PlannedTensor> plan_compression(const ModelContainer& c, const CompressionPolicy& p) {
  detail::require_policy_ratio(p.encoder_ratio, "encoder ratio");
  detail::require_policy_ratio(p.decoder_ratio, "decoder ratio");
  detail::require_policy_ratio(p.other_ratio, "other ratio");
  if (p.conv_method == Method::kSvd) throw ValueError("conv method must be one of tucker, cp, tt");
  for (const auto& [name, ov] : p.overrides) {
    const auto* e = c.find(name);
    if (!e) throw ValueError("policy override names unknown tensor '" + name + "'");
    if (e->role == Role::kOther) throw ValueError("tensor '" + name + "' has role other and is never decomposed");
    if (ov.ratio) detail::require_policy_ratio(*ov.ratio, "override ratio for '" + name + "'");
  }

  std::vector<PlannedTensor> out;
  for (const auto& e : c.entries()) {
    if (e.role == Role::kOther || e.is_factored()) continue;
    Method method = e.role == Role::kLinearWeight ? Method::kSvd : p.conv_method;
    double ratio = p.ratio_for(e.group);
    if (auto it = p.overrides.find(e.name); it != p.overrides.end()) {
      if (it->second.method) method = *it->second.method;
      if (it->second.ratio) ratio = *it->second.ratio;
    }
    out.push_back({e.name, plan_ranks(method, e.shape(), ratio)});
  }
  return out;
}

struct TensorReport {
  std::string name;
  Role role = Role::kOther;
  Group group = Group::kOther;
  /// "dense" for pass-through entries.
  std::string method;
  std::vector<Index> ranks;
  Index original_params = 0;
  Index factored_params = 0;
  double achieved_ratio = 1.0;
  double relative_error = 0.0;
  Index dense_macs = 0;
  Index factored_macs = 0;
  double mac_ratio = 1.0;
  bool no_speedup = false;
};

struct CompressionReport {
  std::vector<TensorReport> tensors;
  Index params_before = 0;
  Index params_after = 0;
  double global_ratio = 1.0;
};

inline nlohmann::json to_json(const CompressionReport& r) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : r.tensors) {
    tensors.push_back({{"name", t.name},
                       {"role", to_string(t.role)},
                       {"group", to_string(t.group)},
                       {"method", t.method},
                       {"ranks", t.ranks},
                       {"original_params", t.original_params},
                       {"factored_params", t.factored_params},
                       {"achieved_ratio", t.achieved_ratio},
                       {"relative_error", t.relative_error},
                       {"dense_macs", t.dense_macs},
                       {"factored_macs", t.factored_macs},
                       {"mac_ratio", t.mac_ratio},
                       {"no_speedup", t.no_speedup}});
  }
  return {{"tensors", std::move(tensors)},
          {"totals",
           {{"params_before", r.params_before}, {"params_after", r.params_after}, {"global_ratio", r.global_ratio}}}};
}

namespace detail {

inline EntryValue decompose_planned(const DenseTensor& t, const RankPlan& plan, const CompressionPolicy& p) {
  switch (plan.method) {
    case Method::kSvd: return decompose_svd(t, plan.ranks[0], p.svd);
    case Method::kTucker: return decompose_tucker(t, plan.ranks, p.tucker);
    case Method::kCp: return decompose_cp(t, plan.ranks[0], p.cp);
    case Method::kTt: return decompose_tt(t, plan.ranks, p.svd);
  }
  throw ValueError("unknown method");
}

// Relative error, or the absolute Frobenius gap when the original is all zeros.
inline double dense_relative_error(const DenseTensor& want, const DenseTensor& got) {
  if (frobenius_norm(want) > 0.0) return relative_error(want, got);
  return frobenius_norm(got);
}

inline DenseTensor dense_of(const EntryValue& v) {
  return std::visit(
      [](const auto& x) -> DenseTensor {
        if constexpr (std::is_same_v<std::decay_t<decltype(x)>, DenseTensor>) {
          return x;
        } else {
          return reconstruct(x);
        }
      },
      v);
}

}  // namespace detail

struct CompressionResult {
  ModelContainer container;
  CompressionReport report;
};

/// Applies `policy` to a copy of `c`. Any failure aborts the whole call with a
/// CompressionError naming the tensor; nothing partial is returned.
inline CompressionResult compress(const ModelContainer& c, const CompressionPolicy& policy) {
  const auto plans = plan_compression(c, policy);
  std::map<std::string, const RankPlan*> by_name;
  for (const auto& p : plans) by_name[p.name] = &p.plan;

  CompressionResult res;
  auto& report = res.report;
  for (const auto& e : c.entries()) {
    TensorReport tr;
    tr.name = e.name;
    tr.role = e.role;
    tr.group = e.group;
    const Shape shape = e.shape();
    tr.original_params = element_count(shape);
    TensorEntry out{e.name, e.role, e.group, e.value};

    auto it = by_name.find(e.name);
    if (it == by_name.end()) {
      tr.method = kind_name(e.value);
      tr.factored_params = e.param_count();
      tr.ranks = format::entry_ranks(e.value);
      tr.dense_macs = tr.original_params;
      tr.factored_macs = tr.original_params;
    } else {
      const RankPlan& plan = *it->second;
      try {
        const auto& dense = std::get<DenseTensor>(e.value);
        out.value = detail::decompose_planned(dense, plan, policy);
        tr.relative_error = detail::dense_relative_error(dense, detail::dense_of(out.value));
        const auto mc = mac_report(plan, shape);
        tr.dense_macs = mc.dense_macs;
        tr.factored_macs = mc.factored_macs;
        tr.no_speedup = mc.no_speedup;
      } catch (const std::exception& err) {
        throw CompressionError(e.name, err.what());
      }
      tr.method = to_string(plan.method);
      tr.ranks = plan.ranks;
      tr.factored_params = out.param_count();
    }
    tr.achieved_ratio = static_cast<double>(tr.factored_params) / static_cast<double>(tr.original_params);
    tr.mac_ratio = static_cast<double>(tr.factored_macs) / static_cast<double>(tr.dense_macs);
    report.params_before += tr.original_params;
    report.params_after += tr.factored_params;
    report.tensors.push_back(std::move(tr));
    res.container.add(std::move(out));
  }
  if (report.params_before > 0) {
    report.global_ratio = static_cast<double>(report.params_after) / static_cast<double>(report.params_before);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Verification.

struct TensorCheck {
  std::string name;
  std::string kind;
  double relative_error = 0.0;
  /// Worst relative gap between the factored operator and the dense one on
  /// random probes; negative when no probe applies.
  double probe_error = -1.0;
  bool passed = false;
  std::string note;
};

struct VerifyResult {
  std::vector<TensorCheck> tensors;
  bool all_passed() const {
    for (const auto& t : tensors) {
      if (!t.passed) return false;
    }
    return true;
  }
};

inline nlohmann::json to_json(const VerifyResult& v) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : v.tensors) {
    nlohmann::json j = {{"name", t.name},
                        {"kind", t.kind},
                        {"relative_error", t.relative_error},
                        {"passed", t.passed}};
    if (t.probe_error >= 0.0) j["probe_error"] = t.probe_error;
    if (!t.note.empty()) j["note"] = t.note;
    tensors.push_back(std::move(j));
  }
  return {{"passed", v.all_passed()}, {"tensors", std::move(tensors)}};
}

struct VerifyOptions {
  double tol = 1e-4;
  int probes = 4;
  double probe_tol = 1e-4;
  std::uint64_t seed = 0;
};

namespace detail {

inline double vector_gap(std::span<const float> got, std::span<const float> want) {
  double diff = 0.0, ref = 0.0;
  for (Index i = 0; i < want.size(); ++i) {
    const double d = static_cast<double>(got[i]) - want[i];
    diff += d * d;
    ref += static_cast<double>(want[i]) * want[i];
  }
  if (ref == 0.0) return std::sqrt(diff);
  return std::sqrt(diff / ref);
}

inline DenseTensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<float> normal;
  std::vector<float> v(element_count(shape));
  for (auto& x : v) x = normal(rng);
  return DenseTensor(std::move(shape), std::move(v));
}

// Factored operator vs dense operator on the reconstructed weight.
inline std::optional<double> probe_gap(const TensorEntry& e, const DenseTensor& rebuilt, const VerifyOptions& opt,
                                       std::mt19937_64& rng) {
  double worst = 0.0;
  const auto* svd = std::get_if<SvdFactors>(&e.value);
  const auto* tucker = std::get_if<TuckerFactors>(&e.value);
  const auto* cp = std::get_if<CpFactors>(&e.value);
  const Shape shape = e.shape();
  if (e.role == Role::kLinearWeight && svd) {
    for (int p = 0; p < opt.probes; ++p) {
      const auto x = random_tensor({shape[1]}, rng);
      worst = std::max(worst, vector_gap(apply_factored_linear(*svd, x.data()), dense_linear(rebuilt, x.data())));
    }
    return worst;
  }
  if (e.role == Role::kConv1dKernel && (tucker || cp)) {
    for (int p = 0; p < opt.probes; ++p) {
      const Signal x(random_tensor({shape[1], shape[2] + 3}, rng));
      const auto got = tucker ? apply_factored_conv1d(*tucker, x) : apply_factored_conv1d(*cp, x);
      worst = std::max(worst, vector_gap(got.data().data(), dense_conv1d(rebuilt, x).data().data()));
    }
    return worst;
  }
  if (e.role == Role::kConv2dKernel && tucker) {
    for (int p = 0; p < opt.probes; ++p) {
      const auto x = random_tensor({shape[1], shape[2] + 2, shape[3] + 2}, rng);
      worst = std::max(worst, vector_gap(apply_factored_conv2d(*tucker, x).data(), dense_conv2d(rebuilt, x).data()));
    }
    return worst;
  }
  return std::nullopt;
}

}  // namespace detail

/// Compares every compressed entry with its original. An entry passes when
/// its reconstruction is within `tol` relative Frobenius error (absolute for
/// an all-zero original) and, for factored linear and conv weights, the
/// factored operator agrees with the dense one on random probes.
inline VerifyResult verify(const ModelContainer& original, const ModelContainer& compressed,
                           const VerifyOptions& opt = {}) {
  if (!(opt.tol >= 0.0)) throw ValueError("verify tolerance must be >= 0");
  std::set<std::string> a, b;
  for (const auto& e : original.entries()) a.insert(e.name);
  for (const auto& e : compressed.entries()) b.insert(e.name);
  if (a != b) throw ValueError("original and compressed containers hold different tensor names");

  std::mt19937_64 rng(opt.seed);
  VerifyResult res;
  for (const auto& e : compressed.entries()) {
    const auto& o = *original.find(e.name);
    TensorCheck chk;
    chk.name = e.name;
    chk.kind = kind_name(e.value);
    if (o.shape() != e.shape()) {
      chk.note = "shape " + shape_string(e.shape()) + " differs from original " + shape_string(o.shape());
      chk.relative_error = std::numeric_limits<double>::infinity();
      res.tensors.push_back(std::move(chk));
      continue;
    }
    const auto want = detail::dense_of(o.value);
    const auto got = detail::dense_of(e.value);
    chk.relative_error = detail::dense_relative_error(want, got);
    chk.passed = chk.relative_error <= opt.tol;
    if (auto gap = detail::probe_gap(e, got, opt, rng)) {
      chk.probe_error = *gap;
      if (*gap > opt.probe_tol) {
        chk.passed = false;
        chk.note = "factored operator disagrees with dense operator";
      }
    }
    res.tensors.push_back(std::move(chk));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic containers.

struct TensorSpec {
  std::string name;
  Role role = Role::kOther;
  Group group = Group::kOther;
  Shape shape;
};

/// Reads {"tensors": [{"name", "role", "group", "shape"}, ...]}.
inline std::vector<TensorSpec> parse_inventory(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tensors") || !j["tensors"].is_array()) {
    throw ValueError("shape inventory must be an object with a 'tensors' array");
  }
  std::vector<TensorSpec> out;
  for (const auto& t : j["tensors"]) {
    TensorSpec s;
    try {
      s.name = t.at("name").get<std::string>();
      const auto role = parse_role(t.at("role").get<std::string>());
      const auto group = parse_group(t.value("group", std::string("other")));
      if (!role) throw ValueError("unknown role in inventory entry '" + s.name + "'");
      if (!group) throw ValueError("unknown group in inventory entry '" + s.name + "'");
      s.role = *role;
      s.group = *group;
      s.shape = t.at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& err) {
      throw ValueError(std::string("bad inventory entry: ") + err.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

struct SyntheticOptions {
  /// Rank-one terms per linear or conv weight, weighted decay^k.
  Index components = 32;
  double decay = 0.6;
  /// Gaussian noise added on top, relative to the structured part.
  double noise = 0.02;
};

/// Synthetic weights with a decaying spectrum, like trained layers have.
/// Linear and conv weights are a sum of random rank-one terms with
/// geometrically falling weights plus a little noise; every tensor is scaled
/// to an RMS of 1/sqrt(fan-in). `other`-role tensors are plain Gaussian.
inline ModelContainer synthetic_container(const std::vector<TensorSpec>& specs, std::uint64_t seed,
                                          const SyntheticOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  ModelContainer c;
  for (const auto& s : specs) {
    const Index count = element_count(s.shape);
    std::vector<double> v(count);
    if (s.role == Role::kOther) {
      for (auto& x : v) x = normal(rng);
    } else {
      std::vector<double> weights(opt.components);
      std::vector<Tensor<double>> legs;
      for (Index k = 0; k < opt.components; ++k) weights[k] = std::pow(opt.decay, static_cast<double>(k));
      for (Index d : s.shape) {
        Tensor<double> u({d, opt.components});
        for (auto& x : u.data()) x = normal(rng) / std::sqrt(static_cast<double>(d));
        legs.push_back(std::move(u));
      }
      const auto structured = detail::cp_dense<double, double>(weights, legs);
      const double rms = frobenius_norm(structured) / std::sqrt(static_cast<double>(count));
      auto sd = structured.data();
      for (Index i = 0; i < count; ++i) v[i] = sd[i] + opt.noise * rms * normal(rng);
    }
    Index fan_in = 1;
    for (Index n = 1; n < s.shape.size(); ++n) fan_in *= s.shape[n];
    double sum = 0.0;
    for (double x : v) sum += x * x;
    const double scale = sum > 0.0 ? 1.0 / std::sqrt(static_cast<double>(fan_in) * sum / count) : 0.0;
    std::vector<float> out(count);
    for (Index i = 0; i < count; ++i) out[i] = static_cast<float>(v[i] * scale);
    c.add({s.name, s.role, s.group, DenseTensor(s.shape, std::move(out))});
  }
  return c;
}

}  // namespace tdz
