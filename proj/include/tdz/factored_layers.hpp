// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "tdz/factors.hpp"
#include "tdz/rank_planner.hpp"
#include "tdz/tensor_ops.hpp"

namespace tdz {

/// Activation matrix of shape channels × frames.
class Signal {
 public:
  explicit Signal(DenseTensor data) : data_(std::move(data)) {
    if (data_.order() != 2) throw ShapeError("signal must be an order-2 (channels x frames) tensor");
  }

  Index channels() const { return data_.dim(0); }
  Index frames() const { return data_.dim(1); }
  const DenseTensor& data() const { return data_; }

 private:
  DenseTensor data_;
};

struct MacCount {
  Index dense_macs = 0;
  Index factored_macs = 0;
  double ratio = 1.0;
  /// The factored form must be reconstructed before use (tensor-train).
  bool no_speedup = false;
};

/// Multiply-accumulates actually executed by a factored operator, split by
/// pipeline stage. The input stage runs once per input frame, the other two
/// once per output frame.
struct MacTrace {
  Index input_stage = 0;
  Index core_stage = 0;
  Index output_stage = 0;
  Index input_frames = 0;
  Index output_frames = 0;

  Index total() const { return input_stage + core_stage + output_stage; }
  /// Steady-state cost of producing one output frame.
  Index per_frame() const {
    return input_stage / input_frames + core_stage / output_frames + output_stage / output_frames;
  }
};

// ---------------------------------------------------------------------------
// Linear layers.

/// y = a·(b·x): R·J + I·R multiply-accumulates instead of I·J.
inline std::vector<float> apply_factored_linear(const SvdFactors& f, std::span<const float> x,
                                                Index* macs = nullptr) {
  f.validate();
  const Index rank = f.rank(), in = f.b.cols(), out = f.a.rows();
  if (x.size() != in) {
    throw ShapeError("apply_factored_linear: input length " + std::to_string(x.size()) + " != " + std::to_string(in));
  }
  auto b = f.b.data();
  auto a = f.a.data();
  std::vector<double> mid(rank, 0.0);
  for (Index r = 0; r < rank; ++r) {
    double s = 0.0;
    for (Index j = 0; j < in; ++j) s += static_cast<double>(b[r * in + j]) * x[j];
    mid[r] = s;
  }
  std::vector<float> y(out);
  for (Index i = 0; i < out; ++i) {
    double s = 0.0;
    for (Index r = 0; r < rank; ++r) s += static_cast<double>(a[i * rank + r]) * mid[r];
    y[i] = static_cast<float>(s);
  }
  if (macs) *macs += rank * in + out * rank;
  return y;
}

inline std::vector<float> dense_linear(const DenseTensor& w, std::span<const float> x) {
  if (w.order() != 2 || w.cols() != x.size()) throw ShapeError("dense_linear: shape mismatch");
  const Index in = w.cols();
  auto d = w.data();
  std::vector<float> y(w.rows());
  for (Index i = 0; i < w.rows(); ++i) {
    double s = 0.0;
    for (Index j = 0; j < in; ++j) s += static_cast<double>(d[i * in + j]) * x[j];
    y[i] = static_cast<float>(s);
  }
  return y;
}

// ---------------------------------------------------------------------------
// 1-D convolution (valid correlation, stride 1).

/// out[i,τ] = Σ_{j,k} w[i,j,k]·x[j,τ+k].
inline Signal dense_conv1d(const DenseTensor& w, const Signal& x, Index* macs = nullptr) {
  if (w.order() != 3) throw ShapeError("dense_conv1d: kernel must be order-3 (out x in x width)");
  const Index out_ch = w.dim(0), in_ch = w.dim(1), width = w.dim(2);
  if (x.channels() != in_ch) throw ShapeError("dense_conv1d: signal channels do not match kernel");
  if (x.frames() < width) throw ShapeError("dense_conv1d: signal shorter than kernel");
  const Index frames = x.frames(), out_frames = frames - width + 1;
  auto kd = w.data();
  auto xd = x.data().data();
  std::vector<float> out(out_ch * out_frames);
  std::vector<double> acc(out_frames);
  for (Index i = 0; i < out_ch; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index j = 0; j < in_ch; ++j) {
      for (Index k = 0; k < width; ++k) {
        const double c = kd[(i * in_ch + j) * width + k];
        if (macs) *macs += out_frames;
        if (c == 0.0) continue;
        const float* row = &xd[j * frames + k];
        for (Index t = 0; t < out_frames; ++t) acc[t] += c * row[t];
      }
    }
    for (Index t = 0; t < out_frames; ++t) out[i * out_frames + t] = static_cast<float>(acc[t]);
  }
  return Signal(DenseTensor({out_ch, out_frames}, std::move(out)));
}

namespace detail {

// m · x over every frame (column) of x, counting one MAC per product.
inline DenseTensor pointwise(const DenseTensor& m, const DenseTensor& x, Index& macs) {
  if (m.cols() != x.dim(0)) throw ShapeError("pointwise: channel mismatch");
  const Index rows = m.rows(), inner = m.cols(), frames = x.dim(1);
  auto md = m.data();
  auto xd = x.data();
  std::vector<float> out(rows * frames);
  std::vector<double> acc(frames);
  for (Index i = 0; i < rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index p = 0; p < inner; ++p) {
      const double c = md[i * inner + p];
      const float* row = &xd[p * frames];
      for (Index t = 0; t < frames; ++t) acc[t] += c * row[t];
      macs += frames;
    }
    for (Index t = 0; t < frames; ++t) out[i * frames + t] = static_cast<float>(acc[t]);
  }
  return DenseTensor({rows, frames}, std::move(out));
}

}  // namespace detail

/// Tucker-factored 1-D convolution as pointwise → small conv → pointwise:
/// z = U²ᵀx (J→S), y = Ĉ ⋆ z with Ĉ[r,s,k] = Σ_t core[r,s,t]·U³[k,t]
/// (S→R, width K), out = U¹y (R→I).
inline Signal apply_factored_conv1d(const TuckerFactors& f, const Signal& x, MacTrace* trace = nullptr) {
  f.validate();
  if (f.core.order() != 3) throw ShapeError("apply_factored_conv1d: tucker factors must be order-3");
  const Index in_ch = f.factors[1].rows(), width = f.factors[2].rows();
  if (x.channels() != in_ch) throw ShapeError("apply_factored_conv1d: signal channels do not match factors");
  if (x.frames() < width) throw ShapeError("apply_factored_conv1d: signal shorter than kernel");

  MacTrace local;
  local.input_frames = x.frames();
  local.output_frames = x.frames() - width + 1;
  const auto z = detail::pointwise(transpose(f.factors[1]), x.data(), local.input_stage);
  const auto kernel = mode_n_product(f.core.cast<double>(), f.factors[2].cast<double>(), 2).cast<float>();
  const auto y = dense_conv1d(kernel, Signal(z), &local.core_stage);
  auto out = detail::pointwise(f.factors[0], y.data(), local.output_stage);
  if (trace) *trace = local;
  return Signal(std::move(out));
}

/// CP-factored 1-D convolution: pointwise J→R, per-component depthwise conv of
/// width K scaled by λ, pointwise R→I.
inline Signal apply_factored_conv1d(const CpFactors& f, const Signal& x, MacTrace* trace = nullptr) {
  f.validate();
  if (f.factors.size() != 3) throw ShapeError("apply_factored_conv1d: cp factors must be order-3");
  const Index rank = f.rank(), in_ch = f.factors[1].rows(), width = f.factors[2].rows();
  if (x.channels() != in_ch) throw ShapeError("apply_factored_conv1d: signal channels do not match factors");
  if (x.frames() < width) throw ShapeError("apply_factored_conv1d: signal shorter than kernel");

  MacTrace local;
  local.input_frames = x.frames();
  local.output_frames = x.frames() - width + 1;
  const auto z = detail::pointwise(transpose(f.factors[1]), x.data(), local.input_stage);
  const Index frames = x.frames(), out_frames = local.output_frames;
  auto zd = z.data();
  auto taps = f.factors[2].data();
  std::vector<float> y(rank * out_frames);
  std::vector<double> acc(out_frames);
  for (Index r = 0; r < rank; ++r) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index k = 0; k < width; ++k) {
      const double c = static_cast<double>(f.weights[r]) * taps[k * rank + r];
      for (Index t = 0; t < out_frames; ++t) acc[t] += c * zd[r * frames + k + t];
      local.core_stage += out_frames;
    }
    for (Index t = 0; t < out_frames; ++t) y[r * out_frames + t] = static_cast<float>(acc[t]);
  }
  auto out = detail::pointwise(f.factors[0], DenseTensor({rank, out_frames}, std::move(y)), local.output_stage);
  if (trace) *trace = local;
  return Signal(std::move(out));
}

// ---------------------------------------------------------------------------
// 2-D convolution. Images are channels × height × width tensors.

/// out[i,h,w] = Σ_{j,a,b} w[i,j,a,b]·x[j,h+a,w+b].
inline DenseTensor dense_conv2d(const DenseTensor& w, const DenseTensor& x, Index* macs = nullptr) {
  if (w.order() != 4) throw ShapeError("dense_conv2d: kernel must be order-4");
  if (x.order() != 3) throw ShapeError("dense_conv2d: input must be channels x height x width");
  const Index out_ch = w.dim(0), in_ch = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const Index h = x.dim(1), wd = x.dim(2);
  if (x.dim(0) != in_ch) throw ShapeError("dense_conv2d: input channels do not match kernel");
  if (h < kh || wd < kw) throw ShapeError("dense_conv2d: input smaller than kernel");
  const Index oh = h - kh + 1, ow = wd - kw + 1;
  auto kd = w.data();
  auto xd = x.data();
  std::vector<float> out(out_ch * oh * ow);
  std::vector<double> acc(oh * ow);
  for (Index i = 0; i < out_ch; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (Index j = 0; j < in_ch; ++j)
      for (Index a = 0; a < kh; ++a)
        for (Index b = 0; b < kw; ++b) {
          const double c = kd[((i * in_ch + j) * kh + a) * kw + b];
          if (macs) *macs += oh * ow;
          if (c == 0.0) continue;
          for (Index y = 0; y < oh; ++y) {
            const float* row = &xd[(j * h + y + a) * wd + b];
            double* dst = &acc[y * ow];
            for (Index z = 0; z < ow; ++z) dst[z] += c * row[z];
          }
        }
    for (Index p = 0; p < oh * ow; ++p) out[i * oh * ow + p] = static_cast<float>(acc[p]);
  }
  return DenseTensor({out_ch, oh, ow}, std::move(out));
}

/// Tucker-factored 2-D convolution; both spatial modes are recomposed into
/// the small kernel, leaving pointwise → small conv → pointwise.
inline DenseTensor apply_factored_conv2d(const TuckerFactors& f, const DenseTensor& x, MacTrace* trace = nullptr) {
  f.validate();
  if (f.core.order() != 4) throw ShapeError("apply_factored_conv2d: tucker factors must be order-4");
  if (x.order() != 3) throw ShapeError("apply_factored_conv2d: input must be channels x height x width");
  const Index in_ch = f.factors[1].rows(), kh = f.factors[2].rows(), kw = f.factors[3].rows();
  const Index h = x.dim(1), w = x.dim(2);
  if (x.dim(0) != in_ch) throw ShapeError("apply_factored_conv2d: input channels do not match factors");
  if (h < kh || w < kw) throw ShapeError("apply_factored_conv2d: input smaller than kernel");

  MacTrace local;
  local.input_frames = h * w;
  local.output_frames = (h - kh + 1) * (w - kw + 1);
  const auto z = detail::pointwise(transpose(f.factors[1]), x.reshaped({in_ch, h * w}), local.input_stage);
  const Index s = z.dim(0);
  auto kernel = mode_n_product(f.core.cast<double>(), f.factors[2].cast<double>(), 2);
  kernel = mode_n_product(kernel, f.factors[3].cast<double>(), 3);
  const auto y = dense_conv2d(kernel.cast<float>(), z.reshaped({s, h, w}), &local.core_stage);
  const Index r = y.dim(0), oh = y.dim(1), ow = y.dim(2);
  auto out = detail::pointwise(f.factors[0], y.reshaped({r, oh * ow}), local.output_stage);
  if (trace) *trace = local;
  return std::move(out).reshaped({out.dim(0), oh, ow});
}

// ---------------------------------------------------------------------------
// MAC accounting from plans.

namespace detail {

inline Index spatial_extent(std::span<const Index> shape) {
  Index k = 1;
  for (Index n = 2; n < shape.size(); ++n) k *= shape[n];
  return k;
}

// Cost of the left-to-right contraction that rebuilds a TT tensor.
inline Index tt_reconstruction_macs(std::span<const Index> shape, std::span<const Index> ranks) {
  Index macs = 0, rows = 1;
  for (Index n = 0; n < shape.size(); ++n) {
    const Index left = n == 0 ? 1 : ranks[n - 1];
    const Index right = n + 1 == shape.size() ? 1 : ranks[n];
    macs += rows * left * shape[n] * right;
    rows *= shape[n];
  }
  return macs;
}

}  // namespace detail

/// Dense vs factored multiply-accumulates per output frame.
///
/// linear (order 2): I·J vs R(I+J). conv (order ≥ 3, shape I×J×spatial…):
/// I·J·K vs J·S + S·R·K + R·I for tucker and J·R + R·K + R·I for cp, where K
/// is the product of the spatial dims. tt keeps the dense cost plus the
/// reconstruction and is flagged as giving no speedup.
inline MacCount mac_report(const RankPlan& plan, std::span<const Index> shape) {
  validate_ranks(plan.method, shape, plan.ranks);
  MacCount mc;
  const Index out = shape[0];
  const Index in = shape.size() > 1 ? shape[1] : 1;
  const Index k = detail::spatial_extent(shape);
  mc.dense_macs = element_count(shape);
  switch (plan.method) {
    case Method::kSvd:
      mc.factored_macs = plan.ranks[0] * (out + in);
      break;
    case Method::kTucker: {
      if (shape.size() < 2) throw ShapeError("mac_report: tucker needs order >= 2");
      const Index r = plan.ranks[0], s = plan.ranks[1];
      mc.factored_macs = in * s + s * r * k + r * out;
      break;
    }
    case Method::kCp: {
      if (shape.size() < 2) throw ShapeError("mac_report: cp needs order >= 2");
      const Index r = plan.ranks[0];
      mc.factored_macs = in * r + r * k + r * out;
      break;
    }
    case Method::kTt:
      mc.factored_macs = mc.dense_macs + detail::tt_reconstruction_macs(shape, plan.ranks);
      mc.no_speedup = true;
      break;
  }
  mc.ratio = static_cast<double>(mc.factored_macs) / static_cast<double>(mc.dense_macs);
  return mc;
}

}  // namespace tdz
