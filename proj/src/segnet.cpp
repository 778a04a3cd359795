/*
 * Copyright 2026 The maru Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "maru/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "maru/scratch.hpp"

namespace maru::segnet {

void NetworkSpec::validate() const {
  if (in_channels < 1) throw ParameterError("NetworkSpec: in_channels must be positive");
  if (num_classes < 2) throw ParameterError("NetworkSpec: num_classes must be at least 2");
  if (attention_dk_ratio < 1) throw ParameterError("NetworkSpec: attention_dk_ratio must be >= 1");
  for (int i = 0; i < 4; ++i) {
    if (stage_widths[i] < 1) throw ParameterError("NetworkSpec: stage widths must be positive");
    if (stage_depths[i] < 1) throw ParameterError("NetworkSpec: stage depths must be positive");
  }
}

int NetworkSpec::attention_dk(int stage) const {
  return std::max(1, stage_widths.at(stage - 1) / attention_dk_ratio);
}

NetworkSpec NetworkSpec::resnet18_like(std::array<int, 4> widths, int in_channels,
                                       int num_classes) {
  return {in_channels, widths, {2, 2, 2, 2}, num_classes, 2};
}

NetworkSpec NetworkSpec::resnet34_like(std::array<int, 4> widths, int in_channels,
                                       int num_classes) {
  return {in_channels, widths, {3, 4, 6, 3}, num_classes, 2};
}

std::int64_t Tensor::numel() const {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

NetworkWeights::NetworkWeights(NetworkSpec spec, std::vector<Tensor> tensors)
    : spec_(std::move(spec)), tensors_(std::move(tensors)) {}

const Tensor& NetworkWeights::at(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw ParameterError("NetworkWeights: no tensor named '" + name + "'");
}

Tensor& NetworkWeights::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool NetworkWeights::contains(const std::string& name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const Tensor& t) { return t.name == name; });
}

int NetworkWeights::attention_block_count() const {
  int n = 0;
  for (int s = 1; contains("attn" + std::to_string(s) + ".w_q"); ++s) ++n;
  return n;
}

int NetworkWeights::decoder_step_count() const {
  int n = 0;
  for (int s = 1; contains("decoder" + std::to_string(s) + ".conv1.weight"); ++s) ++n;
  return n;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

void fnv_u64(std::uint64_t& h, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  fnv(h, bytes, 8);
}

void hash_shape(std::uint64_t& h, const Tensor& t) {
  fnv_u64(h, t.name.size());
  fnv(h, t.name.data(), t.name.size());
  fnv_u64(h, t.dims.size());
  for (auto d : t.dims) fnv_u64(h, static_cast<std::uint64_t>(d));
}

}  // namespace

std::uint64_t shape_checksum(const std::vector<Tensor>& tensors) {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tensors) hash_shape(h, t);
  return h;
}

std::uint64_t NetworkWeights::shape_checksum() const { return segnet::shape_checksum(tensors_); }

std::uint64_t NetworkWeights::checksum() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& t : tensors_) {
    hash_shape(h, t);
    for (double v : t.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      fnv_u64(h, bits);
    }
  }
  return h;
}

namespace {

Tensor shaped(std::string name, std::vector<std::int64_t> dims) {
  Tensor t{std::move(name), std::move(dims), {}};
  t.data.assign(static_cast<std::size_t>(t.numel()), 0.0);
  return t;
}

void add_conv(std::vector<Tensor>& out, const std::string& prefix, int k, int cin, int cout) {
  out.push_back(shaped(prefix + ".weight", {k, k, cin, cout}));
  out.push_back(shaped(prefix + ".bias", {cout}));
}

std::string stage_name(int stage) { return "stage" + std::to_string(stage); }
std::string attn_name(int stage) { return "attn" + std::to_string(stage); }
std::string decoder_name(int step) { return "decoder" + std::to_string(step); }

// Encoder stage feeding decoder step `step` (both 1-based).
int skip_stage(int step) { return 5 - step; }

int decoder_in_channels(const NetworkSpec& spec, int step) {
  const int skip = skip_stage(step);
  const int previous = step == 1 ? spec.stage_widths[3] : spec.stage_widths[skip];
  return previous + spec.stage_widths[skip - 1];
}

}  // namespace

std::vector<Tensor> expected_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<Tensor> out;
  const auto& widths = spec.stage_widths;
  add_conv(out, "stem.conv", 3, spec.in_channels, widths[0]);
  int cin = widths[0];
  for (int s = 1; s <= 4; ++s) {
    const int cout = widths[s - 1];
    for (int b = 0; b < spec.stage_depths[s - 1]; ++b) {
      const std::string block = stage_name(s) + ".block" + std::to_string(b);
      add_conv(out, block + ".conv1", 3, cin, cout);
      add_conv(out, block + ".conv2", 3, cout, cout);
      if (b == 0) add_conv(out, block + ".shortcut", 1, cin, cout);
      cin = cout;
    }
  }
  for (int s = 1; s <= 4; ++s) {
    const int c = widths[s - 1];
    const int dk = spec.attention_dk(s);
    out.push_back(shaped(attn_name(s) + ".w_q", {c, dk}));
    out.push_back(shaped(attn_name(s) + ".w_k", {c, dk}));
    out.push_back(shaped(attn_name(s) + ".w_v", {c, c}));
    out.push_back(shaped(attn_name(s) + ".gamma_p", {1}));
    out.push_back(shaped(attn_name(s) + ".gamma_c", {1}));
  }
  for (int step = 1; step <= 4; ++step) {
    const int cout = widths[skip_stage(step) - 1];
    add_conv(out, decoder_name(step) + ".conv1", 3, decoder_in_channels(spec, step), cout);
    add_conv(out, decoder_name(step) + ".conv2", 3, cout, cout);
  }
  add_conv(out, "classifier", 1, widths[0], spec.num_classes);
  return out;
}

NetworkWeights build_network(const NetworkSpec& spec, std::uint64_t seed) {
  std::vector<Tensor> tensors = expected_layout(spec);
  Rng rng(seed);
  for (auto& t : tensors) {
    const bool is_gamma = t.name.ends_with(".gamma_p") || t.name.ends_with(".gamma_c");
    if (is_gamma) continue;
    // Conv weights are [kh, kw, cin, cout]; projections are [c, d]. Biases
    // share the fan-in of their kernel, which precedes them in the layout.
    std::int64_t fan_in = 1;
    if (t.dims.size() == 4) {
      fan_in = t.dims[0] * t.dims[1] * t.dims[2];
    } else if (t.dims.size() == 2) {
      fan_in = t.dims[0];
    } else {
      const Tensor& kernel = *(&t - 1);
      fan_in = kernel.dims[0] * kernel.dims[1] * kernel.dims[2];
    }
    const double a = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-a, a);
  }
  return NetworkWeights(spec, std::move(tensors));
}

ImageTensor ImageTensor::zeros(std::int64_t h, std::int64_t w, std::int64_t channels) {
  return {h, w, channels, Matrix::Zero(h * w, channels)};
}

namespace {

using ConstMap = Eigen::Map<const Matrix>;

ConstMap as_matrix(const Tensor& t, std::int64_t rows, std::int64_t cols) {
  return ConstMap(t.data.data(), rows, cols);
}

// 'same' padding for odd kernels; output is ceil(h / stride).
ImageTensor conv2d(const ImageTensor& x, const NetworkWeights& weights,
                   const std::string& prefix, int stride, bool relu) {
  const Tensor& kernel = weights.at(prefix + ".weight");
  const Tensor& bias = weights.at(prefix + ".bias");
  const std::int64_t k = kernel.dims[0];
  const std::int64_t cin = kernel.dims[2];
  const std::int64_t cout = kernel.dims[3];
  if (cin != x.channels) {
    throw ShapeError(prefix + ": expects " + std::to_string(cin) + " input channels, got " +
                     std::to_string(x.channels));
  }
  const std::int64_t pad = k / 2;
  const std::int64_t oh = (x.h - 1) / stride + 1;
  const std::int64_t ow = (x.w - 1) / stride + 1;

  ScratchMeter::Lease lease(static_cast<std::size_t>(oh * ow * k * k * cin));
  Matrix cols = Matrix::Zero(oh * ow, k * k * cin);
  for (std::int64_t oy = 0; oy < oh; ++oy) {
    for (std::int64_t ox = 0; ox < ow; ++ox) {
      const std::int64_t row = oy * ow + ox;
      for (std::int64_t ky = 0; ky < k; ++ky) {
        const std::int64_t iy = oy * stride + ky - pad;
        if (iy < 0 || iy >= x.h) continue;
        for (std::int64_t kx = 0; kx < k; ++kx) {
          const std::int64_t ix = ox * stride + kx - pad;
          if (ix < 0 || ix >= x.w) continue;
          cols.block(row, (ky * k + kx) * cin, 1, cin) = x.data.row(iy * x.w + ix);
        }
      }
    }
  }
  ImageTensor out{oh, ow, cout, Matrix(oh * ow, cout)};
  out.data.noalias() = cols * as_matrix(kernel, k * k * cin, cout);
  out.data.rowwise() += as_matrix(bias, 1, cout).row(0);
  if (relu) out.data = out.data.cwiseMax(0.0);
  return out;
}

ImageTensor residual_block(const ImageTensor& x, const NetworkWeights& weights,
                           const std::string& prefix, int stride) {
  const ImageTensor inner = conv2d(x, weights, prefix + ".conv1", stride, true);
  ImageTensor out = conv2d(inner, weights, prefix + ".conv2", 1, false);
  if (weights.contains(prefix + ".shortcut.weight")) {
    out.data += conv2d(x, weights, prefix + ".shortcut", stride, false).data;
  } else {
    out.data += x.data;
  }
  out.data = out.data.cwiseMax(0.0);
  return out;
}

ImageTensor attend(const ImageTensor& x, const NetworkWeights& weights, int stage) {
  const std::string p = attn_name(stage);
  const Tensor& w_q = weights.at(p + ".w_q");
  const Tensor& w_k = weights.at(p + ".w_k");
  const Tensor& w_v = weights.at(p + ".w_v");
  AttentionBlockParams<double> params;
  params.proj.w_q = as_matrix(w_q, w_q.dims[0], w_q.dims[1]);
  params.proj.w_k = as_matrix(w_k, w_k.dims[0], w_k.dims[1]);
  params.proj.w_v = as_matrix(w_v, w_v.dims[0], w_v.dims[1]);
  params.gamma_p = weights.at(p + ".gamma_p").data[0];
  params.gamma_c = weights.at(p + ".gamma_c").data[0];
  return {x.h, x.w, x.channels, attention_block_forward(x.data, params)};
}

ImageTensor concat_channels(const ImageTensor& a, const ImageTensor& b) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("concat_channels: spatial sizes differ");
  ImageTensor out{a.h, a.w, a.channels + b.channels, Matrix(a.h * a.w, a.channels + b.channels)};
  out.data.leftCols(a.channels) = a.data;
  out.data.rightCols(b.channels) = b.data;
  return out;
}

ImageTensor upsample2x(const ImageTensor& x) {
  ImageTensor out{x.h * 2, x.w * 2, x.channels, Matrix(x.h * x.w * 4, x.channels)};
  for (std::int64_t y = 0; y < out.h; ++y) {
    for (std::int64_t xx = 0; xx < out.w; ++xx) {
      out.data.row(y * out.w + xx) = x.data.row((y / 2) * x.w + xx / 2);
    }
  }
  return out;
}

FeatureShape shape_of(const ImageTensor& t) { return {t.h, t.w, t.channels}; }

}  // namespace

ImageTensor forward(const NetworkWeights& weights, const ImageTensor& img, SkipMode skips,
                    ForwardTrace* trace) {
  const NetworkSpec& spec = weights.spec();
  if (img.channels != spec.in_channels) {
    throw ShapeError("forward: image has " + std::to_string(img.channels) +
                     " channels, network expects " + std::to_string(spec.in_channels));
  }
  if (img.h <= 0 || img.w <= 0 || img.h % 16 != 0 || img.w % 16 != 0) {
    throw ShapeError("forward: image " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                     " must have height and width divisible by 16; pad the input");
  }
  if (img.data.rows() != img.h * img.w || img.data.cols() != img.channels) {
    throw ShapeError("forward: image payload is " + shape_string(img.data));
  }

  ImageTensor x = conv2d(img, weights, "stem.conv", 1, true);
  std::array<ImageTensor, 4> stage_out;
  for (int s = 1; s <= 4; ++s) {
    for (int b = 0; b < spec.stage_depths[s - 1]; ++b) {
      x = residual_block(x, weights, stage_name(s) + ".block" + std::to_string(b), b == 0 ? 2 : 1);
    }
    stage_out[s - 1] = x;
    if (trace) trace->encoder.push_back(shape_of(x));
  }

  std::array<ImageTensor, 4> skip;
  for (int s = 1; s <= 4; ++s) {
    skip[s - 1] = skips == SkipMode::Attention ? attend(stage_out[s - 1], weights, s)
                                               : stage_out[s - 1];
    if (trace) trace->attention.push_back(shape_of(skip[s - 1]));
  }

  // Each step fuses the attended skip at the current resolution, refines it
  // with two convolutions and doubles the resolution.
  x = stage_out[3];
  for (int step = 1; step <= 4; ++step) {
    const std::string p = decoder_name(step);
    x = concat_channels(x, skip[skip_stage(step) - 1]);
    x = conv2d(x, weights, p + ".conv1", 1, true);
    x = conv2d(x, weights, p + ".conv2", 1, true);
    x = upsample2x(x);
    if (trace) trace->decoder.push_back(shape_of(x));
  }
  return conv2d(x, weights, "classifier", 1, false);
}

std::vector<std::int32_t> argmax_labels(const ImageTensor& logits) {
  std::vector<std::int32_t> out(static_cast<std::size_t>(logits.data.rows()));
  for (Eigen::Index i = 0; i < logits.data.rows(); ++i) {
    Eigen::Index best = 0;
    logits.data.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

std::uint64_t param_count(const NetworkWeights& weights) {
  std::uint64_t n = 0;
  for (const auto& t : weights.tensors()) n += static_cast<std::uint64_t>(t.numel());
  return n;
}

AttentionFlops attention_flops_breakdown(const NetworkSpec& spec, std::int64_t h, std::int64_t w) {
  spec.validate();
  if (h <= 0 || w <= 0 || h % 16 != 0 || w % 16 != 0) {
    throw ShapeError("attention_flops: spatial size must be divisible by 16");
  }
  AttentionFlops out;
  for (int s = 1; s <= 4; ++s) {
    AttentionDims dims;
    dims.h = h >> s;
    dims.w = w >> s;
    dims.n = dims.h * dims.w;
    dims.c = spec.stage_widths[s - 1];
    dims.d_k = spec.attention_dk(s);
    dims.d_v = dims.c;
    out.lam += flop_count(AttentionMethod::LAM, dims);
    out.channel += flop_count(AttentionMethod::Channel, dims);
  }
  return out;
}

std::uint64_t attention_flops(const NetworkSpec& spec, std::int64_t h, std::int64_t w) {
  return attention_flops_breakdown(spec, h, w).total();
}

}  // namespace maru::segnet
