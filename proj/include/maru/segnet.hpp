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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "maru/attention.hpp"
#include "maru/numerics.hpp"

namespace maru::segnet {

/// Topology of the toy network: a stem, four strided residual stages, one
/// attention block per stage output and a four-step decoder.
struct NetworkSpec {
  int in_channels = 3;
  std::array<int, 4> stage_widths{8, 16, 32, 64};
  std::array<int, 4> stage_depths{1, 1, 1, 1};
  int num_classes = 6;
  int attention_dk_ratio = 2;

  void validate() const;
  // floor(width / ratio), at least 1. `stage` is 1-based.
  int attention_dk(int stage) const;

  static NetworkSpec resnet18_like(std::array<int, 4> widths, int in_channels, int num_classes);
  static NetworkSpec resnet34_like(std::array<int, 4> widths, int in_channels, int num_classes);

  bool operator==(const NetworkSpec&) const = default;
};

struct Tensor {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<double> data;

  std::int64_t numel() const;
};

class NetworkWeights {
 public:
  NetworkWeights() = default;
  NetworkWeights(NetworkSpec spec, std::vector<Tensor> tensors);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& tensors() { return tensors_; }

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  bool contains(const std::string& name) const;

  int attention_block_count() const;
  int decoder_step_count() const;

  // FNV-1a over names and dims only.
  std::uint64_t shape_checksum() const;
  // FNV-1a over names, dims and payload bits.
  std::uint64_t checksum() const;

 private:
  NetworkSpec spec_;
  std::vector<Tensor> tensors_;
};

// Shapes every weight set built from `spec` must have, in storage order.
std::vector<Tensor> expected_layout(const NetworkSpec& spec);
std::uint64_t shape_checksum(const std::vector<Tensor>& tensors);

/// Seeded build; every kernel and bias is uniform in [-a, a] with
/// a = sqrt(1 / fan_in). Attention gammas start at zero.
NetworkWeights build_network(const NetworkSpec& spec, std::uint64_t seed);

/// h x w image with `channels` planes stored as an (h*w) x channels matrix.
struct ImageTensor {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t channels = 0;
  Matrix data;

  static ImageTensor zeros(std::int64_t h, std::int64_t w, std::int64_t channels);
};

enum class SkipMode { Attention, Plain };

struct FeatureShape {
  std::int64_t h, w, channels;
  bool operator==(const FeatureShape&) const = default;
};

// Shapes observed during one forward pass.
struct ForwardTrace {
  std::vector<FeatureShape> encoder;    // stages 1..4
  std::vector<FeatureShape> attention;  // block outputs, stages 1..4
  std::vector<FeatureShape> decoder;    // after each upsample
};

ImageTensor forward(const NetworkWeights& weights, const ImageTensor& img,
                    SkipMode skips = SkipMode::Attention, ForwardTrace* trace = nullptr);

std::vector<std::int32_t> argmax_labels(const ImageTensor& logits);

std::uint64_t param_count(const NetworkWeights& weights);

struct AttentionFlops {
  std::uint64_t lam = 0;
  std::uint64_t channel = 0;
  std::uint64_t total() const { return lam + channel; }
};

AttentionFlops attention_flops_breakdown(const NetworkSpec& spec, std::int64_t h, std::int64_t w);
std::uint64_t attention_flops(const NetworkSpec& spec, std::int64_t h, std::int64_t w);

inline constexpr std::uint16_t kWeightFormatVersion = 1;

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path);
NetworkWeights load_weights(const std::filesystem::path& path);

}  // namespace maru::segnet
