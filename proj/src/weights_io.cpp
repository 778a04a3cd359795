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

// Weight file layout, all integers little-endian:
//
//   "MARU"            4 bytes magic
//   version           u16
//   spec record       u32 in_channels, u32 widths[4], u32 depths[4],
//                     u32 num_classes, u32 attention_dk_ratio
//   shape checksum    u64 (FNV-1a over tensor names and dims)
//   tensor count      u32
//   per tensor        u32 name length, name bytes, u32 rank, u64 dims[rank],
//                     f64 payload[prod(dims)] (IEEE-754 binary64, little-endian)

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "maru/segnet.hpp"

namespace maru::segnet {

namespace {

constexpr char kMagic[4] = {'M', 'A', 'R', 'U'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename T>
  void le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> buf) : buf_(std::move(buf)) {}

  bool has(std::size_t n) const { return buf_.size() - pos_ >= n; }
  std::size_t remaining() const { return buf_.size() - pos_; }

  template <typename T>
  T le(const std::string& where) {
    need(sizeof(T), where);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  double f64(const std::string& where) { return std::bit_cast<double>(le<std::uint64_t>(where)); }
  std::string str(std::size_t n, const std::string& where) {
    need(n, where);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const std::string& where) {
    if (!has(n)) throw CorruptionError("load_weights: file truncated in " + where);
  }

  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path) {
  const NetworkSpec& spec = weights.spec();
  Writer w;
  w.bytes(kMagic, 4);
  w.le<std::uint16_t>(kWeightFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(spec.in_channels));
  for (int v : spec.stage_widths) w.le<std::uint32_t>(static_cast<std::uint32_t>(v));
  for (int v : spec.stage_depths) w.le<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(spec.num_classes));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(spec.attention_dk_ratio));
  w.le<std::uint64_t>(weights.shape_checksum());
  w.le<std::uint32_t>(static_cast<std::uint32_t>(weights.tensors().size()));
  for (const auto& t : weights.tensors()) {
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.le<std::uint64_t>(static_cast<std::uint64_t>(d));
    for (double v : t.data) w.f64(v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("save_weights: cannot open " + path.string() + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw IoError("save_weights: write failed for " + path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_weights: cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  if (!r.has(4) || r.str(4, "magic") != std::string(kMagic, 4)) {
    throw FormatError("load_weights: " + path.string() + " is not a weight file (bad magic)");
  }
  const auto version = r.le<std::uint16_t>("version");
  if (version != kWeightFormatVersion) {
    throw VersionError("load_weights: format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kWeightFormatVersion) +
                       ")");
  }

  NetworkSpec spec;
  spec.in_channels = static_cast<int>(r.le<std::uint32_t>("spec record"));
  for (int& v : spec.stage_widths) v = static_cast<int>(r.le<std::uint32_t>("spec record"));
  for (int& v : spec.stage_depths) v = static_cast<int>(r.le<std::uint32_t>("spec record"));
  spec.num_classes = static_cast<int>(r.le<std::uint32_t>("spec record"));
  spec.attention_dk_ratio = static_cast<int>(r.le<std::uint32_t>("spec record"));
  try {
    spec.validate();
  } catch (const ParameterError& e) {
    throw FormatError(std::string("load_weights: invalid spec record: ") + e.what());
  }

  const auto stored_checksum = r.le<std::uint64_t>("header");
  const auto count = r.le<std::uint32_t>("header");
  std::vector<Tensor> layout = expected_layout(spec);
  if (stored_checksum != shape_checksum(layout) || count != layout.size()) {
    throw FormatError("load_weights: tensor shapes do not match the stored spec");
  }

  for (std::uint32_t i = 0; i < count; ++i) {
    Tensor& expected = layout[i];
    const std::string where = "tensor #" + std::to_string(i) + " ('" + expected.name + "')";
    const auto name_len = r.le<std::uint32_t>(where);
    const std::string name = r.str(name_len, where);
    const auto rank = r.le<std::uint32_t>("tensor '" + name + "'");
    std::vector<std::int64_t> dims(rank);
    for (auto& d : dims) d = static_cast<std::int64_t>(r.le<std::uint64_t>("tensor '" + name + "'"));
    if (name != expected.name || dims != expected.dims) {
      throw FormatError("load_weights: tensor '" + name + "' does not match layout entry '" +
                        expected.name + "'");
    }
    for (double& v : expected.data) v = r.f64("tensor '" + name + "'");
  }
  if (r.remaining() != 0) {
    throw CorruptionError("load_weights: " + std::to_string(r.remaining()) +
                          " trailing bytes after the last tensor");
  }
  return NetworkWeights(spec, std::move(layout));
}

}  // namespace maru::segnet
