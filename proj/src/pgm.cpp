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

#include "maru/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace maru::io {

namespace {

struct Raster {
  int channels = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::vector<unsigned char> samples;
};

class HeaderParser {
 public:
  HeaderParser(const std::vector<unsigned char>& buf, std::string file)
      : buf_(buf), file_(std::move(file)) {}

  std::int64_t number() {
    skip_space_and_comments();
    if (pos_ >= buf_.size() || !std::isdigit(buf_[pos_])) fail("expected a decimal number");
    std::int64_t v = 0;
    while (pos_ < buf_.size() && std::isdigit(buf_[pos_])) {
      v = v * 10 + (buf_[pos_++] - '0');
      if (v > (1LL << 31)) fail("header value too large");
    }
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void end_of_header() {
    if (pos_ >= buf_.size() || !std::isspace(buf_[pos_])) fail("missing whitespace before raster");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError("read_pgm: " + file_ + ": " + why);
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      if (std::isspace(buf_[pos_])) {
        ++pos_;
      } else if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& buf_;
  std::string file_;
  std::size_t pos_ = 0;
};

Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path.string());
  const std::vector<unsigned char> buf(std::istreambuf_iterator<char>(in), {});
  HeaderParser parser(buf, path.string());
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6')) {
    parser.fail("unsupported magic (only binary P5 and P6 are read)");
  }
  parser.advance(2);
  Raster r;
  r.channels = buf[1] == '5' ? 1 : 3;
  r.width = parser.number();
  r.height = parser.number();
  const std::int64_t maxval = parser.number();
  if (r.width <= 0 || r.height <= 0) parser.fail("image dimensions must be positive");
  if (maxval != 255) parser.fail("maxval " + std::to_string(maxval) + " is not 255");
  parser.end_of_header();
  const auto need = static_cast<std::size_t>(r.width * r.height * r.channels);
  if (buf.size() - parser.pos() < need) {
    parser.fail("raster truncated (" + std::to_string(buf.size() - parser.pos()) + " of " +
                std::to_string(need) + " bytes)");
  }
  r.samples.assign(buf.begin() + static_cast<std::ptrdiff_t>(parser.pos()),
                   buf.begin() + static_cast<std::ptrdiff_t>(parser.pos() + need));
  return r;
}

void write_raster(const std::filesystem::path& path, int channels, std::int64_t width,
                  std::int64_t height, const std::vector<unsigned char>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_pgm: cannot open " + path.string() + " for writing");
  out << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(samples.data()),
            static_cast<std::streamsize>(samples.size()));
  if (!out) throw IoError("write_pgm: write failed for " + path.string());
}

}  // namespace

segnet::ImageTensor read_pgm(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  segnet::ImageTensor t = segnet::ImageTensor::zeros(r.height, r.width, r.channels);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    t.data.data()[i] = static_cast<double>(r.samples[i]) / 255.0;
  }
  return t;
}

void write_pgm(const segnet::ImageTensor& tensor, const std::filesystem::path& path) {
  if (tensor.channels != 1 && tensor.channels != 3) {
    throw FormatError("write_pgm: only 1 or 3 channels can be written, got " +
                      std::to_string(tensor.channels));
  }
  std::vector<unsigned char> samples(static_cast<std::size_t>(tensor.data.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double v = std::clamp(tensor.data.data()[i], 0.0, 1.0);
    samples[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  write_raster(path, static_cast<int>(tensor.channels), tensor.w, tensor.h, samples);
}

metrics::LabelMap read_labels(const std::filesystem::path& path) {
  const Raster r = read_raster(path);
  if (r.channels != 1) throw FormatError("read_labels: " + path.string() + " is not a P5 file");
  metrics::LabelMap m{r.height, r.width, {}};
  m.labels.assign(r.samples.begin(), r.samples.end());
  return m;
}

void write_labels(const metrics::LabelMap& labels, const std::filesystem::path& path) {
  if (static_cast<std::int64_t>(labels.labels.size()) != labels.h * labels.w) {
    throw ShapeError("write_labels: label count does not match h*w");
  }
  std::vector<unsigned char> samples(labels.labels.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = labels.labels[i];
    if (v < 0 || v > 255) {
      throw DataError("write_labels: label " + std::to_string(v) + " at index " +
                      std::to_string(i) + " does not fit a gray level");
    }
    samples[i] = static_cast<unsigned char>(v);
  }
  write_raster(path, 1, labels.w, labels.h, samples);
}

}  // namespace maru::io
