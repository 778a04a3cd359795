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

#include <filesystem>

#include "maru/metrics.hpp"
#include "maru/segnet.hpp"

namespace maru::io {

/// Binary PGM (P5, one channel) or PPM (P6, three channels) with maxval 255.
/// Samples are scaled to [0, 1].
segnet::ImageTensor read_pgm(const std::filesystem::path& path);

/// Writes P5 for one channel and P6 for three; values are clamped to [0, 1]
/// and rounded to the nearest of 256 levels.
void write_pgm(const segnet::ImageTensor& tensor, const std::filesystem::path& path);

/// Label maps are P5 files whose gray level is the class index.
metrics::LabelMap read_labels(const std::filesystem::path& path);
void write_labels(const metrics::LabelMap& labels, const std::filesystem::path& path);

}  // namespace maru::io
