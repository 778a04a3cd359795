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

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "maru/bench.hpp"
#include "maru/verify.hpp"

namespace maru::cli {

enum ExitCode : int {
  kSuccess = 0,
  kPropertyFailure = 1,
  kUsage = 2,
  kIoOrFormat = 3,
};

int cmd_verify(const verify::VerifyConfig& cfg, std::ostream& out);

int cmd_bench(const bench::RunConfig& cfg, const std::filesystem::path& csv_path,
              std::ostream& out);

struct GradcheckConfig {
  std::uint64_t seed = 1;
  std::int64_t n = 8;
  std::int64_t c = 4;
  std::int64_t d_k = 4;
  std::int64_t d_v = 4;
  double threshold = 1e-5;
};

int cmd_gradcheck(const GradcheckConfig& cfg, std::ostream& out);

int cmd_forward(const std::filesystem::path& weights, const std::filesystem::path& image,
                const std::filesystem::path& labels_out, std::ostream& out);

int cmd_metrics(const std::filesystem::path& pred, const std::filesystem::path& truth, int k,
                std::optional<std::int32_t> ignore_label,
                const std::optional<std::filesystem::path>& csv_path, std::ostream& out);

/// Full command-line entry point; never throws. The vector form omits argv[0].
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace maru::cli
