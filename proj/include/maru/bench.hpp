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
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "maru/attention.hpp"

namespace maru::bench {

struct BenchRecord {
  std::string method;  // "softmax" or "lam"
  std::int64_t n = 0;
  std::int64_t d_k = 0;
  std::int64_t d_v = 0;
  std::int64_t wall_ns = 0;  // median over repeats, warmup discarded
  std::uint64_t flops = 0;
  std::uint64_t peak_aux_floats = 0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::vector<std::int64_t> sizes;
  std::int64_t d_k = 64;
  std::int64_t d_v = 64;
  int repeats = 5;
  // Softmax rows are only measured up to this sequence length.
  std::int64_t softmax_max_n = 16384;
  std::vector<AttentionMethod> methods{AttentionMethod::Softmax, AttentionMethod::LAM};

  void validate() const;
};

// Times one kernel on a seeded n x d instance.
BenchRecord measure(AttentionMethod method, std::int64_t n, std::int64_t d_k, std::int64_t d_v,
                    int repeats, std::uint64_t seed);

std::vector<BenchRecord> run(const RunConfig& cfg);

/// Least-squares slope of log(wall_ns) against log(n) over `method` rows.
double loglog_slope(const std::vector<BenchRecord>& records, const std::string& method);

/// Fixed schema: header "method,n,d_k,d_v,wall_ns,flops,peak_aux_floats",
/// one row per record, then "slope,<method>,<value>" per measured method.
void write_csv(std::ostream& os, const std::vector<BenchRecord>& records);

}  // namespace maru::bench
