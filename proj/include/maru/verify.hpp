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
#include <optional>
#include <string>
#include <vector>

namespace maru::verify {

struct VerifyConfig {
  std::uint64_t seed = 1;
  int instances = 100;
  std::int64_t max_n = 64;
  std::int64_t max_d = 16;
  // Linear-attention denominator guard; 0 disables it.
  double eps = 1e-12;
  // Runs only this instance seed in every suite.
  std::optional<std::uint64_t> replay;
};

struct SuiteResult {
  std::string name;
  int passed = 0;
  int failed = 0;
  std::vector<std::uint64_t> failing_seeds;
  std::string first_failure;

  bool ok() const { return failed == 0 && passed > 0; }
};

// Seed of instance `index` under run seed `seed`.
std::uint64_t instance_seed(std::uint64_t seed, int index);

SuiteResult oracle_equivalence(const VerifyConfig& cfg);
SuiteResult convex_combination(const VerifyConfig& cfg);
SuiteResult permutation(const VerifyConfig& cfg);
SuiteResult rank_agreement(const VerifyConfig& cfg);
SuiteResult scale_invariance(const VerifyConfig& cfg);

std::vector<SuiteResult> run_all(const VerifyConfig& cfg);

}  // namespace maru::verify
