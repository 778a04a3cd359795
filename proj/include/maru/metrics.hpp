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
#include <vector>

namespace maru::metrics {

struct LabelMap {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> labels;  // row-major, h * w
};

/// K x K tally; entry (t, p) counts pixels of true class t predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int k);
  static ConfusionMatrix from_rows(const std::vector<std::vector<std::uint64_t>>& rows);

  int k() const { return k_; }
  std::uint64_t at(int truth, int pred) const { return counts_[index(truth, pred)]; }
  void add(int truth, int pred, std::uint64_t count = 1);
  std::uint64_t total() const { return total_; }
  std::uint64_t row_total(int truth) const;
  std::uint64_t col_total(int pred) const;

  // Tiles may be tallied independently and merged.
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix& other) const = default;

 private:
  std::size_t index(int truth, int pred) const;

  int k_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Pixels whose truth label equals `ignore_label` are skipped.
ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth, int k,
                          std::optional<std::int32_t> ignore_label = std::nullopt);

double overall_accuracy(const ConfusionMatrix& cm);
std::vector<double> per_class_f1(const ConfusionMatrix& cm);
double mean_f1(const ConfusionMatrix& cm);
std::vector<double> per_class_iou(const ConfusionMatrix& cm);
double miou(const ConfusionMatrix& cm);

double kappa(const ConfusionMatrix& cm);

enum class KappaVariance {
  // Large-sample delta-method variance (Fleiss, Cohen and Everitt).
  DeltaMethod,
  // p_o (1 - p_o) / (n (1 - p_e)^2)
  Simple,
};

double kappa_variance(const ConfusionMatrix& cm, KappaVariance method = KappaVariance::DeltaMethod);

struct KappaReport {
  double kappa = 0.0;
  double variance = 0.0;
  std::uint64_t n = 0;
};

KappaReport kappa_report(const ConfusionMatrix& cm,
                         KappaVariance method = KappaVariance::DeltaMethod);

/// z = (k1 - k2) / sqrt(v1 + v2). Signed; variances are used as given.
double z_test(double k1, double v1, double k2, double v2);
double z_test(const KappaReport& a, const KappaReport& b);

inline constexpr double kZCritical95 = 1.96;

inline bool significant(double z, double threshold = kZCritical95) {
  return z > threshold || z < -threshold;
}

}  // namespace maru::metrics
