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

#include "maru/metrics.hpp"

#include <cmath>
#include <string>

#include "maru/errors.hpp"

namespace maru::metrics {

ConfusionMatrix::ConfusionMatrix(int k) : k_(k) {
  if (k < 1) throw ParameterError("ConfusionMatrix: class count must be positive");
  counts_.assign(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
}

ConfusionMatrix ConfusionMatrix::from_rows(const std::vector<std::vector<std::uint64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (int t = 0; t < cm.k(); ++t) {
    if (rows[t].size() != rows.size()) throw ParameterError("ConfusionMatrix: rows must be square");
    for (int p = 0; p < cm.k(); ++p) cm.add(t, p, rows[t][p]);
  }
  return cm;
}

std::size_t ConfusionMatrix::index(int truth, int pred) const {
  if (truth < 0 || truth >= k_ || pred < 0 || pred >= k_) {
    throw DataError("ConfusionMatrix: class index out of range");
  }
  return static_cast<std::size_t>(truth) * static_cast<std::size_t>(k_) +
         static_cast<std::size_t>(pred);
}

void ConfusionMatrix::add(int truth, int pred, std::uint64_t count) {
  counts_[index(truth, pred)] += count;
  total_ += count;
}

std::uint64_t ConfusionMatrix::row_total(int truth) const {
  std::uint64_t s = 0;
  for (int p = 0; p < k_; ++p) s += at(truth, p);
  return s;
}

std::uint64_t ConfusionMatrix::col_total(int pred) const {
  std::uint64_t s = 0;
  for (int t = 0; t < k_; ++t) s += at(t, pred);
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ParameterError("ConfusionMatrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  total_ += other.total_;
  return *this;
}

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& truth, int k,
                          std::optional<std::int32_t> ignore_label) {
  if (pred.h != truth.h || pred.w != truth.w || pred.labels.size() != truth.labels.size()) {
    throw ShapeError("confusion: prediction " + std::to_string(pred.h) + "x" +
                     std::to_string(pred.w) + " and truth " + std::to_string(truth.h) + "x" +
                     std::to_string(truth.w) + " differ");
  }
  if (static_cast<std::int64_t>(pred.labels.size()) != pred.h * pred.w) {
    throw ShapeError("confusion: label count does not match h*w");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const std::int32_t t = truth.labels[i];
    const std::int32_t p = pred.labels[i];
    if (ignore_label && t == *ignore_label) continue;
    if (t < 0 || t >= k) {
      throw DataError("confusion: truth label " + std::to_string(t) + " at index " +
                      std::to_string(i) + " is outside [0, " + std::to_string(k) + ")");
    }
    if (p < 0 || p >= k) {
      throw DataError("confusion: predicted label " + std::to_string(p) + " at index " +
                      std::to_string(i) + " is outside [0, " + std::to_string(k) + ")");
    }
    cm.add(t, p);
  }
  return cm;
}

namespace {

void require_total(const ConfusionMatrix& cm, const char* what) {
  if (cm.total() == 0) throw DataError(std::string(what) + ": confusion matrix is empty");
}

struct Agreement {
  double p_o;
  double p_e;
};

Agreement agreement(const ConfusionMatrix& cm) {
  const double n = static_cast<double>(cm.total());
  double diag = 0.0;
  double chance = 0.0;
  for (int c = 0; c < cm.k(); ++c) {
    diag += static_cast<double>(cm.at(c, c));
    chance += static_cast<double>(cm.row_total(c)) * static_cast<double>(cm.col_total(c));
  }
  return {diag / n, chance / (n * n)};
}

}  // namespace

double overall_accuracy(const ConfusionMatrix& cm) {
  require_total(cm, "overall_accuracy");
  return agreement(cm).p_o;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
  require_total(cm, "per_class_f1");
  std::vector<double> out(cm.k(), 0.0);
  for (int c = 0; c < cm.k(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double predicted = static_cast<double>(cm.col_total(c));
    const double actual = static_cast<double>(cm.row_total(c));
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    out[c] = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return out;
}

double mean_f1(const ConfusionMatrix& cm) {
  const auto f1 = per_class_f1(cm);
  double s = 0.0;
  for (double v : f1) s += v;
  return s / static_cast<double>(f1.size());
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  require_total(cm, "per_class_iou");
  std::vector<double> out(cm.k(), 0.0);
  for (int c = 0; c < cm.k(); ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double fp = static_cast<double>(cm.col_total(c)) - tp;
    const double fn = static_cast<double>(cm.row_total(c)) - tp;
    const double den = tp + fp + fn;
    out[c] = den > 0 ? tp / den : 0.0;
  }
  return out;
}

double miou(const ConfusionMatrix& cm) {
  const auto iou = per_class_iou(cm);
  double s = 0.0;
  for (double v : iou) s += v;
  return s / static_cast<double>(iou.size());
}

double kappa(const ConfusionMatrix& cm) {
  require_total(cm, "kappa");
  const auto [p_o, p_e] = agreement(cm);
  if (p_e >= 1.0) throw DataError("kappa: degenerate marginals (chance agreement is 1)");
  return (p_o - p_e) / (1.0 - p_e);
}

double kappa_variance(const ConfusionMatrix& cm, KappaVariance method) {
  require_total(cm, "kappa_variance");
  const double n = static_cast<double>(cm.total());
  const auto [t1, t2] = agreement(cm);
  if (t2 >= 1.0) throw DataError("kappa_variance: degenerate marginals (chance agreement is 1)");
  if (method == KappaVariance::Simple) {
    return t1 * (1 - t1) / (n * (1 - t2) * (1 - t2));
  }
  std::vector<double> row(cm.k()), col(cm.k());
  for (int c = 0; c < cm.k(); ++c) {
    row[c] = static_cast<double>(cm.row_total(c)) / n;
    col[c] = static_cast<double>(cm.col_total(c)) / n;
  }
  double t3 = 0.0;
  double t4 = 0.0;
  for (int i = 0; i < cm.k(); ++i) {
    t3 += static_cast<double>(cm.at(i, i)) / n * (row[i] + col[i]);
    for (int j = 0; j < cm.k(); ++j) {
      const double m = row[j] + col[i];
      t4 += static_cast<double>(cm.at(i, j)) / n * m * m;
    }
  }
  const double q = 1 - t2;
  const double a = t1 * (1 - t1) / (q * q);
  const double b = 2 * (1 - t1) * (2 * t1 * t2 - t3) / (q * q * q);
  const double c = (1 - t1) * (1 - t1) * (t4 - 4 * t2 * t2) / (q * q * q * q);
  return (a + b + c) / n;
}

KappaReport kappa_report(const ConfusionMatrix& cm, KappaVariance method) {
  return {kappa(cm), kappa_variance(cm, method), cm.total()};
}

double z_test(double k1, double v1, double k2, double v2) {
  const double v = v1 + v2;
  if (!(v > 0)) throw ParameterError("z_test: summed variance must be positive");
  return (k1 - k2) / std::sqrt(v);
}

double z_test(const KappaReport& a, const KappaReport& b) {
  return z_test(a.kappa, a.variance, b.kappa, b.variance);
}

}  // namespace maru::metrics
