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

// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "maru/bench.hpp"
#include "maru/grad.hpp"
#include "maru/metrics.hpp"
#include "maru/scratch.hpp"
#include "maru/segnet.hpp"
#include "maru/verify.hpp"

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, value);
  return buf;
}

Outcome kappa_table() {
  const auto start = Clock::now();
  struct Row {
    double kappa;
    double variance;  // printed column, read at 1e-6 scale
  };
  const std::vector<Row> rows = {{0.7682, 3.1443}, {0.7993, 2.7954}, {0.8586, 2.0706},
                                 {0.8672, 1.9586}, {0.8745, 1.8598}, {0.8801, 1.7861},
                                 {0.8848, 1.7224}};
  // Upper triangle, row i against columns i+1..6.
  const std::vector<std::vector<double>> printed = {
      {12.7608, 39.5863, 43.8255, 47.5193, 50.3952, 52.8544},
      {26.8824, 31.1415, 34.8537, 37.7492, 40.2256},
      {4.2844, 8.0201, 10.9479, 13.4527},
      {3.7358, 6.6662, 9.1734},
      {2.9328, 5.4420},
      {2.5092}};
  double worst = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < printed.size(); ++i) {
    for (std::size_t j = 0; j < printed[i].size(); ++j) {
      const Row& lo = rows[i];
      const Row& hi = rows[i + 1 + j];
      const double z = maru::metrics::z_test(hi.kappa, hi.variance * 1e-6, lo.kappa,
                                             lo.variance * 1e-6);
      worst = std::max(worst, std::abs(z - printed[i][j]));
      ++pairs;
    }
  }
  const double elapsed = seconds_since(start);
  return {pairs == 21 && worst <= 1e-3 && elapsed < 1.0,
          std::to_string(pairs) + " pairs, max |dz| " + fmt("%.2e", worst) + ", " +
              fmt("%.3f", elapsed) + " s"};
}

Outcome complexity() {
  const auto start = Clock::now();
  maru::bench::RunConfig cfg;
  cfg.sizes = {1024, 2048, 4096, 8192, 16384, 32768, 65536, 131072, 262144};
  cfg.d_k = 64;
  cfg.d_v = 64;
  cfg.softmax_max_n = 16384;
  const auto records = maru::bench::run(cfg);
  const double soft = maru::bench::loglog_slope(records, "softmax");
  const double lam = maru::bench::loglog_slope(records, "lam");
  std::uint64_t lam_peak_min = ~std::uint64_t{0};
  std::uint64_t lam_peak_max = 0;
  std::int64_t soft_max_n = 0;
  std::int64_t lam_max_n = 0;
  for (const auto& r : records) {
    if (r.method == "lam") {
      lam_peak_min = std::min(lam_peak_min, r.peak_aux_floats);
      lam_peak_max = std::max(lam_peak_max, r.peak_aux_floats);
      lam_max_n = std::max(lam_max_n, r.n);
    } else {
      soft_max_n = std::max(soft_max_n, r.n);
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = soft >= 1.7 && soft <= 2.3 && lam >= 0.7 && lam <= 1.3 &&
                    lam_peak_min == lam_peak_max && soft_max_n == 16384 && lam_max_n == 262144 &&
                    elapsed < 600.0;
  return {pass, "softmax slope " + fmt("%.3f", soft) + ", lam slope " + fmt("%.3f", lam) +
                    ", lam peak aux " + std::to_string(lam_peak_min) + ".." +
                    std::to_string(lam_peak_max) + " floats, " + fmt("%.1f", elapsed) + " s"};
}

Outcome suites(const std::vector<std::function<maru::verify::SuiteResult(
                   const maru::verify::VerifyConfig&)>>& fns) {
  maru::verify::VerifyConfig cfg;
  cfg.instances = 100;
  cfg.max_n = 64;
  cfg.max_d = 16;
  Outcome o;
  for (const auto& fn : fns) {
    const auto r = fn(cfg);
    const bool ok = r.ok() && r.passed >= 100;
    o.pass = o.pass && ok;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += r.name + " " + std::to_string(r.passed) + "/" + std::to_string(r.passed + r.failed);
    if (!r.ok()) o.detail += " (" + r.first_failure + ")";
  }
  return o;
}

Outcome gradients() {
  maru::AttentionDims dims;
  dims.n = 8;
  dims.c = 4;
  dims.d_k = 4;
  dims.d_v = 4;
  Outcome o;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& op : maru::grad::gradcheck_ops()) {
      const auto r = maru::grad::gradcheck(op, dims, seed, 1e-5);
      o.pass = o.pass && r.pass;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  const auto losses = maru::grad::lam_descent(1, 50);
  bool decreasing = losses.size() == 51;
  for (std::size_t i = 1; i < losses.size(); ++i) decreasing = decreasing && losses[i] < losses[i - 1];
  o.pass = o.pass && decreasing;
  o.detail = std::to_string(maru::grad::gradcheck_ops().size()) + " ops x 5 seeds, max rel err " +
             fmt("%.2e", worst) + "; descent " + fmt("%.4g", losses.front()) + " -> " +
             fmt("%.4g", losses.back()) + (decreasing ? " strictly decreasing" : " NOT monotone");
  return o;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome toy_network() {
  using namespace maru::segnet;
  const NetworkSpec spec;
  const NetworkWeights net = build_network(spec, 1);
  maru::Rng rng(2);
  const ImageTensor img{32, 32, 3, maru::seeded_fill(rng, 32 * 32, 3, 0.0, 1.0)};

  maru::ScratchMeter::reset();
  const ImageTensor logits = forward(net, img, SkipMode::Attention);
  const auto snap = maru::ScratchMeter::snapshot();
  const ImageTensor plain = forward(net, img, SkipMode::Plain);
  const double gap = (logits.data - plain.data).cwiseAbs().maxCoeff();
  const bool shape = logits.h == 32 && logits.w == 32 && logits.channels == spec.num_classes;
  const std::size_t hw2 = std::size_t{32 * 32} * (32 * 32);

  const auto dir = std::filesystem::temp_directory_path();
  const auto a = dir / "maru_acceptance_a.bin";
  const auto b = dir / "maru_acceptance_b.bin";
  save_weights(net, a);
  const NetworkWeights back = load_weights(a);
  save_weights(back, b);
  bool bitwise = slurp(a) == slurp(b) && back.checksum() == net.checksum();
  for (std::size_t i = 0; bitwise && i < net.tensors().size(); ++i) {
    bitwise = net.tensors()[i].data == back.tensors()[i].data;
  }
  std::filesystem::remove(a);
  std::filesystem::remove(b);

  return {shape && gap <= 1e-12 && snap.largest < hw2 && bitwise,
          "logits " + std::to_string(logits.h) + "x" + std::to_string(logits.w) + "x" +
              std::to_string(logits.channels) + ", zero-gamma gap " + fmt("%.1e", gap) +
              ", largest buffer " + std::to_string(snap.largest) + " < " + std::to_string(hw2) +
              ", round trip " + (bitwise ? "bitwise" : "differs")};
}

Outcome metric_examples() {
  using maru::metrics::ConfusionMatrix;
  const ConfusionMatrix iou_cm = ConfusionMatrix::from_rows({{3, 1}, {2, 4}});
  const ConfusionMatrix f1_cm = ConfusionMatrix::from_rows({{4, 1}, {2, 3}});
  const ConfusionMatrix indep = ConfusionMatrix::from_rows({{25, 25}, {25, 25}});
  const double miou = maru::metrics::miou(iou_cm);
  const double f1 = maru::metrics::per_class_f1(f1_cm)[0];
  const double kappa = maru::metrics::kappa(indep);
  bool pass = std::abs(miou - (0.5 + 4.0 / 7.0) / 2.0) <= 1e-9 &&
              std::abs(miou - 0.535714) <= 1e-6 && std::abs(f1 - 8.0 / 11.0) <= 1e-9 &&
              std::abs(f1 - 0.727273) <= 1e-6 && std::abs(kappa) <= 1e-9;

  maru::Rng rng(3);
  double drift = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 2 + trial % 6;
    ConfusionMatrix cm(k);
    for (int t = 0; t < k; ++t) {
      for (int p = 0; p < k; ++p) cm.add(t, p, 1 + rng.below(50) + (t == p ? 100 : 0));
    }
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = k - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    ConfusionMatrix moved(k);
    for (int t = 0; t < k; ++t) {
      for (int p = 0; p < k; ++p) moved.add(perm[t], perm[p], cm.at(t, p));
    }
    drift = std::max({drift,
                      std::abs(maru::metrics::overall_accuracy(cm) -
                               maru::metrics::overall_accuracy(moved)),
                      std::abs(maru::metrics::kappa(cm) - maru::metrics::kappa(moved)),
                      std::abs(maru::metrics::mean_f1(cm) - maru::metrics::mean_f1(moved)),
                      std::abs(maru::metrics::miou(cm) - maru::metrics::miou(moved))});
  }
  pass = pass && drift <= 1e-12;
  return {pass, "mIoU " + fmt("%.6f", miou) + ", F1 " + fmt("%.6f", f1) + ", kappa " +
                    fmt("%.1e", kappa) + ", relabel drift " + fmt("%.1e", drift)};
}

}  // namespace

int main() {
  using maru::verify::SuiteResult;
  using maru::verify::VerifyConfig;
  struct Criterion {
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {"kappa z-test table", kappa_table},
      {"oracle equivalence", [] { return suites({maru::verify::oracle_equivalence}); }},
      {"attention invariants",
       [] {
         return suites({maru::verify::convex_combination, maru::verify::permutation,
                        maru::verify::scale_invariance, maru::verify::rank_agreement});
       }},
      {"gradient checks", gradients},
      {"toy segmentation network", toy_network},
      {"segmentation metrics", metric_examples},
      {"complexity scaling", complexity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s  %-26s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
