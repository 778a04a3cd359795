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

#include "maru/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <locale>

#include "maru/scratch.hpp"

namespace maru::bench {

void RunConfig::validate() const {
  if (sizes.empty()) throw ParameterError("bench: at least one size is required");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1) throw ParameterError("bench: sizes must be positive");
    if (i > 0 && sizes[i] <= sizes[i - 1]) {
      throw ParameterError("bench: sizes must be strictly increasing");
    }
  }
  if (d_k < 1 || d_v < 1) throw ParameterError("bench: d_k and d_v must be positive");
  if (repeats < 5) throw ParameterError("bench: at least 5 repeats are required");
}

BenchRecord measure(AttentionMethod method, std::int64_t n, std::int64_t d_k, std::int64_t d_v,
                    int repeats, std::uint64_t seed) {
  if (method == AttentionMethod::Channel) {
    throw ParameterError("bench: only softmax and lam are benchmarked");
  }
  Rng rng(seed);
  const Matrix q = seeded_fill(rng, n, d_k, -1.0, 1.0);
  const Matrix k = seeded_fill(rng, n, d_k, -1.0, 1.0);
  const Matrix v = seeded_fill(rng, n, d_v, -1.0, 1.0);

  auto run_once = [&] {
    return method == AttentionMethod::Softmax ? softmax_attention(q, k, v)
                                              : linear_attention_vectorized(q, k, v);
  };

  ScratchMeter::reset();
  volatile double sink = run_once()(0, 0);  // warmup, discarded
  const auto peak = ScratchMeter::snapshot().peak_total;

  std::vector<std::int64_t> samples;
  samples.reserve(static_cast<std::size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Matrix out = run_once();
    const auto t1 = std::chrono::steady_clock::now();
    sink = out(0, 0);
    samples.push_back(std::max<std::int64_t>(
        1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
  }
  (void)sink;
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());

  BenchRecord rec;
  rec.method = to_string(method);
  rec.n = n;
  rec.d_k = d_k;
  rec.d_v = d_v;
  rec.wall_ns = samples[samples.size() / 2];
  AttentionDims dims;
  dims.n = n;
  dims.c = d_v;
  dims.d_k = d_k;
  dims.d_v = d_v;
  rec.flops = flop_count(method, dims);
  rec.peak_aux_floats = peak;
  return rec;
}

std::vector<BenchRecord> run(const RunConfig& cfg) {
  cfg.validate();
  std::vector<BenchRecord> out;
  for (AttentionMethod m : cfg.methods) {
    for (std::int64_t n : cfg.sizes) {
      if (m == AttentionMethod::Softmax && n > cfg.softmax_max_n) continue;
      out.push_back(measure(m, n, cfg.d_k, cfg.d_v, cfg.repeats, cfg.seed));
    }
  }
  return out;
}

double loglog_slope(const std::vector<BenchRecord>& records, const std::string& method) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (const auto& r : records) {
    if (r.method != method) continue;
    const double x = std::log(static_cast<double>(r.n));
    const double y = std::log(static_cast<double>(r.wall_ns));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) throw ParameterError("loglog_slope: need at least two sizes for " + method);
  const double denom = count * sxx - sx * sx;
  if (denom == 0) throw ParameterError("loglog_slope: sizes for " + method + " are all equal");
  return (count * sxy - sx * sy) / denom;
}

void write_csv(std::ostream& os, const std::vector<BenchRecord>& records) {
  os.imbue(std::locale::classic());
  os << "method,n,d_k,d_v,wall_ns,flops,peak_aux_floats\n";
  std::vector<std::string> methods;
  for (const auto& r : records) {
    os << r.method << ',' << r.n << ',' << r.d_k << ',' << r.d_v << ',' << r.wall_ns << ','
       << r.flops << ',' << r.peak_aux_floats << '\n';
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  const auto old_flags = os.flags();
  const auto old_precision = os.precision();
  for (const auto& m : methods) {
    const auto rows = std::count_if(records.begin(), records.end(),
                                    [&](const BenchRecord& r) { return r.method == m; });
    if (rows < 2) continue;
    os << "slope," << m << ',' << std::fixed << std::setprecision(6) << loglog_slope(records, m)
       << '\n';
  }
  os.flags(old_flags);
  os.precision(old_precision);
}

}  // namespace maru::bench
