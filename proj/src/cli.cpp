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

#include "maru/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "maru/grad.hpp"
#include "maru/metrics.hpp"
#include "maru/pgm.hpp"
#include "maru/segnet.hpp"

namespace maru::cli {

int cmd_verify(const verify::VerifyConfig& cfg, std::ostream& out) {
  const auto results = verify::run_all(cfg);
  int failed_suites = 0;
  for (const auto& r : results) {
    out << std::left << std::setw(20) << r.name << " passed " << r.passed << " failed "
        << r.failed << (r.ok() ? "  PASS" : "  FAIL") << '\n';
    if (!r.ok()) {
      ++failed_suites;
      out << "  first failure: " << r.first_failure << '\n';
      for (auto s : r.failing_seeds) {
        out << "  replay: maru verify --replay " << s;
        if (cfg.eps != 1e-12) out << " --eps " << cfg.eps;
        out << '\n';
      }
    }
  }
  out << "verify: " << results.size() << " suites, " << failed_suites << " failed\n";
  return failed_suites == 0 ? kSuccess : kPropertyFailure;
}

int cmd_bench(const bench::RunConfig& cfg, const std::filesystem::path& csv_path,
              std::ostream& out) {
  cfg.validate();
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("bench: cannot open " + csv_path.string() + " for writing");
  const auto records = bench::run(cfg);
  bench::write_csv(csv, records);
  if (!csv) throw IoError("bench: write failed for " + csv_path.string());
  for (const auto& r : records) {
    out << std::left << std::setw(8) << r.method << " n=" << std::setw(8) << r.n
        << " wall_ns=" << std::setw(14) << r.wall_ns << " peak_aux_floats=" << r.peak_aux_floats
        << '\n';
  }
  for (const char* m : {"softmax", "lam"}) {
    const auto rows = std::count_if(records.begin(), records.end(),
                                    [&](const bench::BenchRecord& r) { return r.method == m; });
    if (rows >= 2) out << "slope " << m << ' ' << bench::loglog_slope(records, m) << '\n';
  }
  out << "wrote " << csv_path.string() << '\n';
  return kSuccess;
}

int cmd_gradcheck(const GradcheckConfig& cfg, std::ostream& out) {
  AttentionDims dims;
  dims.n = cfg.n;
  dims.c = cfg.c;
  dims.d_k = cfg.d_k;
  dims.d_v = cfg.d_v;
  bool ok = true;
  for (const auto& op : grad::gradcheck_ops()) {
    const auto report = grad::gradcheck(op, dims, cfg.seed, cfg.threshold);
    out << std::left << std::setw(18) << op << " max_rel_error " << std::scientific
        << std::setprecision(3) << report.max_rel_error << (report.pass ? "  PASS" : "  FAIL")
        << '\n';
    for (const auto& [name, err] : report.per_input) {
      out << "  " << std::setw(16) << name << err << '\n';
    }
    ok = ok && report.pass;
  }
  out << std::defaultfloat;
  const auto losses = grad::lam_descent(cfg.seed);
  bool decreasing = true;
  for (std::size_t i = 1; i < losses.size(); ++i) decreasing = decreasing && losses[i] < losses[i - 1];
  out << "lam-descent " << (losses.size() - 1) << " steps, loss " << losses.front() << " -> "
      << losses.back() << (decreasing ? "  PASS" : "  FAIL") << '\n';
  return ok && decreasing ? kSuccess : kPropertyFailure;
}

int cmd_forward(const std::filesystem::path& weights_path, const std::filesystem::path& image,
                const std::filesystem::path& labels_out, std::ostream& out) {
  const auto weights = segnet::load_weights(weights_path);
  const auto img = io::read_pgm(image);
  const auto logits = segnet::forward(weights, img);
  metrics::LabelMap labels{logits.h, logits.w, segnet::argmax_labels(logits)};
  io::write_labels(labels, labels_out);
  out << "forward " << img.h << "x" << img.w << "x" << img.channels << " -> " << logits.h << "x"
      << logits.w << "x" << logits.channels << ", labels written to " << labels_out.string()
      << '\n';
  return kSuccess;
}

int cmd_metrics(const std::filesystem::path& pred, const std::filesystem::path& truth, int k,
                std::optional<std::int32_t> ignore_label,
                const std::optional<std::filesystem::path>& csv_path, std::ostream& out) {
  const auto cm = metrics::confusion(io::read_labels(pred), io::read_labels(truth), k,
                                     ignore_label);
  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("OA", metrics::overall_accuracy(cm));
  const auto f1 = metrics::per_class_f1(cm);
  for (std::size_t c = 0; c < f1.size(); ++c) rows.emplace_back("F1[" + std::to_string(c) + "]", f1[c]);
  rows.emplace_back("mean_F1", metrics::mean_f1(cm));
  rows.emplace_back("mIoU", metrics::miou(cm));
  rows.emplace_back("kappa", metrics::kappa(cm));
  rows.emplace_back("kappa_variance", metrics::kappa_variance(cm));

  out << "pixels " << cm.total() << '\n';
  for (const auto& [name, value] : rows) {
    out << std::left << std::setw(16) << name << std::setprecision(6) << std::fixed << value
        << '\n';
  }
  out << std::defaultfloat;
  if (csv_path) {
    std::ofstream csv(*csv_path, std::ios::trunc);
    if (!csv) throw IoError("metrics: cannot open " + csv_path->string() + " for writing");
    csv.imbue(std::locale::classic());
    csv << "metric,value\n" << std::setprecision(17);
    for (const auto& [name, value] : rows) csv << name << ',' << value << '\n';
  }
  return kSuccess;
}

namespace {

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ParameterError(std::string(what) + ": '" + item + "' is not an integer");
    }
  }
  return out;
}

std::array<int, 4> parse_four(const std::string& text, const char* what) {
  const auto v = parse_list<int>(text, what);
  if (v.size() != 4) throw ParameterError(std::string(what) + " needs exactly 4 values");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Linear attention verification, benchmarking and toy segmentation tools", "maru"};
  app.require_subcommand(1);

  verify::VerifyConfig vcfg;
  std::optional<std::uint64_t> replay;
  auto* verify_cmd = app.add_subcommand("verify", "run the attention property suites");
  verify_cmd->add_option("--seed", vcfg.seed, "run seed");
  verify_cmd->add_option("--instances", vcfg.instances, "instances per suite")->check(CLI::PositiveNumber);
  verify_cmd->add_option("--eps", vcfg.eps, "linear attention denominator guard (0 disables)")
      ->check(CLI::NonNegativeNumber);
  verify_cmd->add_option("--replay", replay, "run a single instance seed");

  bench::RunConfig bcfg;
  std::string sizes = "1024,2048,4096,8192,16384,32768,65536,131072,262144";
  std::string bench_out = "bench.csv";
  std::string bench_methods = "softmax,lam";
  auto* bench_cmd = app.add_subcommand("bench", "time softmax and linear attention");
  bench_cmd->add_option("--seed", bcfg.seed, "input seed");
  bench_cmd->add_option("--sizes", sizes, "comma-separated, strictly increasing N values");
  bench_cmd->add_option("--dk", bcfg.d_k, "query/key width")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--dv", bcfg.d_v, "value width")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", bcfg.repeats, "timed repeats (>= 5)");
  bench_cmd->add_option("--softmax-max-n", bcfg.softmax_max_n, "largest N timed for softmax");
  bench_cmd->add_option("--methods", bench_methods, "softmax,lam or a subset");
  bench_cmd->add_option("--out", bench_out, "CSV output path");

  GradcheckConfig gcfg;
  auto* grad_cmd = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
  grad_cmd->add_option("--seed", gcfg.seed, "instance seed");
  grad_cmd->add_option("--n", gcfg.n, "sequence length")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--c", gcfg.c, "channels (channel attention, attention block)")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--dk", gcfg.d_k, "query/key width")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--dv", gcfg.d_v, "value width")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--threshold", gcfg.threshold, "max relative error");

  std::string init_out;
  std::string preset = "toy";
  std::string widths = "8,16,32,64";
  std::optional<std::string> depths;
  segnet::NetworkSpec spec;
  std::uint64_t init_seed = 1;
  auto* init_cmd = app.add_subcommand("init-weights", "write seeded toy network weights");
  init_cmd->add_option("--out", init_out, "weight file")->required();
  init_cmd->add_option("--seed", init_seed, "weight seed");
  init_cmd->add_option("--preset", preset, "depth preset: toy [1,1,1,1], resnet18, resnet34")
      ->check(CLI::IsMember({"toy", "resnet18", "resnet34"}));
  init_cmd->add_option("--widths", widths, "4 comma-separated stage widths");
  init_cmd->add_option("--depths", depths, "4 comma-separated stage depths (overrides preset)");
  init_cmd->add_option("--in-channels", spec.in_channels, "input channels");
  init_cmd->add_option("--classes", spec.num_classes, "number of classes");
  init_cmd->add_option("--dk-ratio", spec.attention_dk_ratio, "d_k = width / ratio");

  std::string fw_weights, fw_image, fw_out;
  auto* fw_cmd = app.add_subcommand("forward", "segment a PGM/PPM image with saved weights");
  fw_cmd->add_option("--weights", fw_weights, "weight file")->required();
  fw_cmd->add_option("--image", fw_image, "P5/P6 input")->required();
  fw_cmd->add_option("--out", fw_out, "P5 label map output")->required();

  std::string m_pred, m_truth;
  std::optional<std::string> m_csv;
  int m_classes = 0;
  std::optional<std::int32_t> ignore_label;
  auto* metrics_cmd = app.add_subcommand("metrics", "segmentation metrics from P5 label maps");
  metrics_cmd->add_option("--pred", m_pred, "predicted label map")->required();
  metrics_cmd->add_option("--truth", m_truth, "reference label map")->required();
  metrics_cmd->add_option("--classes,-k", m_classes, "number of classes")->required()
      ->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--ignore-label", ignore_label, "truth label excluded from counts");
  metrics_cmd->add_option("--csv", m_csv, "optional CSV output");

  std::vector<double> z_args;
  double z_threshold = metrics::kZCritical95;
  auto* z_cmd = app.add_subcommand("ztest", "pairwise kappa z-test: k1 v1 k2 v2");
  z_cmd->add_option("values", z_args, "k1 v1 k2 v2")->required()->expected(4);
  z_cmd->add_option("--threshold", z_threshold, "significance threshold on |z|");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    if (*verify_cmd) {
      vcfg.replay = replay;
      return cmd_verify(vcfg, out);
    }
    if (*bench_cmd) {
      bcfg.sizes = parse_list<std::int64_t>(sizes, "--sizes");
      bcfg.methods.clear();
      for (const auto& m : [&] {
             std::vector<std::string> v;
             std::stringstream ss(bench_methods);
             for (std::string s; std::getline(ss, s, ',');) v.push_back(s);
             return v;
           }()) {
        if (m == "softmax") {
          bcfg.methods.push_back(AttentionMethod::Softmax);
        } else if (m == "lam") {
          bcfg.methods.push_back(AttentionMethod::LAM);
        } else {
          throw ParameterError("--methods: unknown method '" + m + "'");
        }
      }
      return cmd_bench(bcfg, bench_out, out);
    }
    if (*grad_cmd) return cmd_gradcheck(gcfg, out);
    if (*init_cmd) {
      const auto w = parse_four(widths, "--widths");
      segnet::NetworkSpec s = spec;
      s.stage_widths = w;
      if (preset == "resnet18") s.stage_depths = segnet::NetworkSpec::resnet18_like(w, 1, 2).stage_depths;
      if (preset == "resnet34") s.stage_depths = segnet::NetworkSpec::resnet34_like(w, 1, 2).stage_depths;
      if (depths) s.stage_depths = parse_four(*depths, "--depths");
      const auto weights = segnet::build_network(s, init_seed);
      segnet::save_weights(weights, init_out);
      out << "wrote " << init_out << " (" << segnet::param_count(weights) << " parameters, "
          << "checksum " << std::hex << weights.checksum() << std::dec << ")\n";
      return kSuccess;
    }
    if (*fw_cmd) return cmd_forward(fw_weights, fw_image, fw_out, out);
    if (*metrics_cmd) {
      std::optional<std::filesystem::path> csv;
      if (m_csv) csv = *m_csv;
      return cmd_metrics(m_pred, m_truth, m_classes, ignore_label, csv, out);
    }
    if (*z_cmd) {
      const double z = metrics::z_test(z_args[0], z_args[1], z_args[2], z_args[3]);
      out << std::setprecision(6) << std::fixed << "z " << z << "\n|z| " << std::abs(z)
          << "\nsignificant " << (metrics::significant(z, z_threshold) ? "yes" : "no") << '\n';
      out << std::defaultfloat;
      return kSuccess;
    }
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoOrFormat;
  }
  return kUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("maru");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace maru::cli
