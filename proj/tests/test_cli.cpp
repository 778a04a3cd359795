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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "maru/cli.hpp"
#include "maru/pgm.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = maru::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "maru_test_cli";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("verify reports five suites and is deterministic") {
  const Result a = run({"verify", "--seed", "7", "--instances", "20"});
  CHECK(a.code == 0);
  CHECK(a.out.find("verify: 5 suites, 0 failed") != std::string::npos);
  for (const char* suite : {"oracle-equivalence", "convex-combination", "permutation",
                            "rank-agreement", "scale-invariance"}) {
    CHECK(a.out.find(suite) != std::string::npos);
  }
  CHECK(run({"verify", "--seed", "7", "--instances", "20"}).out == a.out);
}

TEST_CASE("verify without the denominator guard fails with a replayable seed") {
  const Result r = run({"verify", "--instances", "10", "--eps", "0"});
  CHECK(r.code == 1);
  std::smatch m;
  REQUIRE(std::regex_search(r.out, m, std::regex("--replay ([0-9]+)")));
  const Result replay = run({"verify", "--replay", m[1].str(), "--eps", "0"});
  CHECK(replay.code == 1);
  CHECK(replay.out.find("FAIL") != std::string::npos);
  CHECK(run({"verify", "--replay", m[1].str()}).code == 0);
}

TEST_CASE("bench writes the fixed CSV schema") {
  const fs::path csv = scratch("bench.csv");
  const Result r = run({"bench", "--sizes", "64,128,256", "--dk", "8", "--dv", "8", "--repeats",
                        "5", "--out", csv.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(csv));
  REQUIRE(rows.size() == 1 + 6 + 2);
  CHECK(rows[0] == "method,n,d_k,d_v,wall_ns,flops,peak_aux_floats");
  const std::regex record("(softmax|lam),(64|128|256),8,8,[1-9][0-9]*,[0-9]+,[0-9]+");
  for (std::size_t i = 1; i <= 6; ++i) CHECK(std::regex_match(rows[i], record));
  const std::regex slope("slope,(softmax|lam),-?[0-9]+\\.[0-9]{6}");
  CHECK(std::regex_match(rows[7], slope));
  CHECK(std::regex_match(rows[8], slope));

  CHECK(run({"bench", "--sizes", "128,64"}).code == 2);
  CHECK(run({"bench", "--sizes", "64,128", "--repeats", "2"}).code == 2);
  CHECK(run({"bench", "--sizes", "64,128", "--out", "/nonexistent/dir/b.csv"}).code == 3);
}

TEST_CASE("gradcheck passes by default") {
  const Result r = run({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(run({"gradcheck", "--threshold", "1e-30"}).code == 1);
}

TEST_CASE("forward is byte-identical across runs") {
  const fs::path weights = scratch("toy.bin");
  const fs::path image = scratch("img.pgm");
  REQUIRE(run({"init-weights", "--out", weights.string(), "--seed", "3", "--in-channels", "1"}).code == 0);

  maru::Rng rng(11);
  maru::segnet::ImageTensor img{32, 32, 1, maru::Matrix(1024, 1)};
  for (Eigen::Index i = 0; i < img.data.size(); ++i) img.data(i) = rng.below(256) / 255.0;
  maru::io::write_pgm(img, image);

  const fs::path a = scratch("labels_a.pgm");
  const fs::path b = scratch("labels_b.pgm");
  CHECK(run({"forward", "--weights", weights.string(), "--image", image.string(), "--out", a.string()}).code == 0);
  CHECK(run({"forward", "--weights", weights.string(), "--image", image.string(), "--out", b.string()}).code == 0);
  CHECK(slurp(a) == slurp(b));
  const auto labels = maru::io::read_labels(a);
  CHECK(labels.h == 32);
  CHECK(labels.w == 32);
  for (auto l : labels.labels) CHECK(l < 6);

}

TEST_CASE("metrics on identical label maps") {
  const fs::path truth = scratch("truth.pgm");
  maru::metrics::LabelMap m{4, 4, {0, 1, 2, 3, 0, 1, 2, 3, 4, 5, 4, 5, 0, 0, 1, 1}};
  maru::io::write_labels(m, truth);
  const fs::path csv = scratch("metrics.csv");
  const Result r = run({"metrics", "--pred", truth.string(), "--truth", truth.string(), "-k", "6",
                        "--csv", csv.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("OA              1.000000") != std::string::npos);
  CHECK(r.out.find("kappa           1.000000") != std::string::npos);
  CHECK(r.out.find("mIoU            1.000000") != std::string::npos);
  const auto rows = lines(slurp(csv));
  CHECK(rows.front() == "metric,value");
  CHECK(rows[1] == "OA,1");

  const fs::path flat = scratch("flat.pgm");
  maru::io::write_labels({2, 2, {3, 3, 3, 3}}, flat);
  CHECK(run({"metrics", "--pred", flat.string(), "--truth", flat.string(), "-k", "6"}).code == 3);
  CHECK(run({"metrics", "--pred", truth.string(), "--truth", truth.string(), "-k", "4"}).code == 3);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == 2);
  CHECK(run({"bogus"}).code == 2);
  CHECK(run({"verify", "--instances", "many"}).code == 2);
  CHECK(run({"forward", "--weights", scratch("missing.bin").string(), "--image",
             scratch("missing.pgm").string(), "--out", scratch("o.pgm").string()}).code == 3);

  const fs::path junk = scratch("junk.bin");
  std::ofstream(junk) << "XXXXjunk";
  const fs::path image = scratch("img3.pgm");
  maru::io::write_pgm(maru::segnet::ImageTensor::zeros(32, 32, 3), image);
  CHECK(run({"forward", "--weights", junk.string(), "--image", image.string(), "--out",
             scratch("o.pgm").string()}).code == 3);

  const fs::path weights = scratch("toy3.bin");
  REQUIRE(run({"init-weights", "--out", weights.string()}).code == 0);
  const fs::path odd = scratch("odd.pgm");
  maru::io::write_pgm(maru::segnet::ImageTensor::zeros(30, 32, 3), odd);
  CHECK(run({"forward", "--weights", weights.string(), "--image", odd.string(), "--out",
             scratch("o.pgm").string()}).code == 2);

  CHECK(run({"ztest", "0.8672", "1.9586e-6", "0.8586", "2.0706e-6"}).out.find("4.2843") !=
        std::string::npos);
  CHECK(run({"ztest", "0.5", "0", "0.4", "0"}).code == 2);
}
