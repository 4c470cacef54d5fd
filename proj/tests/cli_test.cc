// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "gradcomp/compressors.h"
#include "gradcomp/log.h"
#include "gradcomp/rng.h"
#include "gradcomp/wire.h"

namespace gradcomp {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome Cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gradcomp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::Run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gradcomp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path Write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }

  fs::path dir_;
};

constexpr const char* kQuadratic =
    R"({"problem": {"kind": "quadratic", "dim": 8}, "steps": 10, "batch": 4})";

TEST_F(CliTest, TrainWritesArtifacts) {
  const fs::path cfg = Write("c.json", kQuadratic);
  const Outcome r = Cli({"--out-dir", (dir_ / "run").string(), "train", cfg.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string metrics = Slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 11);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "manifest.json"));
}

TEST_F(CliTest, ManifestReproducesMetrics) {
  const fs::path cfg = Write("c.json", R"({"problem": {"kind": "logistic", "dim": 10,
      "samples": 400}, "optimizer": "clan", "aggregation": {"n_workers": 2,
      "compressor": {"kind": "scaled_sign"}, "use_ef": true, "size_threshold_bytes": 0},
      "steps": 15, "batch": 8})");
  ASSERT_EQ(Cli({"--seed", "4", "--out-dir", (dir_ / "a").string(), "train", cfg.string()}).code,
            cli::kExitOk);
  ASSERT_EQ(Cli({"--out-dir", (dir_ / "b").string(), "train",
                 (dir_ / "a" / "manifest.json").string()})
                .code,
            cli::kExitOk);
  EXPECT_EQ(Slurp(dir_ / "a" / "metrics.csv"), Slurp(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(Slurp(dir_ / "a" / "manifest.json"), Slurp(dir_ / "b" / "manifest.json"));
}

TEST_F(CliTest, ConfigErrorsExitTwo) {
  EXPECT_EQ(Cli({"train", (dir_ / "missing.json").string()}).code, cli::kExitConfig);
  const fs::path bad = Write("bad.json", R"({"stepz": 1})");
  const Outcome r = Cli({"train", bad.string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("stepz"), std::string::npos);
  EXPECT_EQ(Cli({"frobnicate"}).code, cli::kExitConfig);
  EXPECT_EQ(Cli({"verify", "--suite", "everything"}).code, cli::kExitConfig);
  EXPECT_EQ(Cli({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, UnbiasedKindWithEfWarns) {
  const fs::path cfg = Write("c.json", R"({"problem": {"kind": "quadratic", "dim": 8},
      "optimizer": "clan", "aggregation": {"compressor": {"kind": "natural_dither", "bits": 3},
      "use_ef": true, "size_threshold_bytes": 0}, "steps": 3, "batch": 2})");
  std::vector<std::string> warnings;
  const LogSink old = SetLogSink([&](LogLevel level, std::string_view m) {
    if (level == LogLevel::kWarning) warnings.emplace_back(m);
  });
  const Outcome r = Cli({"--out-dir", dir_.string(), "train", cfg.string()});
  SetLogSink(old);
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  ASSERT_FALSE(warnings.empty());
  EXPECT_NE(warnings[0].find("UnbiasedKindWithEF"), std::string::npos);
}

TEST_F(CliTest, VerifyDetectsCorruptedDelta) {
  const Outcome ok = Cli({"verify", "--suite", "compressors"});
  EXPECT_EQ(ok.code, cli::kExitOk) << ok.out;
  const Outcome bad = Cli({"verify", "--suite", "protocol", "--skip-tcp", "--corrupt-delta", "-0.5"});
  EXPECT_EQ(bad.code, cli::kExitRuntime);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, InspectDecodesAndReportsOffsets) {
  const GradientVector x{1.5f, -2.0f, 0.25f};
  DeterministicRng rng(1);
  const auto frame = EncodeFrame(Compress(CompressorKind::TopK(2), x, rng), 7);
  const fs::path p = Write("f.bin", std::string(frame.begin(), frame.end()));
  const Outcome r = Cli({"inspect", p.string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("tensor_id: 7"), std::string::npos);
  EXPECT_NE(r.out.find("k: 2"), std::string::npos);

  const fs::path cut = Write("cut.bin", std::string(frame.begin(), frame.end() - 3));
  const Outcome t = Cli({"inspect", cut.string()});
  EXPECT_EQ(t.code, cli::kExitRuntime);
  EXPECT_NE(t.err.find("offset"), std::string::npos);
  EXPECT_EQ(Cli({"inspect", (dir_ / "none.bin").string()}).code, cli::kExitConfig);
}

TEST_F(CliTest, BenchSmallVector) {
  const Outcome r = Cli({"bench", "--kind", "top_k", "--d", "4096", "--threads", "2",
                         "--min-seconds", "0.01", "--dump-frame", (dir_ / "b.bin").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("outputs_identical_across_threads=yes"), std::string::npos);
  EXPECT_EQ(Cli({"inspect", (dir_ / "b.bin").string()}).code, cli::kExitOk);
}

}  // namespace
}  // namespace gradcomp
