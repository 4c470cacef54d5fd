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

#include "cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "gradcomp/compressors.h"
#include "gradcomp/config.h"
#include "gradcomp/error.h"
#include "gradcomp/harness.h"
#include "gradcomp/protocol.h"
#include "gradcomp/verify.h"
#include "gradcomp/wire.h"

namespace gradcomp::cli {

namespace {

namespace fs = std::filesystem;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string transport;
};

std::string Fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write " + path.string());
}

int Train(const Globals& g, const std::string& config_path, std::ostream& out,
          std::ostream& err) {
  RunConfig cfg;
  try {
    cfg = LoadRunConfig(config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (!g.transport.empty()) cfg.transport = ParseTransport(g.transport);
    cfg.Validate();
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const fs::path dir(g.out_dir);
    fs::create_directories(dir);
    // Manifest first so a failed run still records what was attempted.
    WriteFile(dir / "manifest.json", RunConfigToJson(cfg) + "\n");
    const RunResult run = RunExperiment(cfg);
    std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
    WriteMetricsCsv(metrics, run.records);
    std::ofstream summary(dir / "summary.csv", std::ios::binary);
    WriteSummaryCsv(summary, run.summary);
    if (!metrics || !summary) throw Error(ErrorCode::kInvalidArgument, "cannot write CSV output");
    out << "steps=" << run.summary.steps << " initial_loss=" << Fmt("%.6g", run.summary.initial_loss)
        << " final_loss=" << Fmt("%.6g", run.summary.final_loss)
        << " bytes_push=" << run.summary.total_bytes_push
        << " bytes_pull=" << run.summary.total_bytes_pull << "\n";
    if (run.summary.residual_violations + run.summary.moment_gap_violations +
            run.summary.update_bound_violations > 0) {
      err << "warning: monitor violations recorded in summary.csv\n";
    }
    out << "wrote " << (dir / "metrics.csv").string() << ", summary.csv, manifest.json\n";
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int Verify(const Globals& g, const std::string& suite, double corrupt_delta, bool skip_tcp,
           std::ostream& out, std::ostream& err) {
  VerifyOptions opts;
  if (g.seed) opts.seed = *g.seed;
  opts.delta_offset = corrupt_delta;
  opts.skip_tcp = skip_tcp;
  VerifySuite which;
  try {
    which = ParseVerifySuite(suite);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const auto results = RunVerifySuite(which, opts);
    return PrintVerifyReport(out, results) ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

struct BenchArgs {
  std::string kind = "top_k";
  std::size_t d = 10'000'000;
  unsigned threads = 4;
  std::uint64_t k = 0;
  double k_fraction = 0.001;
  int bits = 4;
  bool f16 = false;
  double min_seconds = 1.0;
  std::uint64_t size_threshold = kDefaultSizeThreshold;
  std::string dump_frame;
};

CompressorKind BenchKind(const BenchArgs& a) {
  CompressorKind kind;
  kind.tag = ParseCompressorTag(a.kind);
  if (IsSparse(kind.tag)) {
    kind.k_count = a.k;
    kind.k_fraction = a.k == 0 ? a.k_fraction : 0.0;
    kind.precision = a.f16 ? ValuePrecision::kF16 : ValuePrecision::kF32;
  }
  if (IsDither(kind.tag)) kind.bits = a.bits;
  kind.Validate();
  return kind;
}

struct Timing {
  double compress_mbps = 0.0;
  double decompress_mbps = 0.0;
  CompressedMessage message;
  std::optional<GradientVector> decoded;
};

Timing TimeKind(const CompressorKind& kind, const GradientVector& x,
                const DeterministicRng& rng, unsigned threads, double min_seconds) {
  using Clock = std::chrono::steady_clock;
  const CompressOptions opts{threads};
  const double mb = static_cast<double>(x.size()) * sizeof(float) / 1e6;
  Timing t;
  std::size_t reps = 0;
  const auto c0 = Clock::now();
  double elapsed = 0.0;
  do {
    DeterministicRng r = rng;  // same stream every repetition
    t.message = Compress(kind, x, r, opts);
    ++reps;
    elapsed = std::chrono::duration<double>(Clock::now() - c0).count();
  } while (elapsed < min_seconds);
  t.compress_mbps = mb * static_cast<double>(reps) / elapsed;
  reps = 0;
  const auto d0 = Clock::now();
  do {
    t.decoded = Decompress(t.message, opts);
    ++reps;
    elapsed = std::chrono::duration<double>(Clock::now() - d0).count();
  } while (elapsed < min_seconds);
  t.decompress_mbps = mb * static_cast<double>(reps) / elapsed;
  return t;
}

int Bench(const Globals& g, const BenchArgs& a, std::ostream& out, std::ostream& err) {
  CompressorKind kind;
  try {
    if (a.d == 0) throw Error(ErrorCode::kConfig, "d must be >= 1");
    if (a.threads == 0) throw Error(ErrorCode::kConfig, "threads must be >= 1");
    kind = BenchKind(a);
  } catch (const Error& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const std::uint64_t seed = g.seed.value_or(0);
    DeterministicRng data(seed, {0, 0, 0, StreamStage::kTrial});
    std::vector<float> v(a.d);
    for (float& f : v) f = static_cast<float>(data.NextGaussian());
    const GradientVector x(std::move(v));
    const DeterministicRng rng(seed, {0, 1, 0, StreamStage::kPush});
    const CompressorKind resolved = kind.Resolved(a.d);

    out << "kind=" << resolved.ToString() << " d=" << a.d
        << " frame_bytes=" << FrameSize(resolved, a.d)
        << " raw_bytes=" << 4 * a.d << "\n";
    const TensorRoute route = RouteTensor(
        {AggregationMode::kCompressed, kind, a.size_threshold}, a.d);
    if (route.bypassed) {
      out << "note: " << 4 * a.d << " bytes is below size_threshold_bytes="
          << a.size_threshold << "; the protocol would send this tensor uncompressed\n";
    }

    std::vector<unsigned> counts{1};
    if (a.threads != 1) counts.push_back(a.threads);
    out << "threads,compress_MBps,decompress_MBps\n";
    std::optional<Timing> first;
    bool identical = true;
    for (unsigned n : counts) {
      Timing t = TimeKind(resolved, x, rng, n, a.min_seconds);
      out << n << "," << Fmt("%.1f", t.compress_mbps) << "," << Fmt("%.1f", t.decompress_mbps)
          << "\n";
      if (!first) {
        first = std::move(t);
      } else {
        identical = identical && t.message == first->message &&
                    t.decoded->BitEqual(*first->decoded);
        out << "speedup_compress=" << Fmt("%.2f", t.compress_mbps / first->compress_mbps)
            << " speedup_decompress="
            << Fmt("%.2f", t.decompress_mbps / first->decompress_mbps) << "\n";
      }
    }
    out << "outputs_identical_across_threads=" << (identical ? "yes" : "no") << "\n";

    // memcpy ceiling for context.
    const Timing none = TimeKind(CompressorKind::None(), x, rng, 1, a.min_seconds);
    out << "baseline NONE (memcpy-bound): compress_MBps=" << Fmt("%.1f", none.compress_mbps)
        << " decompress_MBps=" << Fmt("%.1f", none.decompress_mbps) << "\n";

    if (!a.dump_frame.empty()) {
      const auto bytes = EncodeFrame(first->message, 0);
      WriteFile(a.dump_frame, std::string(bytes.begin(), bytes.end()));
      out << "frame written to " << a.dump_frame << "\n";
    }
    return identical ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

int Inspect(const std::string& path, std::ostream& out, std::ostream& err) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    err << "config error: cannot open frame file '" << path << "'\n";
    return kExitConfig;
  }
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    const DecodedFrame f = DecodeFrame(bytes);
    const CompressedMessage& m = f.message;
    const CompressorTag tag = m.kind.tag;
    out << "file_bytes: " << bytes.size() << "\n"
        << "version: " << static_cast<int>(kWireVersion) << "\n"
        << "compressor: " << CompressorTagName(tag) << " (id " << static_cast<int>(tag) << ")\n"
        << "tensor_id: " << f.tensor_id << "\n"
        << "d: " << m.original_len << "\n"
        << "payload_bytes: " << m.payload.size() << "\n";
    const GradientVector view = Decompress(m);
    if (IsSparse(tag)) {
      out << "k: " << m.kind.k_count << "\n"
          << "value_precision: " << (m.kind.precision == ValuePrecision::kF16 ? "f16" : "f32")
          << "\n";
      const auto idx = SparseIndices(m);
      out << "first_indices:";
      for (std::size_t i = 0; i < std::min<std::size_t>(8, idx.size()); ++i) out << " " << idx[i];
      out << "\n";
    }
    if (tag == CompressorTag::kScaledSign) {
      std::size_t neg = 0;
      for (float v : view.values()) neg += std::signbit(v) ? 1 : 0;
      out << "scale: " << Fmt("%.9g", MessageScale(m)) << "\n"
          << "sign_bits: positive=" << view.size() - neg << " negative=" << neg << "\n";
    }
    if (IsDither(tag)) {
      out << "bits: " << m.kind.bits << "\n"
          << "norm: " << Fmt("%.9g", MessageScale(m)) << "\n";
    }
    out << "first_entries:";
    for (std::size_t i = 0; i < std::min<std::size_t>(8, view.size()); ++i) {
      out << " " << Fmt("%.9g", view[i]);
    }
    out << "\n";
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace

int Run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gradient compression experiments and tools", "gradcomp"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--out-dir", g.out_dir, "Directory for run artifacts");
  app.add_option("--transport", g.transport, "inproc or tcp[:host[:port]]");

  std::string config_path;
  auto* train = app.add_subcommand("train", "Run one training experiment from a JSON config");
  train->add_option("config", config_path, "Config file")->required();
  train->fallthrough();

  std::string suite = "all";
  double corrupt_delta = 0.0;
  bool skip_tcp = false;
  auto* verify = app.add_subcommand("verify", "Run invariant suites");
  verify->add_option("--suite", suite, "compressors, protocol, bounds or all");
  verify->add_option("--corrupt-delta", corrupt_delta,
                     "Offset added to every certified delta (sabotage check)");
  verify->add_flag("--skip-tcp", skip_tcp, "Skip the loopback transport check");
  verify->fallthrough();

  BenchArgs b;
  auto* bench = app.add_subcommand("bench", "Compressor throughput");
  bench->add_option("--kind", b.kind, "Compressor name");
  bench->add_option("--d", b.d, "Vector length");
  bench->add_option("--threads", b.threads, "Thread count compared against 1");
  bench->add_option("--k", b.k, "Absolute k for sparse kinds");
  bench->add_option("--k-fraction", b.k_fraction, "k as a fraction of d");
  bench->add_option("--bits", b.bits, "Dither bits");
  bench->add_flag("--f16", b.f16, "FP16 values for sparse kinds");
  bench->add_option("--min-seconds", b.min_seconds, "Minimum timed duration per phase");
  bench->add_option("--size-threshold", b.size_threshold, "Bypass threshold in bytes");
  bench->add_option("--dump-frame", b.dump_frame, "Write the compressed frame to a file");
  bench->fallthrough();

  std::string frame_path;
  auto* inspect = app.add_subcommand("inspect", "Decode and summarize a wire frame file");
  inspect->add_option("frame", frame_path, "Frame file")->required();

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::Success&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (app.count("--seed") > 0) g.seed = seed;

  if (*train) return Train(g, config_path, out, err);
  if (*verify) return Verify(g, suite, corrupt_delta, skip_tcp, out, err);
  if (*bench) return Bench(g, b, out, err);
  return Inspect(frame_path, out, err);
}

}  // namespace gradcomp::cli
