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

#include "gradcomp/problems.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "gradcomp/error.h"
#include "gradcomp/rng.h"

namespace gradcomp {

namespace {

constexpr std::uint64_t kEvalBase = std::uint64_t{1} << 62;

std::vector<std::size_t> ChunkBlocks(std::size_t d, std::size_t chunk) {
  std::vector<std::size_t> out;
  for (std::size_t off = 0; off < d; off += chunk) out.push_back(std::min(chunk, d - off));
  return out;
}

std::vector<std::size_t> PickBlocks(const std::vector<std::size_t>& wanted,
                                    std::vector<std::size_t> fallback,
                                    std::size_t d) {
  if (wanted.empty()) return fallback;
  const std::size_t sum = std::accumulate(wanted.begin(), wanted.end(), std::size_t{0});
  if (sum != d) {
    throw Error(ErrorCode::kSizeMismatch, "blocks sum to " + std::to_string(sum) +
                                              ", problem has " + std::to_string(d) +
                                              " parameters");
  }
  for (std::size_t b : wanted) {
    if (b == 0) throw Error(ErrorCode::kEmptyBlock, "block of size 0");
  }
  return wanted;
}

// log(1 + exp(-m)) without overflow.
double Softplus(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

// 1 / (1 + exp(m)).
double SigmoidNeg(double m) {
  if (m >= 0) {
    const double e = std::exp(-m);
    return e / (1 + e);
  }
  return 1 / (1 + std::exp(m));
}

}  // namespace

std::string ProblemKindName(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kQuadratic:
      return "quadratic";
    case ProblemKind::kLogistic:
      return "logistic";
    case ProblemKind::kMlp:
      return "mlp";
  }
  return "unknown";
}

ProblemKind ParseProblemKind(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (s == "quadratic") return ProblemKind::kQuadratic;
  if (s == "logistic") return ProblemKind::kLogistic;
  if (s == "mlp") return ProblemKind::kMlp;
  throw Error(ErrorCode::kInvalidArgument, "unknown problem '" + name + "'");
}

void ProblemConfig::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
  };
  require(dim >= 1, "problem dim must be >= 1");
  require(condition >= 1, "condition number must be >= 1");
  require(noise >= 0, "noise must be >= 0");
  require(l2 >= 0, "l2 must be >= 0");
  require(init_scale >= 0, "init_scale must be >= 0");
  if (kind == ProblemKind::kLogistic) {
    require(samples >= 1, "logistic needs samples >= 1");
    require(noise <= 0.5, "label flip rate must be <= 0.5");
  }
  if (kind == ProblemKind::kMlp) require(hidden >= 1, "hidden width must be >= 1");
}

QuadraticProblem::QuadraticProblem(const ProblemConfig& cfg, std::uint64_t seed)
    : noise_(cfg.noise), init_scale_(cfg.init_scale), seed_(seed) {
  cfg.Validate();
  const std::size_t d = cfg.dim;
  a_.resize(d);
  c_.resize(d);
  DeterministicRng rng(seed, {0, 0, 1, StreamStage::kInit});
  for (std::size_t j = 0; j < d; ++j) {
    const double frac = d == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(d - 1);
    a_[j] = std::pow(cfg.condition, frac);
    c_[j] = rng.NextGaussian();
  }
  blocks_ = PickBlocks(cfg.blocks, ChunkBlocks(d, 10), d);
}

std::vector<double> QuadraticProblem::InitialPoint() const {
  DeterministicRng rng(seed_, {0, 0, 2, StreamStage::kInit});
  std::vector<double> x(c_);
  for (double& v : x) v += init_scale_ * rng.NextGaussian();
  return x;
}

double QuadraticProblem::Loss(std::span<const double> x) const {
  double f = 0.0;
  for (std::size_t j = 0; j < a_.size(); ++j) {
    const double r = x[j] - c_[j];
    f += 0.5 * a_[j] * r * r;
  }
  return f;
}

std::vector<double> QuadraticProblem::Gradient(std::span<const double> x) const {
  std::vector<double> g(a_.size());
  for (std::size_t j = 0; j < a_.size(); ++j) g[j] = a_[j] * (x[j] - c_[j]);
  return g;
}

std::vector<double> QuadraticProblem::BatchGradient(
    std::span<const double> x, std::span<const std::uint64_t> samples) const {
  std::vector<double> g = Gradient(x);
  if (noise_ == 0.0 || samples.empty()) return g;
  std::vector<double> mean(g.size(), 0.0);
  for (std::uint64_t id : samples) {
    DeterministicRng rng(seed_, {0, id, 0, StreamStage::kNoise});
    for (double& m : mean) m += rng.NextGaussian();
  }
  const double scale = noise_ / static_cast<double>(samples.size());
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * mean[j];
  return g;
}

std::vector<double> QuadraticProblem::NoiseScales() const {
  return std::vector<double>(a_.size(), noise_);
}

LogisticProblem::LogisticProblem(const ProblemConfig& cfg, std::uint64_t seed)
    : d_(cfg.dim), l2_(cfg.l2), init_scale_(cfg.init_scale), seed_(seed) {
  cfg.Validate();
  const std::size_t n = cfg.samples;
  DeterministicRng rng(seed, {0, 0, 1, StreamStage::kData});
  std::vector<double> planted(d_);
  for (double& w : planted) w = rng.NextGaussian();
  features_.resize(n * d_);
  labels_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      const double v = rng.NextGaussian();
      features_[i * d_ + j] = v;
      z += v * planted[j];
    }
    double y = z >= 0 ? 1.0 : -1.0;
    if (cfg.noise > 0 && rng.NextUniform() < cfg.noise) y = -y;
    labels_[i] = y;
  }
  blocks_ = PickBlocks(cfg.blocks, {d_}, d_);
}

std::vector<double> LogisticProblem::InitialPoint() const {
  DeterministicRng rng(seed_, {0, 0, 2, StreamStage::kInit});
  std::vector<double> x(d_);
  const double s = init_scale_ / std::sqrt(static_cast<double>(d_));
  for (double& v : x) v = s * rng.NextGaussian();
  return x;
}

double LogisticProblem::SampleLoss(std::span<const double> x, std::size_t i) const {
  const double* row = &features_[i * d_];
  double z = 0.0;
  for (std::size_t j = 0; j < d_; ++j) z += row[j] * x[j];
  return Softplus(labels_[i] * z);
}

void LogisticProblem::AddSampleGradient(std::span<const double> x, std::size_t i,
                                        std::vector<double>& out) const {
  const double* row = &features_[i * d_];
  double z = 0.0;
  for (std::size_t j = 0; j < d_; ++j) z += row[j] * x[j];
  const double y = labels_[i];
  const double w = -y * SigmoidNeg(y * z);
  for (std::size_t j = 0; j < d_; ++j) out[j] += w * row[j];
}

double LogisticProblem::Loss(std::span<const double> x) const {
  double f = 0.0;
  for (std::size_t i = 0; i < labels_.size(); ++i) f += SampleLoss(x, i);
  f /= static_cast<double>(labels_.size());
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return f + 0.5 * l2_ * sq;
}

std::vector<double> LogisticProblem::Gradient(std::span<const double> x) const {
  std::vector<std::uint64_t> all(labels_.size());
  std::iota(all.begin(), all.end(), std::uint64_t{0});
  return BatchGradient(x, all);
}

std::vector<double> LogisticProblem::BatchGradient(
    std::span<const double> x, std::span<const std::uint64_t> samples) const {
  if (samples.empty()) return Gradient(x);
  std::vector<double> g(d_, 0.0);
  for (std::uint64_t id : samples) {
    if (id >= labels_.size()) {
      throw Error(ErrorCode::kInvalidArgument, "sample id out of range");
    }
    AddSampleGradient(x, static_cast<std::size_t>(id), g);
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t j = 0; j < d_; ++j) g[j] = g[j] * inv + l2_ * x[j];
  return g;
}

std::vector<double> LogisticProblem::Lipschitz() const {
  std::vector<double> L(d_, 0.0);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    for (std::size_t j = 0; j < d_; ++j) L[j] += features_[i * d_ + j] * features_[i * d_ + j];
  }
  for (double& v : L) v = v / (4.0 * static_cast<double>(labels_.size())) + l2_;
  return L;
}

MlpProblem::MlpProblem(const ProblemConfig& cfg, std::uint64_t seed)
    : p_(cfg.dim), h_(cfg.hidden), noise_(cfg.noise), init_scale_(cfg.init_scale),
      seed_(seed) {
  cfg.Validate();
  if (!cfg.blocks.empty()) PickBlocks(cfg.blocks, {}, dimension());
  DeterministicRng rng(seed, {0, 0, 1, StreamStage::kInit});
  teacher_.resize(dimension());
  const double s1 = 1.0 / std::sqrt(static_cast<double>(p_));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(h_));
  for (std::size_t k = 0; k < teacher_.size(); ++k) {
    teacher_[k] = rng.NextGaussian() * (k < h_ * p_ + h_ ? s1 : s2);
  }
}

std::size_t MlpProblem::dimension() const { return h_ * p_ + 2 * h_ + 1; }

std::vector<std::size_t> MlpProblem::block_sizes() const {
  return {h_ * p_, h_, h_, 1};
}

std::vector<double> MlpProblem::InitialPoint() const {
  DeterministicRng rng(seed_, {0, 0, 2, StreamStage::kInit});
  std::vector<double> x(dimension(), 0.0);
  const double s1 = init_scale_ / std::sqrt(static_cast<double>(p_));
  const double s2 = init_scale_ / std::sqrt(static_cast<double>(h_));
  for (std::size_t k = 0; k < h_ * p_; ++k) x[k] = s1 * rng.NextGaussian();
  for (std::size_t k = 0; k < h_; ++k) x[h_ * p_ + h_ + k] = s2 * rng.NextGaussian();
  return x;
}

void MlpProblem::Input(std::uint64_t id, std::vector<double>& in,
                       double& target) const {
  DeterministicRng rng(seed_, {0, id, 0, StreamStage::kData});
  in.resize(p_);
  for (double& v : in) v = rng.NextGaussian();
  target = Forward(teacher_, in, nullptr) + noise_ * rng.NextGaussian();
}

double MlpProblem::Forward(std::span<const double> x, const std::vector<double>& in,
                           std::vector<double>* hidden) const {
  const double* w1 = x.data();
  const double* b1 = w1 + h_ * p_;
  const double* w2 = b1 + h_;
  const double b2 = w2[h_];
  double out = b2;
  if (hidden) hidden->resize(h_);
  for (std::size_t k = 0; k < h_; ++k) {
    double a = b1[k];
    for (std::size_t j = 0; j < p_; ++j) a += w1[k * p_ + j] * in[j];
    const double t = std::tanh(a);
    if (hidden) (*hidden)[k] = t;
    out += w2[k] * t;
  }
  return out;
}

double MlpProblem::AccumulateSample(std::span<const double> x, std::uint64_t id,
                                    std::vector<double>* grad) const {
  std::vector<double> in, hid;
  double target = 0.0;
  Input(id, in, target);
  const double r = Forward(x, in, &hid) - target;
  if (grad) {
    std::vector<double>& g = *grad;
    const double* w2 = x.data() + h_ * p_ + h_;
    for (std::size_t k = 0; k < h_; ++k) {
      const double delta = r * w2[k] * (1 - hid[k] * hid[k]);
      for (std::size_t j = 0; j < p_; ++j) g[k * p_ + j] += delta * in[j];
      g[h_ * p_ + k] += delta;
      g[h_ * p_ + h_ + k] += r * hid[k];
    }
    g[h_ * p_ + 2 * h_] += r;
  }
  return 0.5 * r * r;
}

double MlpProblem::Loss(std::span<const double> x) const {
  double f = 0.0;
  for (std::uint64_t i = 0; i < kEvalSamples; ++i) f += AccumulateSample(x, kEvalBase + i, nullptr);
  return f / static_cast<double>(kEvalSamples);
}

std::vector<double> MlpProblem::Gradient(std::span<const double> x) const {
  std::vector<double> g(dimension(), 0.0);
  for (std::uint64_t i = 0; i < kEvalSamples; ++i) AccumulateSample(x, kEvalBase + i, &g);
  for (double& v : g) v /= static_cast<double>(kEvalSamples);
  return g;
}

std::vector<double> MlpProblem::BatchGradient(
    std::span<const double> x, std::span<const std::uint64_t> samples) const {
  if (samples.empty()) return Gradient(x);
  std::vector<double> g(dimension(), 0.0);
  for (std::uint64_t id : samples) {
    if (id >= kEvalBase) throw Error(ErrorCode::kInvalidArgument, "sample id in the held-out range");
    AccumulateSample(x, id, &g);
  }
  for (double& v : g) v /= static_cast<double>(samples.size());
  return g;
}

std::unique_ptr<Problem> MakeProblem(const ProblemConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case ProblemKind::kQuadratic:
      return std::make_unique<QuadraticProblem>(cfg, seed);
    case ProblemKind::kLogistic:
      return std::make_unique<LogisticProblem>(cfg, seed);
    case ProblemKind::kMlp:
      return std::make_unique<MlpProblem>(cfg, seed);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown problem kind");
}

double FiniteDifferenceCheck(const Problem& problem, std::span<const double> x,
                             double h) {
  if (!(h > 0)) throw Error(ErrorCode::kInvalidArgument, "h must be positive");
  const std::vector<double> g = problem.Gradient(x);
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::fabs(v));
  std::vector<double> probe(x.begin(), x.end());
  double worst = 0.0;
  for (std::size_t j = 0; j < probe.size(); ++j) {
    const double keep = probe[j];
    probe[j] = keep + h;
    const double up = problem.Loss(probe);
    probe[j] = keep - h;
    const double down = problem.Loss(probe);
    probe[j] = keep;
    const double fd = (up - down) / (2 * h);
    const double scale = std::max({std::fabs(g[j]), 1e-2 * gmax, 1e-8});
    worst = std::max(worst, std::fabs(fd - g[j]) / scale);
  }
  return worst;
}

}  // namespace gradcomp
