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

#ifndef GRADCOMP_PROBLEMS_H_
#define GRADCOMP_PROBLEMS_H_

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gradcomp {

enum class ProblemKind { kQuadratic, kLogistic, kMlp };

std::string ProblemKindName(ProblemKind kind);
ProblemKind ParseProblemKind(const std::string& name);

struct ProblemConfig {
  ProblemKind kind = ProblemKind::kQuadratic;
  // Parameter count for the quadratic and logistic problems, input width for
  // the MLP.
  std::size_t dim = 50;
  // Quadratic: ratio of the largest to the smallest curvature.
  double condition = 100.0;
  // Per-sample gradient noise scale (quadratic) or label noise rate (logistic).
  double noise = 0.0;
  // Finite dataset size (logistic).
  std::size_t samples = 10000;
  double l2 = 1e-3;
  // MLP hidden width.
  std::size_t hidden = 16;
  // Block (tensor) sizes; empty picks the problem default.
  std::vector<std::size_t> blocks;
  // Scale of the random initial point.
  double init_scale = 1.0;

  void Validate() const;
};

/*!
 * \brief A differentiable objective F with a sampler of stochastic gradients.
 *
 * Sample ids index a finite dataset when sample_count() > 0, otherwise an
 * unbounded stream where each id names a fresh draw. Batch gradients are the
 * mean of per-sample gradients, so their expectation is the full gradient.
 */
class Problem {
 public:
  virtual ~Problem() = default;

  virtual ProblemKind kind() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<std::size_t> block_sizes() const = 0;
  // grad F and F are exact (a finite sum or closed form).
  virtual bool exact_gradient_available() const = 0;
  virtual std::size_t sample_count() const = 0;

  virtual std::vector<double> InitialPoint() const = 0;
  virtual double Loss(std::span<const double> x) const = 0;
  virtual std::vector<double> Gradient(std::span<const double> x) const = 0;
  virtual std::vector<double> BatchGradient(
      std::span<const double> x, std::span<const std::uint64_t> samples) const = 0;

  // Per-coordinate smoothness constants; empty when unknown.
  virtual std::vector<double> Lipschitz() const { return {}; }
  // Per-coordinate gradient noise scales; empty when unknown.
  virtual std::vector<double> NoiseScales() const { return {}; }
  virtual std::optional<double> MinimumValue() const { return std::nullopt; }
};

/*!
 * \brief F(x) = 1/2 sum_j a_j (x_j - c_j)^2.
 *
 * Curvatures a_j are log-spaced in [1, condition]; sample gradients add
 * N(0, noise^2) per coordinate drawn from the sample id.
 */
class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(const ProblemConfig& cfg, std::uint64_t seed);

  ProblemKind kind() const override { return ProblemKind::kQuadratic; }
  std::size_t dimension() const override { return a_.size(); }
  std::vector<std::size_t> block_sizes() const override { return blocks_; }
  bool exact_gradient_available() const override { return true; }
  std::size_t sample_count() const override { return 0; }

  std::vector<double> InitialPoint() const override;
  double Loss(std::span<const double> x) const override;
  std::vector<double> Gradient(std::span<const double> x) const override;
  std::vector<double> BatchGradient(
      std::span<const double> x,
      std::span<const std::uint64_t> samples) const override;
  std::vector<double> Lipschitz() const override { return a_; }
  std::vector<double> NoiseScales() const override;
  std::optional<double> MinimumValue() const override { return 0.0; }

  const std::vector<double>& curvature() const noexcept { return a_; }
  const std::vector<double>& minimizer() const noexcept { return c_; }

 private:
  std::vector<double> a_;
  std::vector<double> c_;
  std::vector<std::size_t> blocks_;
  double noise_;
  double init_scale_;
  std::uint64_t seed_;
};

/*!
 * \brief l2-regularized logistic regression on Gaussian features with labels
 * from a planted separator (optionally flipped at rate `noise`).
 */
class LogisticProblem : public Problem {
 public:
  LogisticProblem(const ProblemConfig& cfg, std::uint64_t seed);

  ProblemKind kind() const override { return ProblemKind::kLogistic; }
  std::size_t dimension() const override { return d_; }
  std::vector<std::size_t> block_sizes() const override { return blocks_; }
  bool exact_gradient_available() const override { return true; }
  std::size_t sample_count() const override { return labels_.size(); }

  std::vector<double> InitialPoint() const override;
  double Loss(std::span<const double> x) const override;
  std::vector<double> Gradient(std::span<const double> x) const override;
  std::vector<double> BatchGradient(
      std::span<const double> x,
      std::span<const std::uint64_t> samples) const override;
  // Hessian diagonal bound: mean x_ij^2 / 4 + l2.
  std::vector<double> Lipschitz() const override;

 private:
  void AddSampleGradient(std::span<const double> x, std::size_t i,
                         std::vector<double>& out) const;
  double SampleLoss(std::span<const double> x, std::size_t i) const;

  std::size_t d_;
  std::vector<double> features_;  // row-major, samples x d
  std::vector<double> labels_;    // +/-1
  std::vector<std::size_t> blocks_;
  double l2_;
  double init_scale_;
  std::uint64_t seed_;
};

/*!
 * \brief One-hidden-layer tanh network regressing a random teacher network
 * on a stream of Gaussian inputs.
 *
 * Parameters are four tensors: W1 (hidden x dim), b1, w2, b2. F is the
 * population loss, which has no closed form; Loss and Gradient evaluate a
 * fixed held-out set instead.
 */
class MlpProblem : public Problem {
 public:
  MlpProblem(const ProblemConfig& cfg, std::uint64_t seed);

  ProblemKind kind() const override { return ProblemKind::kMlp; }
  std::size_t dimension() const override;
  std::vector<std::size_t> block_sizes() const override;
  bool exact_gradient_available() const override { return false; }
  std::size_t sample_count() const override { return 0; }

  std::vector<double> InitialPoint() const override;
  double Loss(std::span<const double> x) const override;
  std::vector<double> Gradient(std::span<const double> x) const override;
  std::vector<double> BatchGradient(
      std::span<const double> x,
      std::span<const std::uint64_t> samples) const override;

  static constexpr std::size_t kEvalSamples = 1024;

 private:
  void Input(std::uint64_t id, std::vector<double>& in, double& target) const;
  double Forward(std::span<const double> x, const std::vector<double>& in,
                 std::vector<double>* hidden) const;
  double AccumulateSample(std::span<const double> x, std::uint64_t id,
                          std::vector<double>* grad) const;

  std::size_t p_;
  std::size_t h_;
  std::vector<double> teacher_;
  double noise_;
  double init_scale_;
  std::uint64_t seed_;
};

std::unique_ptr<Problem> MakeProblem(const ProblemConfig& cfg, std::uint64_t seed);

// Max over coordinates of |g_fd - g| / max(1, |g|) with central differences
// of step h on Loss and the analytic Gradient.
double FiniteDifferenceCheck(const Problem& problem, std::span<const double> x,
                             double h);

}  // namespace gradcomp

#endif  // GRADCOMP_PROBLEMS_H_
