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

#include <cmath>
#include <numeric>
#include <vector>

#include "gradcomp/problems.h"
#include "gradcomp/rng.h"
#include "test_util.h"

namespace gradcomp {
namespace {

using testing::CodeOf;

ProblemConfig Quadratic(std::size_t d, double noise = 0.0) {
  ProblemConfig c;
  c.kind = ProblemKind::kQuadratic;
  c.dim = d;
  c.noise = noise;
  return c;
}

TEST(QuadraticTest, ClosedFormOracle) {
  QuadraticProblem p(Quadratic(20), 3);
  const auto& a = p.curvature();
  const auto& c = p.minimizer();
  EXPECT_DOUBLE_EQ(a.front(), 1.0);
  EXPECT_DOUBLE_EQ(a.back(), 100.0);
  const std::vector<double> x = p.InitialPoint();
  double loss = 0;
  for (std::size_t j = 0; j < 20; ++j) loss += 0.5 * a[j] * (x[j] - c[j]) * (x[j] - c[j]);
  EXPECT_NEAR(p.Loss(x), loss, 1e-12 * loss);
  const auto g = p.Gradient(x);
  for (std::size_t j = 0; j < 20; ++j) EXPECT_NEAR(g[j], a[j] * (x[j] - c[j]), 1e-12);
  EXPECT_EQ(p.Loss(c), 0.0);
  EXPECT_EQ(p.Lipschitz(), a);
  EXPECT_EQ(p.block_sizes(), (std::vector<std::size_t>{10, 10}));
}

TEST(QuadraticTest, NoiselessBatchIsExactAndNoisyIsUnbiased) {
  QuadraticProblem exact(Quadratic(5), 1);
  const auto x = exact.InitialPoint();
  const std::vector<std::uint64_t> ids{0, 1, 2};
  EXPECT_EQ(exact.BatchGradient(x, ids), exact.Gradient(x));

  QuadraticProblem noisy(Quadratic(5, 0.5), 1);
  std::vector<std::uint64_t> many(40000);
  std::iota(many.begin(), many.end(), 0);
  const auto gb = noisy.BatchGradient(x, many);
  const auto g = noisy.Gradient(x);
  for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(gb[j], g[j], 4 * 0.5 / std::sqrt(40000.0));
  // Same id, same draw.
  const std::vector<std::uint64_t> one{17};
  EXPECT_EQ(noisy.BatchGradient(x, one), noisy.BatchGradient(x, one));
}

TEST(LogisticTest, FullBatchEqualsGradient) {
  ProblemConfig c;
  c.kind = ProblemKind::kLogistic;
  c.dim = 8;
  c.samples = 300;
  c.noise = 0.1;
  LogisticProblem p(c, 2);
  DeterministicRng rng(2);
  std::vector<double> x(8);
  for (double& v : x) v = rng.NextGaussian();
  std::vector<std::uint64_t> all(300);
  std::iota(all.begin(), all.end(), 0);
  const auto gb = p.BatchGradient(x, all);
  const auto g = p.Gradient(x);
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(gb[j], g[j], 1e-12);
  EXPECT_EQ(p.sample_count(), 300u);
  EXPECT_NEAR(p.Loss(std::vector<double>(8, 0.0)), std::log(2.0), 1e-12);
  for (double L : p.Lipschitz()) EXPECT_GT(L, 0.0);
}

TEST(FiniteDifferenceTest, AllProblems) {
  QuadraticProblem q(Quadratic(30), 4);
  EXPECT_LE(FiniteDifferenceCheck(q, q.InitialPoint(), 1e-3), 1e-6);

  ProblemConfig lc;
  lc.kind = ProblemKind::kLogistic;
  lc.dim = 20;
  lc.samples = 500;
  LogisticProblem l(lc, 4);
  EXPECT_LE(FiniteDifferenceCheck(l, std::vector<double>(20, 0.0), 1e-4), 1e-4);
  EXPECT_LE(FiniteDifferenceCheck(l, l.InitialPoint(), 1e-4), 1e-4);

  ProblemConfig mc;
  mc.kind = ProblemKind::kMlp;
  mc.dim = 6;
  mc.hidden = 5;
  MlpProblem m(mc, 4);
  EXPECT_EQ(m.dimension(), 5u * 6 + 5 + 5 + 1);
  EXPECT_EQ(m.block_sizes(), (std::vector<std::size_t>{30, 5, 5, 1}));
  EXPECT_FALSE(m.exact_gradient_available());
  EXPECT_LE(FiniteDifferenceCheck(m, m.InitialPoint(), 1e-4), 1e-3);
}

TEST(ProblemConfigTest, Validation) {
  ProblemConfig c;
  c.dim = 0;
  EXPECT_EQ(CodeOf([&] { c.Validate(); }), ErrorCode::kInvalidArgument);
  c = ProblemConfig{};
  c.blocks = {10, 10};  // d = 50
  EXPECT_NE(CodeOf([&] { MakeProblem(c, 0); }), ErrorCode::kConfig);
  EXPECT_EQ(ParseProblemKind("LOGISTIC"), ProblemKind::kLogistic);
  EXPECT_EQ(ProblemKindName(ProblemKind::kMlp), "mlp");
}

TEST(ProblemSeedTest, SeedsChangeInstances) {
  QuadraticProblem a(Quadratic(10), 1), b(Quadratic(10), 1), c(Quadratic(10), 2);
  EXPECT_EQ(a.minimizer(), b.minimizer());
  EXPECT_NE(a.minimizer(), c.minimizer());
}

}  // namespace
}  // namespace gradcomp
