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

#ifndef GRADCOMP_ANALYSIS_H_
#define GRADCOMP_ANALYSIS_H_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gradcomp/compressors.h"

namespace gradcomp {

/*!
 * \brief Problem, optimizer and compressor constants entering the bound.
 *
 * L and sigma are per coordinate; an empty vector means all zeros.
 */
struct BoundInputs {
  std::size_t d = 1;
  std::vector<double> lipschitz;  // L_j
  std::vector<double> sigma;      // sigma_j
  double G = 0.0;
  std::uint64_t batch = 1;    // s
  std::uint64_t workers = 1;  // n
  std::uint64_t horizon = 1;  // T
  double eta = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double alpha_l = 0.01;
  double alpha_u = 10.0;
  double gap = 0.0;  // F(x_1) - F(x_*)

  void Validate() const;
  double LipschitzL1() const;
  double SigmaL1() const;
};

struct EstimatorConstants {
  double v1 = 0.0;
  double v1_prime = 0.0;  // v1 + eps
  double v2 = 0.0;
  double v3 = 0.0;
  // The corollary's rate condition (omega <= 1/T, delta >= 1 - 1/(sqrt T - 1)^2).
  bool rate_condition = true;
  // Some constant exceeded the cap and is reported as +inf.
  bool capped = false;
};

struct BoundReport {
  EstimatorConstants constants;
  double gap_term = 0.0;
  double smoothness_term = 0.0;
  double v2_term = 0.0;
  double v3_term = 0.0;
  double rhs = 0.0;
};

// Throws kDegenerateParams when beta1 or beta2 is within 1e-12 of 1.
BoundReport Theorem1Rhs(const BoundInputs& in, const EstimatorConstants& k);

EstimatorConstants CorollaryFullPrecision(const BoundInputs& in);

enum class OmegaConvention {
  // E||C(x) - x||^2 <= omega ||x||^2, excess sqrt(4 omega^2 + 6 omega).
  kVarianceBound,
  // E||C(x)||^2 <= omega ||x||^2 (omega >= 1), excess
  // sqrt(omega - 1 + omega (omega - 1) / n); rate condition omega <= 1 + 1/T.
  kSecondMomentBound,
};

// Throws kNegativeOmega (or kInvalidArgument for omega < 1 under the
// second-moment convention).
EstimatorConstants CorollaryUnbiased(
    const BoundInputs& in, double omega,
    OmegaConvention convention = OmegaConvention::kVarianceBound);

inline constexpr double kDefaultBoundCap = 1e12;

// Throws kDeltaOutOfRange unless 0 < delta <= 1. Constants above `cap` are
// reported as +inf with capped set.
EstimatorConstants CorollaryBiased(const BoundInputs& in, double delta,
                                   double cap = kDefaultBoundCap);

struct EfResidualBounds {
  double worker = 0.0;
  double server = 0.0;
  double combined = 0.0;
};

EfResidualBounds LemmaEfResidualBound(double delta, std::size_t d, double G);

/*!
 * \brief Tracks the first-moment gap |m~_t - grad F(x_t)| along a LANS run
 * and checks it against its per-coordinate bound
 *
 *   beta1/(1-beta1) L_j eta alpha_u + |(p_t - grad F(x_t))_j|
 *     + sum_{tau=1}^{t-1} beta1^tau/(1-beta1^t) |(p_{t-tau} - grad F(x_{t-tau}))_j|
 *
 * with eta the largest step size seen so far.
 */
class MomentGapMonitor {
 public:
  MomentGapMonitor(double beta1, double alpha_u, std::vector<double> lipschitz,
                   double rel_slack = 1e-9);

  // Step t = number of prior calls + 1. All vectors have length d.
  void Observe(std::span<const double> m_hat, std::span<const float> p,
               std::span<const double> grad, double lr);

  std::uint64_t steps() const noexcept { return t_; }
  std::uint64_t checks() const noexcept { return checks_; }
  std::uint64_t violations() const noexcept { return violations_; }
  // Smallest bound - gap seen (negative means a violation).
  double worst_margin() const noexcept { return worst_margin_; }
  std::uint64_t worst_step() const noexcept { return worst_step_; }
  std::size_t worst_coord() const noexcept { return worst_coord_; }

 private:
  double beta1_;
  double alpha_u_;
  std::vector<double> lipschitz_;
  double rel_slack_;
  std::vector<double> tail_;  // sum_{tau>=1} beta1^tau |err_{t-tau}|
  double eta_max_ = 0.0;
  std::uint64_t t_ = 0;
  std::uint64_t checks_ = 0;
  std::uint64_t violations_ = 0;
  double worst_margin_ = std::numeric_limits<double>::infinity();
  std::uint64_t worst_step_ = 0;
  std::size_t worst_coord_ = 0;
};

// (t_fp + t_bp) / (t_fp + max(t_bp, t_comm)); throws kNonPositiveTime.
double IdealScalingEfficiency(double t_fp, double t_bp, double t_comm);
// 2 * model_bytes / bandwidth (bytes per second).
double CommTime(double model_bytes, double bandwidth);

enum class Baseline { kFp32, kFp16 };

// Dense baseline bytes over the encoded payload size (headers excluded).
double CompressionRate(const CompressorKind& kind, std::size_t d,
                       Baseline baseline);

// Least-squares slope of log(y) against log(x).
double LogLogSlope(std::span<const double> x, std::span<const double> y);

std::string BoundReportCsvHeader();
std::string BoundReportCsvRow(const std::string& label, const BoundReport& r);

}  // namespace gradcomp

#endif  // GRADCOMP_ANALYSIS_H_
