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

#include "gradcomp/analysis.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "gradcomp/error.h"

namespace gradcomp {

namespace {

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

double SumNonNegative(const std::vector<double>& v, const char* name) {
  double s = 0.0;
  for (double x : v) {
    Require(x >= 0 && std::isfinite(x), std::string(name) + " must be finite and >= 0");
    s += x;
  }
  return s;
}

double Capped(double v, double cap, bool* capped) {
  if (!std::isfinite(v) || v > cap) {
    *capped = true;
    return std::numeric_limits<double>::infinity();
  }
  return v;
}

void CheckDelta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) {
    throw Error(ErrorCode::kDeltaOutOfRange,
                "delta = " + std::to_string(delta) + " is outside (0, 1]");
  }
}

}  // namespace

void BoundInputs::Validate() const {
  Require(d >= 1, "d must be >= 1");
  Require(lipschitz.empty() || lipschitz.size() == d, "need one Lipschitz constant per coordinate");
  Require(sigma.empty() || sigma.size() == d, "need one noise scale per coordinate");
  SumNonNegative(lipschitz, "L");
  SumNonNegative(sigma, "sigma");
  Require(G >= 0 && eta > 0 && eps > 0 && gap >= 0, "G, eta, eps and the gap must be nonnegative");
  Require(batch >= 1 && workers >= 1 && horizon >= 1, "s, n and T must be >= 1");
  Require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "betas must lie in (0, 1)");
  Require(alpha_l > 0 && alpha_l <= alpha_u, "need 0 < alpha_l <= alpha_u");
}

double BoundInputs::LipschitzL1() const { return SumNonNegative(lipschitz, "L"); }
double BoundInputs::SigmaL1() const { return SumNonNegative(sigma, "sigma"); }

BoundReport Theorem1Rhs(const BoundInputs& in, const EstimatorConstants& k) {
  if (1.0 - in.beta1 < 1e-12 || 1.0 - in.beta2 < 1e-12) {
    throw Error(ErrorCode::kDegenerateParams, "beta1 or beta2 too close to 1");
  }
  in.Validate();
  Require(k.v1_prime >= 0 && k.v2 >= 0 && k.v3 >= 0, "V constants must be >= 0");
  const double sd = std::sqrt(static_cast<double>(in.d));
  const double b1 = in.beta1;
  const double sb2 = std::sqrt(1.0 - in.beta2);
  const double omb1 = 1.0 - b1;
  BoundReport r;
  r.constants = k;
  r.gap_term = sd * k.v1_prime * in.gap /
               (static_cast<double>(in.horizon) * in.eta * in.alpha_l * omb1 * sb2);
  r.v3_term = sd * in.G * k.v3;
  r.smoothness_term = in.eta * sd * k.v1_prime * in.alpha_u * in.alpha_u *
                      (omb1 + 2 * b1 * b1) * in.LipschitzL1() /
                      (2 * sb2 * omb1 * omb1 * in.alpha_l);
  r.v2_term = sd * k.v1_prime * in.alpha_u * (omb1 * omb1 + b1) * k.v2 /
              (sb2 * omb1 * omb1 * in.alpha_l);
  // 0 * inf would be NaN; a zero factor kills its term.
  if (in.G == 0.0 || k.v3 == 0.0) r.v3_term = 0.0;
  r.rhs = r.gap_term + r.v3_term + r.smoothness_term + r.v2_term;
  return r;
}

EstimatorConstants CorollaryFullPrecision(const BoundInputs& in) {
  in.Validate();
  EstimatorConstants k;
  k.v1 = in.G;
  k.v1_prime = in.G + in.eps;
  k.v2 = in.SigmaL1() / std::sqrt(static_cast<double>(in.workers * in.batch));
  k.v3 = 0.0;
  return k;
}

EstimatorConstants CorollaryUnbiased(const BoundInputs& in, double omega,
                                     OmegaConvention convention) {
  if (omega < 0 || std::isnan(omega)) {
    throw Error(ErrorCode::kNegativeOmega, "omega = " + std::to_string(omega));
  }
  EstimatorConstants k = CorollaryFullPrecision(in);
  double excess = 0.0;
  const double T = static_cast<double>(in.horizon);
  if (convention == OmegaConvention::kVarianceBound) {
    excess = std::sqrt(4 * omega * omega + 6 * omega);
    k.rate_condition = omega <= 1.0 / T;
  } else {
    Require(omega >= 1.0, "second-moment omega must be >= 1");
    const double n = static_cast<double>(in.workers);
    excess = std::sqrt(omega - 1 + omega * (omega - 1) / n);
    k.rate_condition = omega <= 1.0 + 1.0 / T;
  }
  const double dg = static_cast<double>(in.d) * in.G * excess;
  k.v1 = in.G + dg;
  k.v1_prime = k.v1 + in.eps;
  k.v2 += dg;
  return k;
}

EstimatorConstants CorollaryBiased(const BoundInputs& in, double delta,
                                   double cap) {
  CheckDelta(delta);
  EstimatorConstants k = CorollaryFullPrecision(in);
  const double sd = std::sqrt(static_cast<double>(in.d));
  const double root = std::sqrt(1.0 - delta);
  const double den = 1.0 - root;
  double v3 = 0.0;
  if (delta < 1.0) {
    const double inner = sd + 2 * (1 + sd * root / den);
    v3 = (2 * root / den) * inner * in.G;
  }
  k.v3 = Capped(v3, cap, &k.capped);
  k.v1 = Capped(in.G + sd * k.v3, cap, &k.capped);
  k.v1_prime = Capped(k.v1 + in.eps, cap, &k.capped);
  k.v2 = Capped(k.v2 + sd * k.v3, cap, &k.capped);
  const double T = static_cast<double>(in.horizon);
  const double rt = std::sqrt(T) - 1.0;
  k.rate_condition = rt <= 0.0 || delta >= 1.0 - 1.0 / (rt * rt);
  return k;
}

EfResidualBounds LemmaEfResidualBound(double delta, std::size_t d, double G) {
  CheckDelta(delta);
  Require(G >= 0, "G must be >= 0");
  EfResidualBounds b;
  if (delta == 1.0) return b;
  const double root = std::sqrt(1.0 - delta);
  const double den = 1.0 - root;
  const double ratio = std::sqrt(static_cast<double>(d)) * root / den;
  b.worker = ratio * G;
  b.server = 2 * root / den * (1 + ratio) * G;
  b.combined = b.worker + b.server;
  return b;
}

MomentGapMonitor::MomentGapMonitor(double beta1, double alpha_u,
                                   std::vector<double> lipschitz, double rel_slack)
    : beta1_(beta1),
      alpha_u_(alpha_u),
      lipschitz_(std::move(lipschitz)),
      rel_slack_(rel_slack),
      tail_(lipschitz_.size(), 0.0) {
  if (lipschitz_.empty()) {
    throw Error(ErrorCode::kOracleUnavailable,
                "moment-gap monitor needs per-coordinate Lipschitz constants");
  }
  Require(beta1 >= 0 && beta1 < 1, "beta1 must lie in [0, 1)");
}

void MomentGapMonitor::Observe(std::span<const double> m_hat,
                               std::span<const float> p,
                               std::span<const double> grad, double lr) {
  const std::size_t d = lipschitz_.size();
  if (m_hat.size() != d || p.size() != d || grad.size() != d) {
    throw Error(ErrorCode::kLengthMismatch, "moment-gap inputs differ in length");
  }
  ++t_;
  eta_max_ = std::max(eta_max_, lr);
  const double drift = beta1_ / (1.0 - beta1_) * eta_max_ * alpha_u_;
  const double corr = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  for (std::size_t j = 0; j < d; ++j) {
    const double err = std::fabs(static_cast<double>(p[j]) - grad[j]);
    const double bound = drift * lipschitz_[j] + err + tail_[j] / corr;
    const double gap = std::fabs(m_hat[j] - grad[j]);
    const double slack =
        rel_slack_ * (1.0 + std::fabs(m_hat[j]) + std::fabs(grad[j]) + bound);
    const double margin = bound - gap;
    ++checks_;
    if (gap > bound + slack) ++violations_;
    if (margin < worst_margin_) {
      worst_margin_ = margin;
      worst_step_ = t_;
      worst_coord_ = j;
    }
    tail_[j] = beta1_ * (tail_[j] + err);
  }
}

double IdealScalingEfficiency(double t_fp, double t_bp, double t_comm) {
  if (!(t_fp > 0) || !(t_bp > 0) || !(t_comm > 0)) {
    throw Error(ErrorCode::kNonPositiveTime, "phase times must be positive");
  }
  return (t_fp + t_bp) / (t_fp + std::max(t_bp, t_comm));
}

double CommTime(double model_bytes, double bandwidth) {
  if (!(model_bytes > 0) || !(bandwidth > 0)) {
    throw Error(ErrorCode::kNonPositiveTime, "model size and bandwidth must be positive");
  }
  return 2.0 * model_bytes / bandwidth;
}

double CompressionRate(const CompressorKind& kind, std::size_t d,
                       Baseline baseline) {
  const double dense = static_cast<double>(d) * (baseline == Baseline::kFp32 ? 4 : 2);
  return dense / static_cast<double>(PayloadSize(kind.Resolved(d), d));
}

double LogLogSlope(std::span<const double> x, std::span<const double> y) {
  Require(x.size() == y.size() && x.size() >= 2, "need at least two points");
  double mx = 0, my = 0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Require(x[i] > 0 && y[i] > 0, "log-log fit needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
    mx += lx.back();
    my += ly.back();
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  Require(sxx > 0, "x values must not all be equal");
  return sxy / sxx;
}

std::string BoundReportCsvHeader() {
  return "label,v1,v1_prime,v2,v3,gap_term,smoothness_term,v2_term,v3_term,rhs,"
         "rate_condition,capped";
}

std::string BoundReportCsvRow(const std::string& label, const BoundReport& r) {
  char buf[512];
  const auto& k = r.constants;
  std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d",
                k.v1, k.v1_prime, k.v2, k.v3, r.gap_term, r.smoothness_term,
                r.v2_term, r.v3_term, r.rhs, k.rate_condition ? 1 : 0,
                k.capped ? 1 : 0);
  return label + "," + buf;
}

}  // namespace gradcomp
