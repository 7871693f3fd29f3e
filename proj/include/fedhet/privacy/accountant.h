// Copyright 2026 The FedHet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Moments accountant for the subsampled Gaussian mechanism.
//
// One application of the mechanism releases a noisy sum where each record is
// included with probability q and Gaussian noise of scale sigma (in units of
// the clipping norm) is added. Its privacy loss is bounded through the log
// moments
//
//   mu(lambda) = log max(E1, E2),
//   E1 = E_{z ~ mu0} [(mu0(z) / nu(z))^lambda],
//   E2 = E_{z ~ nu}  [(nu(z) / mu0(z))^lambda],
//
// where mu0 = N(0, sigma^2) and nu = (1 - q) N(0, sigma^2) + q N(1, sigma^2).
// Moments add under composition and convert to an (epsilon, delta) guarantee
// via epsilon = min_lambda (mu(lambda) - log delta) / lambda.

#ifndef FEDHET_PRIVACY_ACCOUNTANT_H_
#define FEDHET_PRIVACY_ACCOUNTANT_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "fedhet/privacy/quadrature.h"
#include "fedhet/status.h"

namespace fedhet::privacy {

inline constexpr int kDefaultMaxLambda = 64;
inline constexpr double kDefaultDelta = 1e-5;

// Absolute tolerance on each (rescaled) moment integral.
inline constexpr double kMomentIntegralTolerance = 1e-10;
// Scaled integrand values below this are treated as exactly zero.
inline constexpr double kIntegrandFloor = 1e-300;

inline std::vector<int> DefaultLambdaGrid(int max_lambda = kDefaultMaxLambda) {
  std::vector<int> grid(static_cast<std::size_t>(std::max(max_lambda, 0)));
  for (int i = 0; i < max_lambda; ++i) grid[static_cast<std::size_t>(i)] = i + 1;
  return grid;
}

struct MechanismParams {
  double sampling_probability = 1.0;  // q
  double noise_multiplier = 1.0;      // sigma
  std::vector<int> lambda_grid = DefaultLambdaGrid();

  absl::Status Validate() const {
    if (!(sampling_probability > 0.0 && sampling_probability <= 1.0)) {
      return UsageError(absl::StrCat("sampling probability must lie in (0,1], got ",
                                     sampling_probability));
    }
    if (!(noise_multiplier > 0.0) || !std::isfinite(noise_multiplier)) {
      return UsageError(
          absl::StrCat("noise multiplier must be > 0, got ", noise_multiplier));
    }
    if (lambda_grid.empty()) return UsageError("lambda grid is empty");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      if (lambda_grid[i] < 1) {
        return UsageError("lambda grid entries must be >= 1");
      }
      if (i > 0 && lambda_grid[i] <= lambda_grid[i - 1]) {
        return UsageError("lambda grid must be strictly increasing");
      }
    }
    return absl::OkStatus();
  }
};

namespace internal {

inline double LogAddExp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// Log densities of the two hypotheses and the log of the moment integrands.
class SubsampledGaussian {
 public:
  SubsampledGaussian(double q, double sigma)
      : q_(q),
        inv_two_var_(1.0 / (2.0 * sigma * sigma)),
        log_norm_(-std::log(sigma * std::sqrt(2.0 * std::numbers::pi))),
        log_q_(std::log(q)),
        log_1mq_(q < 1.0 ? std::log1p(-q)
                         : -std::numeric_limits<double>::infinity()) {}

  double LogMu0(double z) const { return -z * z * inv_two_var_ + log_norm_; }
  double LogMu1(double z) const {
    return -(z - 1.0) * (z - 1.0) * inv_two_var_ + log_norm_;
  }
  double LogNu(double z) const {
    if (q_ >= 1.0) return LogMu1(z);
    return LogAddExp(log_1mq_ + LogMu0(z), log_q_ + LogMu1(z));
  }
  // log of mu0 * (mu0/nu)^lambda
  double LogFirstIntegrand(double z, int lambda) const {
    const double l0 = LogMu0(z);
    return l0 + lambda * (l0 - LogNu(z));
  }
  // log of nu * (nu/mu0)^lambda
  double LogSecondIntegrand(double z, int lambda) const {
    const double ln = LogNu(z);
    return ln + lambda * (ln - LogMu0(z));
  }

 private:
  double q_;
  double inv_two_var_;
  double log_norm_;
  double log_q_;
  double log_1mq_;
};

// log of the integral of exp(log_f) over [lo, hi]. The integrand is rescaled
// by its peak so huge moments stay representable.
template <typename LogF>
absl::StatusOr<double> LogIntegral(const LogF& log_f, double lo, double hi,
                                   double sigma) {
  const double probe_step = sigma / 8.0;
  const auto probes =
      static_cast<std::size_t>(std::ceil((hi - lo) / probe_step)) + 1;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < probes; ++i) {
    const double z = std::min(hi, lo + probe_step * static_cast<double>(i));
    peak = std::max(peak, log_f(z));
  }
  if (!std::isfinite(peak)) {
    return MomentOverflowError(absl::StrCat("integrand peak is ", peak));
  }
  const double log_floor = std::log(kIntegrandFloor);
  auto scaled = [&](double z) {
    const double v = log_f(z) - peak;
    return v < log_floor ? 0.0 : std::exp(v);
  };
  const auto pieces =
      static_cast<std::size_t>(std::ceil((hi - lo) / (sigma / 2.0)));
  const QuadratureResult r =
      IntegrateAdaptive(scaled, lo, hi, kMomentIntegralTolerance, pieces);
  if (!std::isfinite(r.value) || r.value <= 0.0) {
    return MomentOverflowError(
        absl::StrCat("rescaled integral is ", r.value));
  }
  const double result = peak + std::log(r.value);
  if (!std::isfinite(result)) {
    return MomentOverflowError("log moment is not finite");
  }
  return result;
}

}  // namespace internal

// Integration window for order lambda. The second integrand is a mixture of
// Gaussians centred at 0..lambda+1 (the first, at q = 1, is centred at
// -lambda), so the window spans those centres with a 12 sigma + 1 margin.
inline std::pair<double, double> MomentWindow(double sigma, int lambda) {
  const double margin = 12.0 * sigma + 1.0;
  const double reach = static_cast<double>(lambda) + 1.0 + margin;
  return {-reach, reach};
}

inline absl::StatusOr<double> LogMoment(const MechanismParams& params,
                                        int lambda) {
  if (absl::Status s = params.Validate(); !s.ok()) return s;
  if (lambda < 1) {
    return UsageError(absl::StrCat("lambda must be >= 1, got ", lambda));
  }
  const double sigma = params.noise_multiplier;
  const internal::SubsampledGaussian mech(params.sampling_probability, sigma);
  const auto [lo, hi] = MomentWindow(sigma, lambda);

  absl::StatusOr<double> log_e1 = internal::LogIntegral(
      [&](double z) { return mech.LogFirstIntegrand(z, lambda); }, lo, hi,
      sigma);
  if (!log_e1.ok()) return log_e1.status();
  absl::StatusOr<double> log_e2 = internal::LogIntegral(
      [&](double z) { return mech.LogSecondIntegrand(z, lambda); }, lo, hi,
      sigma);
  if (!log_e2.ok()) return log_e2.status();

  // Both expectations are >= 1 by Jensen; quadrature noise can land a hair
  // below zero on the log scale.
  return std::max(0.0, std::max(*log_e1, *log_e2));
}

// Log moments of one mechanism application at every order of its grid.
struct MomentProfile {
  std::vector<int> lambda_grid;
  std::vector<double> log_moments;
};

inline absl::StatusOr<MomentProfile> ComputeMomentProfile(
    const MechanismParams& params) {
  if (absl::Status s = params.Validate(); !s.ok()) return s;
  MomentProfile profile;
  profile.lambda_grid = params.lambda_grid;
  profile.log_moments.reserve(params.lambda_grid.size());
  for (int lambda : params.lambda_grid) {
    absl::StatusOr<double> mu = LogMoment(params, lambda);
    if (!mu.ok()) return mu.status();
    profile.log_moments.push_back(*mu);
  }
  return profile;
}

// Per-client accumulated log moments. Value type; one owner per client.
class AccountantState {
 public:
  explicit AccountantState(std::vector<int> lambda_grid)
      : lambda_grid_(std::move(lambda_grid)),
        cumulative_moments_(lambda_grid_.size(), 0.0) {}

  static absl::StatusOr<AccountantState> FromMoments(
      std::vector<int> lambda_grid, std::vector<double> moments,
      std::int64_t steps) {
    if (lambda_grid.size() != moments.size()) {
      return ConfigError("moment vector length differs from lambda grid");
    }
    if (steps < 0) return UsageError("steps must be non-negative");
    for (double m : moments) {
      if (!(m >= 0.0) || !std::isfinite(m)) {
        return UsageError("moments must be finite and non-negative");
      }
    }
    AccountantState state(std::move(lambda_grid));
    state.cumulative_moments_ = std::move(moments);
    state.steps_composed_ = steps;
    return state;
  }

  const std::vector<int>& lambda_grid() const { return lambda_grid_; }
  const std::vector<double>& cumulative_moments() const {
    return cumulative_moments_;
  }
  std::int64_t steps_composed() const { return steps_composed_; }

  // Adds `times` applications of a mechanism with the given moment profile.
  absl::Status Add(const MomentProfile& profile, std::int64_t times = 1) {
    if (profile.lambda_grid != lambda_grid_ ||
        profile.log_moments.size() != lambda_grid_.size()) {
      return ConfigError("lambda grid of mechanism differs from accountant");
    }
    if (times < 0) return UsageError("composition count must be >= 0");
    for (std::size_t i = 0; i < cumulative_moments_.size(); ++i) {
      cumulative_moments_[i] +=
          static_cast<double>(times) * profile.log_moments[i];
    }
    steps_composed_ += times;
    return absl::OkStatus();
  }

 private:
  std::vector<int> lambda_grid_;
  std::vector<double> cumulative_moments_;
  std::int64_t steps_composed_ = 0;
};

inline absl::StatusOr<AccountantState> Compose(const AccountantState& state,
                                               const MomentProfile& profile,
                                               std::int64_t times = 1) {
  AccountantState next = state;
  if (absl::Status s = next.Add(profile, times); !s.ok()) return s;
  return next;
}

inline absl::StatusOr<AccountantState> Compose(const AccountantState& state,
                                               const MechanismParams& params) {
  if (params.lambda_grid != state.lambda_grid()) {
    return ConfigError("lambda grid of mechanism differs from accountant");
  }
  absl::StatusOr<MomentProfile> profile = ComputeMomentProfile(params);
  if (!profile.ok()) return profile.status();
  return Compose(state, *profile);
}

// epsilon = min over the grid of (mu(lambda) - log delta) / lambda.
inline absl::StatusOr<double> EpsilonFromMoments(
    std::span<const int> lambda_grid, std::span<const double> moments,
    double delta) {
  if (!(delta > 0.0 && delta < 1.0)) {
    return UsageError(absl::StrCat("delta must lie in (0,1), got ", delta));
  }
  if (lambda_grid.empty() || lambda_grid.size() != moments.size()) {
    return UsageError("moments and lambda grid are empty or mismatched");
  }
  const double log_delta = std::log(delta);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    best = std::min(best, (moments[i] - log_delta) / lambda_grid[i]);
  }
  return best;
}

inline absl::StatusOr<double> Epsilon(const AccountantState& state,
                                      double delta = kDefaultDelta) {
  if (state.steps_composed() < 1) {
    return UsageError("epsilon requested before any mechanism was composed");
  }
  return EpsilonFromMoments(state.lambda_grid(), state.cumulative_moments(),
                            delta);
}

}  // namespace fedhet::privacy

#endif  // FEDHET_PRIVACY_ACCOUNTANT_H_
