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

#ifndef FEDHET_SIM_DEVICE_PROFILE_H_
#define FEDHET_SIM_DEVICE_PROFILE_H_

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"
#include "fedhet/status.h"

namespace fedhet::sim {

// Stochastic timing model of one device tier. Times are virtual seconds.
struct DeviceProfile {
  std::string tier_name;
  double train_time_mean = 70.0;
  double train_time_jitter = 0.05;  // relative stddev
  double exchange_latency_mean = 0.025;
  double dropout_prob_per_round = 0.0;
  double rejoin_delay = 70.0;

  bool operator==(const DeviceProfile&) const = default;

  absl::Status Validate() const {
    const std::string who = absl::StrCat("profile '", tier_name, "': ");
    if (!(train_time_mean > 0.0)) {
      return UsageError(absl::StrCat(who, "train_time_mean must be > 0"));
    }
    if (!(exchange_latency_mean > 0.0)) {
      return UsageError(absl::StrCat(who, "exchange_latency_mean must be > 0"));
    }
    if (!(rejoin_delay > 0.0)) {
      return UsageError(absl::StrCat(who, "rejoin_delay must be > 0"));
    }
    if (!(train_time_jitter >= 0.0) || !std::isfinite(train_time_jitter)) {
      return UsageError(absl::StrCat(who, "jitter must be >= 0"));
    }
    if (!(dropout_prob_per_round >= 0.0 && dropout_prob_per_round < 1.0)) {
      return UsageError(absl::StrCat(who, "dropout probability must lie in [0,1)"));
    }
    return absl::OkStatus();
  }
};

// Calibrated tiers, low-end T1 to high-end T5. High-end devices train in
// 65-75 s with ~25 ms exchanges; T3 is ~3.5x slower; the low-end pair is ~7x
// slower with ~7x the exchange latency, and drops out 3 and 2 times per 60
// rounds respectively.
inline std::vector<DeviceProfile> DefaultTierProfiles() {
  return {
      {"T1", 490.0, 0.15, 0.175, 3.0 / 60.0, 490.0},
      {"T2", 450.0, 0.15, 0.170, 2.0 / 60.0, 450.0},
      {"T3", 260.0, 0.10, 0.090, 0.0, 260.0},
      {"T4", 75.0, 0.05, 0.030, 0.0, 75.0},
      {"T5", 70.0, 0.05, 0.025, 0.0, 70.0},
  };
}

inline std::optional<DeviceProfile> FindDefaultTier(absl::string_view name) {
  for (const DeviceProfile& p : DefaultTierProfiles()) {
    if (p.tier_name == name) return p;
  }
  return std::nullopt;
}

// Log-normal draw with the given mean and relative stddev; exactly `mean` when
// the jitter is zero.
template <typename Rng>
double SampleLogNormal(double mean, double rel_stddev, Rng& rng) {
  if (rel_stddev == 0.0) return mean;
  const double s2 = std::log1p(rel_stddev * rel_stddev);
  std::lognormal_distribution<double> dist(std::log(mean) - 0.5 * s2,
                                           std::sqrt(s2));
  return dist(rng);
}

struct RoundTiming {
  double train = 0.0;
  double exchange = 0.0;
  double total() const { return train + exchange; }
};

// Training time and exchange latency share the tier's relative jitter.
template <typename Rng>
RoundTiming SampleRoundTiming(const DeviceProfile& profile, Rng& rng) {
  RoundTiming t;
  t.train = SampleLogNormal(profile.train_time_mean, profile.train_time_jitter, rng);
  t.exchange = SampleLogNormal(profile.exchange_latency_mean,
                               profile.train_time_jitter, rng);
  return t;
}

template <typename Rng>
double SampleRoundDuration(const DeviceProfile& profile, Rng& rng) {
  return SampleRoundTiming(profile, rng).total();
}

}  // namespace fedhet::sim

#endif  // FEDHET_SIM_DEVICE_PROFILE_H_
