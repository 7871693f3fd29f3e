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

#ifndef FEDHET_EXPERIMENT_CONFIG_H_
#define FEDHET_EXPERIMENT_CONFIG_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "fedhet/dp/dp_sgd.h"
#include "fedhet/federation/server.h"
#include "fedhet/privacy/accountant.h"
#include "fedhet/sim/device_profile.h"
#include "fedhet/status.h"

namespace fedhet::experiment {

// How many accountant compositions one local round costs.
enum class Composition { kPerRound, kPerStep };

struct DatasetParams {
  int classes = 4;
  int dim = 32;
  int per_class = 300;
  double separation = 3.0;
  double train_fraction = 0.8;
  int hidden = 64;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct StopRule {
  double target_accuracy = 0.75;
  int sustain_evals = 3;
  std::int64_t max_aggregations = 5000;
  double max_virtual_time = 0.0;  // 0 = unbounded
  bool stop_at_target = true;
};

struct ExperimentConfig {
  federation::AggregationMode mode = federation::AggregationMode::kSynchronous;
  double alpha = 0.4;
  bool staleness_aware = true;
  federation::StalenessClock staleness_clock =
      federation::StalenessClock::kPerRound;

  dp::DpConfig dp;
  double delta = privacy::kDefaultDelta;
  int lambda_max = privacy::kDefaultMaxLambda;
  Composition composition = Composition::kPerRound;

  std::vector<sim::DeviceProfile> clients = sim::DefaultTierProfiles();
  DatasetParams data;
  StopRule stop;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  bool record_trace = false;

  absl::Status Validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      return UsageError("alpha must lie in (0,1]");
    }
    if (absl::Status s = dp.Validate(); !s.ok()) return s;
    if (!(delta > 0.0 && delta < 1.0)) {
      return UsageError("delta must lie in (0,1)");
    }
    if (lambda_max < 1) return UsageError("lambda_max must be >= 1");
    if (clients.empty()) return UsageError("at least one client is required");
    for (const sim::DeviceProfile& p : clients) {
      if (absl::Status s = p.Validate(); !s.ok()) return s;
    }
    if (data.classes < 2) return UsageError("classes must be >= 2");
    if (data.dim < data.classes) return UsageError("dim must be >= classes");
    if (data.per_class < 1) return UsageError("per_class must be >= 1");
    if (!(data.separation > 0.0)) return UsageError("separation must be > 0");
    if (!(data.train_fraction > 0.0 && data.train_fraction < 1.0)) {
      return UsageError("train_fraction must lie in (0,1)");
    }
    if (data.hidden < 0) return UsageError("hidden must be >= 0");
    if (!(stop.target_accuracy > 0.0 && stop.target_accuracy <= 1.0)) {
      return UsageError("target_accuracy must lie in (0,1]");
    }
    if (stop.sustain_evals < 1) return UsageError("sustain_evals must be >= 1");
    if (stop.max_aggregations < 1) {
      return UsageError("max_aggregations must be >= 1");
    }
    if (!(stop.max_virtual_time >= 0.0)) {
      return UsageError("max_virtual_time must be >= 0");
    }
    if (seeds.empty()) return UsageError("seeds must not be empty");
    return absl::OkStatus();
  }
};

}  // namespace fedhet::experiment

#endif  // FEDHET_EXPERIMENT_CONFIG_H_
