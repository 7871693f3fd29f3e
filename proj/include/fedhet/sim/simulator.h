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

// Discrete-event simulation of one federated training run on a virtual clock.
//
// Clients follow the participation protocol: receive the global model, run
// DP-SGD locally, compose their accountant, and send the result back. In
// synchronous mode the server waits for every non-dropped client of the round
// and applies FedAvg; in asynchronous mode each arrival is mixed in at once and
// the sender immediately receives the fresh model (closed loop).

#ifndef FEDHET_SIM_SIMULATOR_H_
#define FEDHET_SIM_SIMULATOR_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "fedhet/dp/dp_sgd.h"
#include "fedhet/experiment/config.h"
#include "fedhet/federation/server.h"
#include "fedhet/privacy/accountant.h"
#include "fedhet/random.h"
#include "fedhet/sim/device_profile.h"
#include "fedhet/sim/event_queue.h"
#include "fedhet/status.h"
#include "fedhet/task/dataset.h"
#include "fedhet/task/model.h"

namespace fedhet::sim {

struct TrajectoryPoint {
  std::int64_t aggregation = 0;
  double time = 0.0;
  double accuracy = 0.0;
};

struct TimedValue {
  double time = 0.0;
  double value = 0.0;
};

struct ClientReport {
  int client_id = 0;
  std::string tier;
  std::int64_t train_size = 0;
  std::int64_t updates = 0;               // updates aggregated by the server
  double participation_percent = 0.0;     // share of all aggregated updates
  std::map<std::int64_t, std::int64_t> staleness_histogram;
  std::int64_t compositions = 0;          // accountant compositions
  std::int64_t mechanism_applications = 0;
  std::vector<TimedValue> epsilon_trajectory;
  double final_epsilon = std::numeric_limits<double>::infinity();  // sigma = 0
  std::vector<TimedValue> local_accuracy_trajectory;
  double final_local_accuracy = 0.0;
  std::int64_t dropouts = 0;
};

struct TraceEntry {
  double time = 0.0;
  EventKind kind = EventKind::kEvaluationTick;
  int client_id = -1;
  double scheduled_at = 0.0;

  bool operator==(const TraceEntry&) const = default;
};

struct RunReport {
  std::uint64_t seed = 0;
  federation::AggregationMode mode = federation::AggregationMode::kSynchronous;
  std::vector<TrajectoryPoint> trajectory;
  std::vector<ClientReport> clients;
  std::vector<federation::UpdateLogEntry> update_log;
  std::vector<TraceEntry> trace;  // filled when record_trace is set
  std::int64_t aggregations = 0;
  std::int64_t aborted_rounds = 0;
  double end_time = 0.0;
  bool reached_target = false;
  double time_to_target = std::numeric_limits<double>::quiet_NaN();
  std::int64_t aggregations_to_target = -1;
  double final_accuracy = 0.0;
};

namespace internal {

struct ClientRuntime {
  DeviceProfile profile;
  task::ClientShard shard;
  std::mt19937_64 timing_rng;
  bool available = true;  // false between a dropout and its rejoin
  std::int64_t rounds_started = 0;
  std::optional<federation::UpdateMessage> in_flight;
  std::int64_t in_flight_steps = 0;
  std::optional<privacy::AccountantState> accountant;
  const privacy::MomentProfile* moments = nullptr;
};

class Simulation {
 public:
  Simulation(const experiment::ExperimentConfig& config, std::uint64_t seed)
      : config_(config), seed_(seed) {}

  absl::StatusOr<RunReport> Execute() {
    if (absl::Status s = Setup(); !s.ok()) return s;
    if (config_.mode == federation::AggregationMode::kAsynchronous) {
      for (int k = 0; k < static_cast<int>(clients_.size()); ++k) {
        Schedule(0.0, EventKind::kBroadcastDelivery, k);
      }
    } else {
      if (absl::Status s = OpenRound(); !s.ok()) return s;
    }
    while (!queue_.empty() && !stopped_) {
      if (config_.stop.max_virtual_time > 0.0 &&
          queue_.top().fire_at > config_.stop.max_virtual_time) {
        now_ = config_.stop.max_virtual_time;
        break;
      }
      const SimEvent ev = queue_.Pop();
      if (ev.fire_at < now_ || ev.fire_at < ev.scheduled_at) {
        return absl::InternalError("event scheduled in the past");
      }
      now_ = ev.fire_at;
      if (config_.record_trace) {
        report_.trace.push_back({ev.fire_at, ev.kind, ev.client_id, ev.scheduled_at});
      }
      absl::Status s = Dispatch(ev);
      if (!s.ok()) return s;
    }
    return Finish();
  }

 private:
  bool IsAsync() const {
    return config_.mode == federation::AggregationMode::kAsynchronous;
  }

  void Schedule(double at, EventKind kind, int client) {
    queue_.Schedule(at, kind, client, now_);
  }

  absl::Status Setup() {
    if (absl::Status s = config_.Validate(); !s.ok()) return s;
    const std::uint64_t data_seed = config_.data.seed.value_or(seed_);
    absl::StatusOr<task::Dataset> data = task::GenerateSynthetic(
        config_.data.classes, config_.data.dim, config_.data.per_class,
        config_.data.separation, DeriveSeed(data_seed, Stream::kData));
    if (!data.ok()) return data.status();
    const int k_clients = static_cast<int>(config_.clients.size());
    absl::StatusOr<std::vector<task::ClientShard>> shards = task::PartitionIid(
        *data, k_clients, config_.data.train_fraction,
        DeriveSeed(data_seed, Stream::kPartition));
    if (!shards.ok()) return shards.status();

    std::vector<task::Dataset> tests;
    for (const task::ClientShard& s : *shards) tests.push_back(s.test);
    pooled_test_ = task::Concatenate(tests);

    const task::ModelLayout layout{config_.data.dim, config_.data.hidden,
                                   config_.data.classes};
    task::ModelParameters init =
        task::InitParameters(layout, DeriveSeed(seed_, Stream::kInit));
    std::vector<int> ids(static_cast<std::size_t>(k_clients));
    for (int k = 0; k < k_clients; ++k) ids[static_cast<std::size_t>(k)] = k;
    absl::StatusOr<federation::ServerState> server =
        federation::MakeServer(std::move(init), config_.mode, config_.alpha, ids);
    if (!server.ok()) return server.status();
    server_ = *std::move(server);
    server_.staleness_aware = config_.staleness_aware;
    server_.clock = IsAsync() ? config_.staleness_clock
                              : federation::StalenessClock::kPerRound;

    const bool private_run = config_.dp.noise_multiplier > 0.0;
    const std::vector<int> grid = privacy::DefaultLambdaGrid(config_.lambda_max);
    clients_.resize(static_cast<std::size_t>(k_clients));
    report_.clients.resize(static_cast<std::size_t>(k_clients));
    for (int k = 0; k < k_clients; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      ClientRuntime& c = clients_[uk];
      c.profile = config_.clients[uk];
      c.shard = std::move((*shards)[uk]);
      c.timing_rng.seed(DeriveSeed(seed_, Stream::kTiming,
                                   static_cast<std::uint64_t>(k)));
      if (c.shard.train.empty()) {
        return UsageError(absl::StrCat("client ", k, " has no training data"));
      }
      ClientReport& r = report_.clients[uk];
      r.client_id = k;
      r.tier = c.profile.tier_name;
      r.train_size = static_cast<std::int64_t>(c.shard.train.size());
      if (private_run) {
        const double q = std::min(
            1.0, static_cast<double>(config_.dp.batch_size) /
                     static_cast<double>(c.shard.train.size()));
        absl::StatusOr<const privacy::MomentProfile*> m = MomentsFor(q, grid);
        if (!m.ok()) return m.status();
        c.moments = *m;
        c.accountant.emplace(grid);
        r.final_epsilon = 0.0;  // nothing released yet
      }
    }
    report_.seed = seed_;
    report_.mode = config_.mode;
    Evaluate();
    return absl::OkStatus();
  }

  absl::StatusOr<const privacy::MomentProfile*> MomentsFor(
      double q, const std::vector<int>& grid) {
    auto it = moment_cache_.find(q);
    if (it == moment_cache_.end()) {
      privacy::MechanismParams params{q, config_.dp.noise_multiplier, grid};
      absl::StatusOr<privacy::MomentProfile> m =
          privacy::ComputeMomentProfile(params);
      if (!m.ok()) return m.status();
      it = moment_cache_.emplace(q, *std::move(m)).first;
    }
    return &it->second;
  }

  absl::Status Dispatch(const SimEvent& ev) {
    switch (ev.kind) {
      case EventKind::kBroadcastDelivery:
        return OnBroadcast(ev.client_id);
      case EventKind::kUpdateArrival:
        return OnArrival(ev.client_id);
      case EventKind::kDropout:
        return OnDropout(ev.client_id);
      case EventKind::kRejoin:
        return OnRejoin(ev.client_id);
      case EventKind::kEvaluationTick:
        return OnEvaluation();
    }
    return absl::InternalError("unknown event kind");
  }

  // Client receives the current global model and starts a local round.
  absl::Status OnBroadcast(int k) {
    ClientRuntime& c = clients_[static_cast<std::size_t>(k)];
    ClientReport& r = report_.clients[static_cast<std::size_t>(k)];
    const double local_acc = task::Evaluate(server_.global, c.shard.test);
    r.local_accuracy_trajectory.push_back({now_, local_acc});
    r.final_local_accuracy = local_acc;

    const RoundTiming timing = SampleRoundTiming(c.profile, c.timing_rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const bool drops = unit(c.timing_rng) < c.profile.dropout_prob_per_round;
    const double drop_fraction = unit(c.timing_rng);
    const std::int64_t round_index = c.rounds_started++;
    if (drops) {
      c.available = false;
      Schedule(now_ + drop_fraction * timing.total(), EventKind::kDropout, k);
      return absl::OkStatus();
    }

    absl::StatusOr<dp::LocalTrainResult> trained = dp::LocalTrain(
        server_.global, c.shard.train, config_.dp,
        DeriveSeed(seed_, Stream::kTraining, static_cast<std::uint64_t>(k),
                   static_cast<std::uint64_t>(round_index)));
    if (!trained.ok()) return trained.status();
    federation::UpdateMessage msg;
    msg.client_id = k;
    msg.params = std::move(trained->params);
    msg.based_on_version = server_.version();
    msg.based_on_round = server_.round;
    msg.sent_at = now_ + timing.train;
    msg.shard_size = static_cast<std::int64_t>(c.shard.train.size());
    c.in_flight = std::move(msg);
    c.in_flight_steps = trained->mechanism_applications;
    Schedule(now_ + timing.total(), EventKind::kUpdateArrival, k);
    return absl::OkStatus();
  }

  // The accountant is charged when the update leaves the device.
  absl::Status Charge(int k) {
    ClientRuntime& c = clients_[static_cast<std::size_t>(k)];
    ClientReport& r = report_.clients[static_cast<std::size_t>(k)];
    const std::int64_t times =
        config_.composition == experiment::Composition::kPerStep
            ? c.in_flight_steps
            : 1;
    r.compositions += times;
    r.mechanism_applications += c.in_flight_steps;
    if (!c.accountant.has_value()) return absl::OkStatus();
    if (absl::Status s = c.accountant->Add(*c.moments, times); !s.ok()) return s;
    absl::StatusOr<double> eps = privacy::Epsilon(*c.accountant, config_.delta);
    if (!eps.ok()) return eps.status();
    r.epsilon_trajectory.push_back({now_, *eps});
    r.final_epsilon = *eps;
    return absl::OkStatus();
  }

  absl::Status OnArrival(int k) {
    ClientRuntime& c = clients_[static_cast<std::size_t>(k)];
    if (!c.in_flight.has_value()) {
      return absl::InternalError("arrival without an update in flight");
    }
    if (absl::Status s = Charge(k); !s.ok()) return s;
    federation::UpdateMessage msg = *std::move(c.in_flight);
    c.in_flight.reset();
    ClientReport& r = report_.clients[static_cast<std::size_t>(k)];

    if (IsAsync()) {
      if (absl::Status s = federation::ApplyAsyncUpdate(server_, msg); !s.ok()) {
        return s;
      }
      ++r.updates;
      ++r.staleness_histogram[server_.update_log.back().staleness];
      ++report_.aggregations;
      Schedule(now_, EventKind::kEvaluationTick, -1);
      Schedule(now_, EventKind::kBroadcastDelivery, k);
      return absl::OkStatus();
    }
    if (absl::Status s = federation::SubmitSyncUpdate(server_, std::move(msg));
        !s.ok()) {
      return s;
    }
    return MaybeCloseRound();
  }

  absl::Status OnDropout(int k) {
    ++report_.clients[static_cast<std::size_t>(k)].dropouts;
    ++dropouts_without_progress_;
    const ClientRuntime& c = clients_[static_cast<std::size_t>(k)];
    Schedule(now_ + c.profile.rejoin_delay, EventKind::kRejoin, k);
    if (report_.aggregations == 0 &&
        dropouts_without_progress_ > 1000 * static_cast<std::int64_t>(clients_.size())) {
      return RunAbortedError(absl::StrCat(
          "no client completed a round after ", dropouts_without_progress_,
          " dropouts"));
    }
    if (IsAsync()) return absl::OkStatus();
    federation::MarkDropped(server_, k);
    return MaybeCloseRound();
  }

  absl::Status OnRejoin(int k) {
    ClientRuntime& c = clients_[static_cast<std::size_t>(k)];
    c.available = true;
    if (IsAsync()) {
      Schedule(now_, EventKind::kBroadcastDelivery, k);
      return absl::OkStatus();
    }
    if (!round_open_) return OpenRound();
    return absl::OkStatus();
  }

  absl::Status OnEvaluation() {
    Evaluate();
    if (server_.version() >= config_.stop.max_aggregations) stopped_ = true;
    if (config_.stop.stop_at_target && report_.reached_target) stopped_ = true;
    if (!IsAsync() && !round_open_ && !stopped_) return OpenRound();
    return absl::OkStatus();
  }

  void Evaluate() {
    const double acc = task::Evaluate(server_.global, pooled_test_);
    report_.trajectory.push_back({server_.version(), now_, acc});
    if (report_.reached_target) return;
    if (acc >= config_.stop.target_accuracy) {
      if (streak_ == 0) {
        streak_start_time_ = now_;
        streak_start_version_ = server_.version();
      }
      if (++streak_ >= config_.stop.sustain_evals) {
        report_.reached_target = true;
        report_.time_to_target = streak_start_time_;
        report_.aggregations_to_target = streak_start_version_;
      }
    } else {
      streak_ = 0;
    }
  }

  // Synchronous: select every available client and broadcast to it.
  absl::Status OpenRound() {
    std::vector<int> participants;
    for (int k = 0; k < static_cast<int>(clients_.size()); ++k) {
      if (clients_[static_cast<std::size_t>(k)].available) participants.push_back(k);
    }
    if (participants.empty()) return absl::OkStatus();  // idle until a rejoin
    if (absl::Status s = federation::OpenSyncRound(server_, participants);
        !s.ok()) {
      return s;
    }
    round_open_ = true;
    for (int k : participants) Schedule(now_, EventKind::kBroadcastDelivery, k);
    return absl::OkStatus();
  }

  absl::Status MaybeCloseRound() {
    if (!round_open_ || !federation::SyncRoundReady(server_)) {
      return absl::OkStatus();
    }
    std::vector<int> contributors;
    for (const federation::UpdateMessage& u : server_.round_buffer) {
      contributors.push_back(u.client_id);
    }
    absl::StatusOr<bool> closed = federation::CloseSyncRound(server_);
    if (!closed.ok()) return closed.status();
    round_open_ = false;
    if (!*closed) {
      ++report_.aborted_rounds;
      return OpenRound();
    }
    for (int k : contributors) {
      ClientReport& r = report_.clients[static_cast<std::size_t>(k)];
      ++r.updates;
      ++r.staleness_histogram[0];
    }
    ++report_.aggregations;
    Schedule(now_, EventKind::kEvaluationTick, -1);
    return absl::OkStatus();
  }

  absl::StatusOr<RunReport> Finish() {
    if (report_.aggregations == 0) {
      return RunAbortedError("no client ever completed a round");
    }
    report_.end_time = now_;
    report_.final_accuracy = report_.trajectory.back().accuracy;
    std::int64_t total = 0;
    for (const ClientReport& r : report_.clients) total += r.updates;
    for (ClientReport& r : report_.clients) {
      r.participation_percent =
          total > 0 ? 100.0 * static_cast<double>(r.updates) /
                          static_cast<double>(total)
                    : 0.0;
    }
    report_.update_log = server_.update_log;
    return std::move(report_);
  }

  const experiment::ExperimentConfig& config_;
  std::uint64_t seed_;
  federation::ServerState server_;
  std::vector<ClientRuntime> clients_;
  task::Dataset pooled_test_;
  std::map<double, privacy::MomentProfile> moment_cache_;
  EventQueue queue_;
  RunReport report_;
  double now_ = 0.0;
  bool stopped_ = false;
  bool round_open_ = false;
  int streak_ = 0;
  double streak_start_time_ = 0.0;
  std::int64_t streak_start_version_ = 0;
  std::int64_t dropouts_without_progress_ = 0;
};

}  // namespace internal

// Executes one run of `config` under `seed` until the stop rule fires.
inline absl::StatusOr<RunReport> Run(const experiment::ExperimentConfig& config,
                                     std::uint64_t seed) {
  internal::Simulation sim(config, seed);
  return sim.Execute();
}

inline double MeanStaleness(const ClientReport& client) {
  std::int64_t n = 0;
  double sum = 0.0;
  for (const auto& [tau, count] : client.staleness_histogram) {
    n += count;
    sum += static_cast<double>(tau) * static_cast<double>(count);
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

// Mean staleness per client; only defined for asynchronous runs.
inline absl::StatusOr<std::vector<double>> StalenessTrace(
    const RunReport& report) {
  if (report.mode != federation::AggregationMode::kAsynchronous) {
    return UsageError("staleness is only defined for asynchronous runs");
  }
  std::vector<double> out;
  out.reserve(report.clients.size());
  for (const ClientReport& c : report.clients) out.push_back(MeanStaleness(c));
  return out;
}

}  // namespace fedhet::sim

#endif  // FEDHET_SIM_SIMULATOR_H_
