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

// Server-side aggregation: synchronous FedAvg and staleness-aware FedAsync.

#ifndef FEDHET_FEDERATION_SERVER_H_
#define FEDHET_FEDERATION_SERVER_H_

#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"
#include "fedhet/status.h"
#include "fedhet/task/model.h"

namespace fedhet::federation {

enum class AggregationMode { kSynchronous, kAsynchronous };

// What one unit of staleness counts.
//   kPerUpdate: every applied update (tau = version - based_on_version).
//   kPerRound:  server rounds; a round closes when an update trained on the
//               current round's model arrives, so the fastest client sets the
//               cadence (tau = round - based_on_round).
enum class StalenessClock { kPerUpdate, kPerRound };

inline absl::string_view ModeName(AggregationMode m) {
  return m == AggregationMode::kSynchronous ? "sync" : "async";
}
inline absl::string_view ClockName(StalenessClock c) {
  return c == StalenessClock::kPerUpdate ? "update" : "round";
}

struct UpdateMessage {
  int client_id = 0;
  task::ModelParameters params;
  std::int64_t based_on_version = 0;  // t_k
  std::int64_t based_on_round = 0;
  double sent_at = 0.0;
  std::int64_t shard_size = 1;  // N_k
};

struct UpdateLogEntry {
  int client_id = 0;
  std::int64_t applied_at_version = 0;  // global version the update was mixed into
  std::int64_t staleness = 0;
  double weight = 0.0;  // alpha_k (async) or p_k (sync)
};

struct ServerState {
  task::ModelParameters global;
  AggregationMode mode = AggregationMode::kAsynchronous;
  double alpha = 0.4;
  bool staleness_aware = true;
  StalenessClock clock = StalenessClock::kPerRound;
  std::int64_t round = 0;
  std::set<int> registered;
  std::set<int> pending;                    // synchronous only
  std::vector<UpdateMessage> round_buffer;  // synchronous only
  std::vector<UpdateLogEntry> update_log;

  std::int64_t version() const { return global.version; }
};

inline absl::StatusOr<ServerState> MakeServer(task::ModelParameters initial,
                                              AggregationMode mode,
                                              double alpha,
                                              std::span<const int> clients) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    return UsageError("alpha must lie in (0,1]");
  }
  if (absl::Status s = initial.Validate(); !s.ok()) return s;
  ServerState server;
  server.global = std::move(initial);
  server.mode = mode;
  server.alpha = alpha;
  server.registered.insert(clients.begin(), clients.end());
  return server;
}

// alpha_k = alpha / (1 + tau)
inline double StalenessWeight(double alpha, std::int64_t tau) {
  return alpha / (1.0 + static_cast<double>(tau));
}

// sum_k p_k W_k with p_k = N_k / sum_j N_j. All updates must share a base
// version; the result carries base version + 1.
inline absl::StatusOr<task::ModelParameters> FedAvgAggregate(
    std::span<const UpdateMessage> updates) {
  if (updates.empty()) return UsageError("no updates to aggregate");
  const UpdateMessage& first = updates.front();
  double total = 0.0;
  for (const UpdateMessage& u : updates) {
    if (u.based_on_version != first.based_on_version) {
      return ProtocolError(absl::StrCat(
          "mixed base versions in a synchronous round: ", u.based_on_version,
          " vs ", first.based_on_version));
    }
    if (u.params.layout != first.params.layout ||
        u.params.values.size() != first.params.values.size()) {
      return UsageError("updates have different parameter layouts");
    }
    if (u.shard_size < 1) return UsageError("shard size must be positive");
    total += static_cast<double>(u.shard_size);
  }
  task::ModelParameters out;
  out.layout = first.params.layout;
  out.values.assign(first.params.values.size(), 0.0);
  out.version = first.based_on_version + 1;
  for (const UpdateMessage& u : updates) {
    const double p = static_cast<double>(u.shard_size) / total;
    for (std::size_t j = 0; j < out.values.size(); ++j) {
      out.values[j] += p * u.params.values[j];
    }
  }
  return out;
}

inline std::int64_t Staleness(const ServerState& server,
                              const UpdateMessage& update) {
  return server.clock == StalenessClock::kPerUpdate
             ? server.version() - update.based_on_version
             : server.round - update.based_on_round;
}

// In-place FedAsync step: W <- (1 - alpha_k) W + alpha_k W_k, version + 1.
inline absl::Status ApplyAsyncUpdate(ServerState& server,
                                     const UpdateMessage& update) {
  if (server.mode != AggregationMode::kAsynchronous) {
    return ProtocolError("asynchronous update sent to a synchronous server");
  }
  if (!server.registered.contains(update.client_id)) {
    return ProtocolError(
        absl::StrCat("update from unknown client ", update.client_id));
  }
  if (update.based_on_version > server.version() ||
      update.based_on_round > server.round) {
    return ProtocolError("update is based on a future global version");
  }
  if (update.params.values.size() != server.global.values.size()) {
    return UsageError("update has a different parameter layout");
  }
  const std::int64_t tau = Staleness(server, update);
  const double weight =
      server.staleness_aware ? StalenessWeight(server.alpha, tau) : server.alpha;
  std::vector<double>& w = server.global.values;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = (1.0 - weight) * w[j] + weight * update.params.values[j];
  }
  ++server.global.version;
  if (update.based_on_round == server.round) ++server.round;
  server.update_log.push_back(
      {update.client_id, server.global.version, tau, weight});
  return absl::OkStatus();
}

inline absl::StatusOr<ServerState> FedAsyncApply(ServerState server,
                                                 const UpdateMessage& update) {
  if (absl::Status s = ApplyAsyncUpdate(server, update); !s.ok()) return s;
  return server;
}

// Synchronous round protocol: open with the selected clients, submit updates
// or mark dropouts until nothing is pending, then close.

inline absl::Status OpenSyncRound(ServerState& server,
                                  std::span<const int> participants) {
  if (server.mode != AggregationMode::kSynchronous) {
    return ProtocolError("synchronous round on an asynchronous server");
  }
  if (!server.pending.empty() || !server.round_buffer.empty()) {
    return ProtocolError("previous synchronous round is still open");
  }
  for (int k : participants) {
    if (!server.registered.contains(k)) {
      return ProtocolError(absl::StrCat("unknown client ", k));
    }
    server.pending.insert(k);
  }
  return absl::OkStatus();
}

inline absl::Status SubmitSyncUpdate(ServerState& server,
                                     UpdateMessage update) {
  if (server.mode != AggregationMode::kSynchronous) {
    return ProtocolError("synchronous update sent to an asynchronous server");
  }
  if (!server.pending.contains(update.client_id)) {
    return ProtocolError(absl::StrCat("client ", update.client_id,
                                      " is not expected in this round"));
  }
  if (update.based_on_version != server.version()) {
    return ProtocolError(absl::StrCat("update based on version ",
                                      update.based_on_version,
                                      ", round is at ", server.version()));
  }
  server.pending.erase(update.client_id);
  server.round_buffer.push_back(std::move(update));
  return absl::OkStatus();
}

// A client that dropped mid-round leaves this round's selected set.
inline void MarkDropped(ServerState& server, int client_id) {
  server.pending.erase(client_id);
}

inline bool SyncRoundReady(const ServerState& server) {
  return server.pending.empty();
}

// Aggregates the buffered round. Returns false when every selected client
// dropped (the round is discarded and the version is unchanged).
inline absl::StatusOr<bool> CloseSyncRound(ServerState& server) {
  if (!server.pending.empty()) {
    return ProtocolError("round closed while clients are still pending");
  }
  if (server.round_buffer.empty()) return false;
  absl::StatusOr<task::ModelParameters> next =
      FedAvgAggregate(server.round_buffer);
  if (!next.ok()) return next.status();
  double total = 0.0;
  for (const UpdateMessage& u : server.round_buffer) {
    total += static_cast<double>(u.shard_size);
  }
  for (const UpdateMessage& u : server.round_buffer) {
    server.update_log.push_back({u.client_id, next->version, 0,
                                 static_cast<double>(u.shard_size) / total});
  }
  server.global = *std::move(next);
  ++server.round;
  server.round_buffer.clear();
  return true;
}

// Whole synchronous round from already-collected updates.
inline absl::StatusOr<ServerState> SyncRound(
    ServerState server, std::span<const UpdateMessage> updates) {
  std::vector<int> ids;
  for (const UpdateMessage& u : updates) ids.push_back(u.client_id);
  if (absl::Status s = OpenSyncRound(server, ids); !s.ok()) return s;
  for (const UpdateMessage& u : updates) {
    if (absl::Status s = SubmitSyncUpdate(server, u); !s.ok()) return s;
  }
  absl::StatusOr<bool> closed = CloseSyncRound(server);
  if (!closed.ok()) return closed.status();
  if (!*closed) return RunAbortedError("synchronous round had no survivors");
  return server;
}

}  // namespace fedhet::federation

#endif  // FEDHET_FEDERATION_SERVER_H_
