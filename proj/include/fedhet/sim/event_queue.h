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

#ifndef FEDHET_SIM_EVENT_QUEUE_H_
#define FEDHET_SIM_EVENT_QUEUE_H_

#include <cstdint>
#include <queue>
#include <tuple>
#include <vector>

#include "absl/strings/string_view.h"

namespace fedhet::sim {

// Declaration order is the tie-break precedence at equal fire times.
enum class EventKind {
  kUpdateArrival = 0,
  kDropout = 1,
  kRejoin = 2,
  kEvaluationTick = 3,
  kBroadcastDelivery = 4,
};

inline absl::string_view EventKindName(EventKind k) {
  switch (k) {
    case EventKind::kUpdateArrival:
      return "update_arrival";
    case EventKind::kDropout:
      return "dropout";
    case EventKind::kRejoin:
      return "rejoin";
    case EventKind::kEvaluationTick:
      return "evaluation_tick";
    case EventKind::kBroadcastDelivery:
      return "broadcast_delivery";
  }
  return "unknown";
}

struct SimEvent {
  double fire_at = 0.0;
  EventKind kind = EventKind::kEvaluationTick;
  int client_id = -1;  // -1 for server-wide events
  double scheduled_at = 0.0;
  std::uint64_t seq = 0;

  auto Key() const { return std::tuple(fire_at, kind, client_id, seq); }
};

// Min-heap over (fire_at, kind, client_id, insertion order).
class EventQueue {
 public:
  void Schedule(double fire_at, EventKind kind, int client_id,
                double scheduled_at) {
    heap_.push({fire_at, kind, client_id, scheduled_at, next_seq_++});
  }
  bool empty() const { return heap_.empty(); }
  const SimEvent& top() const { return heap_.top(); }
  SimEvent Pop() {
    SimEvent e = heap_.top();
    heap_.pop();
    return e;
  }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.Key() > b.Key();
    }
  };
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace fedhet::sim

#endif  // FEDHET_SIM_EVENT_QUEUE_H_
