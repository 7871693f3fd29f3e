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
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fedhet/experiment/config.h"
#include "fedhet/sim/device_profile.h"
#include "fedhet/sim/event_queue.h"
#include "fedhet/sim/simulator.h"
#include "fedhet/status.h"
#include "gtest/gtest.h"

namespace fedhet::sim {
namespace {

using experiment::ExperimentConfig;
using federation::AggregationMode;
using federation::StalenessClock;

// Small model and data; timing behavior does not depend on either.
ExperimentConfig Small(AggregationMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.data.dim = 8;
  c.data.hidden = 8;
  c.data.per_class = 60;
  c.dp.noise_multiplier = 0.0;
  c.stop.stop_at_target = false;
  return c;
}

ExperimentConfig ByTime(AggregationMode mode, double horizon) {
  ExperimentConfig c = Small(mode);
  c.stop.max_virtual_time = horizon;
  c.stop.max_aggregations = 1000000;
  return c;
}

DeviceProfile Fixed(const char* name, double train) {
  return {name, train, 0.0, 0.01, 0.0, train};
}

TEST(DeviceProfileTest, ZeroJitterIsExactMean) {
  std::mt19937_64 rng(1);
  DeviceProfile p = Fixed("x", 42.0);
  for (int i = 0; i < 10; ++i) {
    RoundTiming t = SampleRoundTiming(p, rng);
    EXPECT_EQ(t.train, 42.0);
    EXPECT_EQ(t.exchange, 0.01);
  }
}

TEST(DeviceProfileTest, SampledMeansMatchTiers) {
  std::mt19937_64 rng(2);
  std::vector<double> mean;
  for (const DeviceProfile& p : DefaultTierProfiles()) {
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) sum += SampleRoundDuration(p, rng);
    mean.push_back(sum / 20000.0);
    const double expected = p.train_time_mean + p.exchange_latency_mean;
    EXPECT_NEAR(mean.back() / expected, 1.0, 0.02) << p.tier_name;
  }
  EXPECT_GE(mean[0] / mean[4], 6.0);
  EXPECT_LE(mean[0] / mean[4], 9.0);
  EXPECT_GE(mean[4], 65.0);
  EXPECT_LE(mean[4], 75.0);
}

TEST(DeviceProfileTest, ValidationRejectsBadValues) {
  DeviceProfile p = Fixed("x", 1.0);
  EXPECT_TRUE(p.Validate().ok());
  p.dropout_prob_per_round = 1.0;
  EXPECT_EQ(p.Validate().code(), absl::StatusCode::kInvalidArgument);
  p = Fixed("x", 0.0);
  EXPECT_FALSE(p.Validate().ok());
  p = Fixed("x", 1.0);
  p.train_time_jitter = -0.1;
  EXPECT_FALSE(p.Validate().ok());
}

TEST(EventQueueTest, OrdersByTimeThenKindThenClientThenInsertion) {
  EventQueue q;
  q.Schedule(2.0, EventKind::kUpdateArrival, 0, 0.0);
  q.Schedule(1.0, EventKind::kBroadcastDelivery, 0, 0.0);
  q.Schedule(1.0, EventKind::kEvaluationTick, -1, 0.0);
  q.Schedule(1.0, EventKind::kRejoin, 3, 0.0);
  q.Schedule(1.0, EventKind::kDropout, 1, 0.0);
  q.Schedule(1.0, EventKind::kUpdateArrival, 4, 0.0);
  q.Schedule(1.0, EventKind::kUpdateArrival, 2, 0.5);
  q.Schedule(1.0, EventKind::kUpdateArrival, 2, 0.25);
  std::vector<std::pair<EventKind, int>> got;
  std::vector<double> sched;
  while (!q.empty()) {
    SimEvent e = q.Pop();
    got.emplace_back(e.kind, e.client_id);
    sched.push_back(e.scheduled_at);
  }
  std::vector<std::pair<EventKind, int>> want = {
      {EventKind::kUpdateArrival, 2},  {EventKind::kUpdateArrival, 2},
      {EventKind::kUpdateArrival, 4},  {EventKind::kDropout, 1},
      {EventKind::kRejoin, 3},         {EventKind::kEvaluationTick, -1},
      {EventKind::kBroadcastDelivery, 0}, {EventKind::kUpdateArrival, 0}};
  EXPECT_EQ(got, want);
  EXPECT_EQ(sched[0], 0.5);  // insertion order breaks the remaining tie
  EXPECT_EQ(sched[1], 0.25);
}

class BothModes : public ::testing::TestWithParam<AggregationMode> {};

TEST_P(BothModes, TraceIsCausalAndDeterministic) {
  ExperimentConfig c = ByTime(GetParam(), 3000.0);
  c.record_trace = true;
  c.dp.noise_multiplier = 1.0;
  absl::StatusOr<RunReport> a = sim::Run(c, 5);
  absl::StatusOr<RunReport> b = sim::Run(c, 5);
  absl::StatusOr<RunReport> other = sim::Run(c, 6);
  ASSERT_TRUE(a.ok() && b.ok() && other.ok()) << a.status();
  ASSERT_FALSE(a->trace.empty());
  for (std::size_t i = 0; i < a->trace.size(); ++i) {
    EXPECT_GE(a->trace[i].time, a->trace[i].scheduled_at);
    if (i > 0) {
      EXPECT_GE(a->trace[i].time, a->trace[i - 1].time);
    }
  }
  EXPECT_EQ(a->trace, b->trace);
  EXPECT_NE(a->trace, other->trace);
  ASSERT_EQ(a->trajectory.size(), b->trajectory.size());
  for (std::size_t i = 0; i < a->trajectory.size(); ++i) {
    EXPECT_EQ(a->trajectory[i].accuracy, b->trajectory[i].accuracy);
  }
  for (std::size_t k = 0; k < a->clients.size(); ++k) {
    EXPECT_EQ(a->clients[k].final_epsilon, b->clients[k].final_epsilon);
  }
}

TEST_P(BothModes, UpdatesAreConserved) {
  absl::StatusOr<RunReport> r = sim::Run(ByTime(GetParam(), 5000.0), 3);
  ASSERT_TRUE(r.ok()) << r.status();
  std::int64_t updates = 0, histogram = 0;
  double share = 0.0;
  for (const ClientReport& c : r->clients) {
    updates += c.updates;
    share += c.participation_percent;
    for (const auto& [tau, n] : c.staleness_histogram) histogram += n;
    // Released updates are charged even when the horizon cuts their round.
    EXPECT_GE(c.compositions, c.updates);
    EXPECT_LE(c.compositions, c.updates + 1);
    if (GetParam() == AggregationMode::kAsynchronous) {
      EXPECT_EQ(c.compositions, c.updates);
    }
  }
  EXPECT_EQ(updates, static_cast<std::int64_t>(r->update_log.size()));
  EXPECT_EQ(histogram, updates);
  EXPECT_NEAR(share, 100.0, 1e-9);
  if (GetParam() == AggregationMode::kAsynchronous) {
    EXPECT_EQ(r->aggregations, updates);
  } else {
    EXPECT_LT(r->aggregations, updates);
  }
  EXPECT_EQ(r->update_log.back().applied_at_version, r->aggregations);
  EXPECT_LE(r->end_time, 5000.0);
}

TEST_P(BothModes, AccountingFollowsReleases) {
  ExperimentConfig c = ByTime(GetParam(), 3000.0);
  c.dp.noise_multiplier = 1.0;
  c.composition = experiment::Composition::kPerStep;
  absl::StatusOr<RunReport> r = sim::Run(c, 1);
  ASSERT_TRUE(r.ok()) << r.status();
  for (const ClientReport& cl : r->clients) {
    const std::int64_t steps =
        dp::MechanismApplications(static_cast<std::size_t>(cl.train_size), c.dp);
    const auto releases = static_cast<std::int64_t>(cl.epsilon_trajectory.size());
    EXPECT_GE(releases, cl.updates);
    EXPECT_EQ(cl.mechanism_applications, releases * steps);
    EXPECT_EQ(cl.compositions, cl.mechanism_applications);
    for (std::size_t i = 1; i < cl.epsilon_trajectory.size(); ++i) {
      EXPECT_GT(cl.epsilon_trajectory[i].value, cl.epsilon_trajectory[i - 1].value);
    }
    EXPECT_TRUE(std::isfinite(cl.final_epsilon));
  }
  c.dp.noise_multiplier = 0.0;
  absl::StatusOr<RunReport> open = sim::Run(c, 1);
  ASSERT_TRUE(open.ok());
  for (const ClientReport& cl : open->clients) {
    EXPECT_TRUE(std::isinf(cl.final_epsilon));
    EXPECT_TRUE(cl.epsilon_trajectory.empty());
  }
}

INSTANTIATE_TEST_SUITE_P(Modes, BothModes,
                         ::testing::Values(AggregationMode::kSynchronous,
                                           AggregationMode::kAsynchronous));

TEST(SimulatorTest, HomogeneousSyncSharesEqually) {
  ExperimentConfig c = Small(AggregationMode::kSynchronous);
  c.clients.assign(5, Fixed("same", 10.0));
  c.stop.max_aggregations = 40;
  absl::StatusOr<RunReport> r = sim::Run(c, 2);
  ASSERT_TRUE(r.ok()) << r.status();
  EXPECT_EQ(r->aggregations, 40);
  for (const ClientReport& cl : r->clients) {
    EXPECT_DOUBLE_EQ(cl.participation_percent, 20.0);
    EXPECT_EQ(cl.updates, 40);
    EXPECT_EQ(MeanStaleness(cl), 0.0);
  }
  EXPECT_EQ(StalenessTrace(*r).status().code(), absl::StatusCode::kInvalidArgument);
}

TEST(SimulatorTest, SyncRoundsWaitForSlowestClient) {
  ExperimentConfig c = Small(AggregationMode::kSynchronous);
  c.clients = {Fixed("fast", 10.0), Fixed("slow", 50.0)};
  c.stop.max_aggregations = 6;
  absl::StatusOr<RunReport> r = sim::Run(c, 2);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r->end_time, 6 * 50.01, 1e-9);
  EXPECT_EQ(r->clients[0].updates, r->clients[1].updates);
}

TEST(SimulatorTest, TwoSpeedAsyncStaleness) {
  ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 4000.0);
  c.staleness_clock = StalenessClock::kPerUpdate;
  c.clients = {Fixed("fast", 10.0), Fixed("slow", 20.0)};
  c.clients[0].train_time_jitter = 0.01;
  c.clients[1].train_time_jitter = 0.01;
  absl::StatusOr<RunReport> r = sim::Run(c, 4);
  ASSERT_TRUE(r.ok());
  std::vector<double> tau = *StalenessTrace(*r);
  // Between two slow arrivals the fast client lands about twice, and between
  // two fast arrivals the slow one lands about half the time.
  EXPECT_NEAR(tau[0], 0.5, 0.1);
  EXPECT_NEAR(tau[1], 2.0, 0.1);
  const double ratio = static_cast<double>(r->clients[0].updates) /
                       static_cast<double>(r->clients[1].updates);
  EXPECT_NEAR(ratio, 2.0, 0.05);
}

TEST(SimulatorTest, DefaultTiersUpdateRatio) {
  ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 30000.0);
  double fast = 0.0, slow = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    absl::StatusOr<RunReport> r = sim::Run(c, seed);
    ASSERT_TRUE(r.ok());
    slow += static_cast<double>(r->clients[0].updates);
    fast += static_cast<double>(r->clients[4].updates);
  }
  EXPECT_GE(fast / slow, 6.0);
  EXPECT_LE(fast / slow, 9.0);
}

TEST(SimulatorTest, DefaultTiersStalenessOrdering) {
  ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 20000.0);
  absl::StatusOr<RunReport> r = sim::Run(c, 1);
  ASSERT_TRUE(r.ok());
  std::vector<double> tau = *StalenessTrace(*r);
  EXPECT_LE(tau[4], 1.0);
  EXPECT_GT(tau[0], tau[2]);
  EXPECT_GT(tau[2], tau[3]);
  EXPECT_GT(tau[3], tau[4]);
}

TEST(SimulatorTest, SingleClientAsyncIsNeverStale) {
  for (StalenessClock clock : {StalenessClock::kPerRound, StalenessClock::kPerUpdate}) {
    ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 2000.0);
    c.staleness_clock = clock;
    c.clients = {DefaultTierProfiles()[3]};
    absl::StatusOr<RunReport> r = sim::Run(c, 1);
    ASSERT_TRUE(r.ok()) << r.status();
    EXPECT_EQ(r->clients[0].participation_percent, 100.0);
    EXPECT_EQ(MeanStaleness(r->clients[0]), 0.0);
    EXPECT_GT(r->clients[0].updates, 20);
  }
}

TEST(SimulatorTest, DropoutRateOverSixtyRounds) {
  ExperimentConfig c = Small(AggregationMode::kSynchronous);
  c.stop.max_aggregations = 60;
  double t1 = 0.0, t2 = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    absl::StatusOr<RunReport> r = sim::Run(c, seed);
    ASSERT_TRUE(r.ok());
    t1 += static_cast<double>(r->clients[0].dropouts) / 10.0;
    t2 += static_cast<double>(r->clients[1].dropouts) / 10.0;
    EXPECT_EQ(r->clients[2].dropouts + r->clients[3].dropouts +
                  r->clients[4].dropouts,
              0);
  }
  EXPECT_NEAR(t1, 3.0, 2.0);
  EXPECT_NEAR(t2, 2.0, 2.0);
}

TEST(SimulatorTest, TimingIsIndependentOfAlpha) {
  // Closed-loop timing never reads the model, so update counts are identical.
  ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 8000.0);
  std::vector<std::int64_t> reference;
  for (double alpha : {0.2, 0.4, 0.8, 1.0}) {
    c.alpha = alpha;
    absl::StatusOr<RunReport> r = sim::Run(c, 9);
    ASSERT_TRUE(r.ok());
    std::vector<std::int64_t> updates;
    for (const ClientReport& cl : r->clients) updates.push_back(cl.updates);
    if (reference.empty()) reference = updates;
    EXPECT_EQ(updates, reference) << "alpha " << alpha;
  }
}

TEST(SimulatorTest, PerUpdateClockCountsInterveningUpdates) {
  ExperimentConfig c = ByTime(AggregationMode::kAsynchronous, 5000.0);
  c.staleness_clock = StalenessClock::kPerUpdate;
  absl::StatusOr<RunReport> r = sim::Run(c, 2);
  ASSERT_TRUE(r.ok());
  // Replay the log: a client's staleness is the number of updates applied
  // since its previous one was applied (closed loop, so it trained on that).
  std::vector<std::int64_t> last(r->clients.size(), 0);
  for (const federation::UpdateLogEntry& e : r->update_log) {
    const auto k = static_cast<std::size_t>(e.client_id);
    EXPECT_EQ(e.staleness, e.applied_at_version - 1 - last[k]);
    last[k] = e.applied_at_version;
  }
}

TEST(SimulatorTest, StopsAtSustainedTarget) {
  ExperimentConfig c = Small(AggregationMode::kSynchronous);
  c.stop.stop_at_target = true;
  c.stop.target_accuracy = 0.6;
  absl::StatusOr<RunReport> r = sim::Run(c, 1);
  ASSERT_TRUE(r.ok());
  ASSERT_TRUE(r->reached_target);
  EXPECT_LE(r->time_to_target, r->end_time);
  int above = 0;
  for (const TrajectoryPoint& p : r->trajectory) {
    if (p.aggregation >= r->aggregations_to_target) {
      EXPECT_GE(p.accuracy, 0.6);
      ++above;
    }
  }
  EXPECT_EQ(above, c.stop.sustain_evals);
}

TEST(SimulatorTest, EveryoneDroppingAborts) {
  ExperimentConfig c = Small(AggregationMode::kAsynchronous);
  for (DeviceProfile& p : c.clients) p.dropout_prob_per_round = 0.999999999;
  EXPECT_EQ(sim::Run(c, 1).status().code(), absl::StatusCode::kUnavailable);
  ExperimentConfig early = ByTime(AggregationMode::kSynchronous, 1.0);
  EXPECT_EQ(sim::Run(early, 1).status().code(), absl::StatusCode::kUnavailable);
}

TEST(SimulatorTest, InvalidConfigIsRejected) {
  ExperimentConfig c = Small(AggregationMode::kAsynchronous);
  c.alpha = 1.5;
  EXPECT_EQ(sim::Run(c, 1).status().code(), absl::StatusCode::kInvalidArgument);
}

}  // namespace
}  // namespace fedhet::sim
