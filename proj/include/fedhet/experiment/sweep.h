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
#ifndef FEDHET_EXPERIMENT_SWEEP_H_
#define FEDHET_EXPERIMENT_SWEEP_H_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "fedhet/experiment/config.h"
#include "fedhet/experiment/config_io.h"
#include "fedhet/sim/simulator.h"
#include "fedhet/status.h"

namespace fedhet::experiment {

struct RunOutcome {
  std::uint64_t seed = 0;
  std::optional<sim::RunReport> report;  // empty when the run failed
  std::string error;
};

struct SweepCell {
  int index = 0;
  std::vector<std::pair<std::string, std::string>> assignment;
  int config_id = 0;    // into SweepBundle::configs
  int baseline_id = 0;  // same config with sigma = 0
  bool failed = false;
  std::string failure;  // first failing seed's error
};

// Every distinct config that was executed, with one outcome per seed.
struct SweepBundle {
  ExperimentConfig base;
  std::vector<SweepAxis> axes;
  std::vector<ExperimentConfig> configs;
  std::vector<std::vector<RunOutcome>> outcomes;
  std::vector<SweepCell> cells;

  const std::vector<RunOutcome>& RunsOf(const SweepCell& c) const {
    return outcomes[static_cast<std::size_t>(c.config_id)];
  }
  const std::vector<RunOutcome>& BaselineOf(const SweepCell& c) const {
    return outcomes[static_cast<std::size_t>(c.baseline_id)];
  }
  const ExperimentConfig& ConfigOf(const SweepCell& c) const {
    return configs[static_cast<std::size_t>(c.config_id)];
  }
};

struct SweepOptions {
  int jobs = 1;
};

namespace internal {

inline int InternConfig(const ExperimentConfig& config,
                        std::vector<ExperimentConfig>& configs,
                        std::map<std::string, int>& index) {
  const std::string key = FormatConfig(config);
  auto [it, inserted] = index.emplace(key, static_cast<int>(configs.size()));
  if (inserted) configs.push_back(config);
  return it->second;
}

}  // namespace internal

// Expands the Cartesian product of `axes` (first axis outermost) over `base`.
inline absl::StatusOr<std::vector<std::pair<
    std::vector<std::pair<std::string, std::string>>, ExperimentConfig>>>
ExpandAxes(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<std::pair<std::vector<std::pair<std::string, std::string>>,
                        ExperimentConfig>>
      cells = {{{}, base}};
  for (const SweepAxis& axis : axes) {
    if (axis.values.empty()) {
      return UsageError(absl::StrCat("sweep axis ", axis.key, " has no values"));
    }
    decltype(cells) next;
    for (const auto& [assignment, config] : cells) {
      for (const std::string& v : axis.values) {
        ExperimentConfig c = config;
        if (absl::Status s = SetConfigKey(c, axis.key, v); !s.ok()) return s;
        auto a = assignment;
        a.emplace_back(axis.key, v);
        next.emplace_back(std::move(a), std::move(c));
      }
    }
    cells = std::move(next);
  }
  for (auto& [assignment, config] : cells) {
    if (absl::Status s = config.Validate(); !s.ok()) {
      std::string where;
      for (const auto& [k, v] : assignment) absl::StrAppend(&where, k, "=", v, " ");
      return UsageError(absl::StrCat("sweep cell ", where, ": ", s.message()));
    }
  }
  return cells;
}

// Runs every cell of the sweep for every seed, plus the sigma = 0 runs needed
// for paired accuracy degradation. A failing run marks its cell failed and
// the sweep continues. Results do not depend on `options.jobs`.
inline absl::StatusOr<SweepBundle> RunSweep(const ExperimentConfig& base,
                                            const std::vector<SweepAxis>& axes,
                                            const SweepOptions& options = {}) {
  if (absl::Status s = base.Validate(); !s.ok()) return s;
  if (options.jobs < 1) return UsageError("jobs must be >= 1");
  auto expanded = ExpandAxes(base, axes);
  if (!expanded.ok()) return expanded.status();

  SweepBundle bundle;
  bundle.base = base;
  bundle.axes = axes;
  std::map<std::string, int> index;
  for (auto& [assignment, config] : *expanded) {
    SweepCell cell;
    cell.index = static_cast<int>(bundle.cells.size());
    cell.assignment = assignment;
    cell.config_id = internal::InternConfig(config, bundle.configs, index);
    ExperimentConfig baseline = config;
    baseline.dp.noise_multiplier = 0.0;
    cell.baseline_id = internal::InternConfig(baseline, bundle.configs, index);
    bundle.cells.push_back(std::move(cell));
  }

  std::vector<std::pair<int, int>> jobs;  // (config id, seed index)
  bundle.outcomes.resize(bundle.configs.size());
  for (std::size_t c = 0; c < bundle.configs.size(); ++c) {
    const std::size_t n = bundle.configs[c].seeds.size();
    bundle.outcomes[c].resize(n);
    for (std::size_t s = 0; s < n; ++s) {
      jobs.emplace_back(static_cast<int>(c), static_cast<int>(s));
    }
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      const auto [c, s] = jobs[j];
      const ExperimentConfig& config = bundle.configs[static_cast<std::size_t>(c)];
      RunOutcome& out =
          bundle.outcomes[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)];
      out.seed = config.seeds[static_cast<std::size_t>(s)];
      absl::StatusOr<sim::RunReport> r = sim::Run(config, out.seed);
      if (r.ok()) {
        out.report = *std::move(r);
      } else {
        out.error = r.status().ToString();
      }
    }
  };
  const int threads =
      std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  for (SweepCell& cell : bundle.cells) {
    for (const RunOutcome& o : bundle.RunsOf(cell)) {
      if (!o.report.has_value()) {
        cell.failed = true;
        cell.failure = absl::StrCat("seed ", o.seed, ": ", o.error);
        break;
      }
    }
  }
  return bundle;
}

// Mean and sample standard deviation; stddev is absent for fewer than two
// values and whenever a value is infinite.
struct Stat {
  double mean = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> stddev;
  int n = 0;
};

inline Stat Summarize(const std::vector<double>& values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  double sum = 0.0;
  bool finite = true;
  for (double v : values) {
    sum += v;
    finite = finite && std::isfinite(v);
  }
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2 && finite) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

struct ClientSummary {
  int client_id = 0;
  std::string tier;
  Stat epsilon;
  Stat accuracy_loss;  // paired by seed against the sigma = 0 run
  Stat local_accuracy;
  Stat participation_percent;
  Stat updates;
  Stat mean_staleness;
};

struct CellSummary {
  Stat final_accuracy;
  Stat accuracy_loss;  // pooled, paired by seed
  Stat time_to_target;  // over runs that reached the target
  int reached = 0;
  int runs = 0;
  std::vector<ClientSummary> clients;
};

// Per-seed accuracy loss for one client (or the pooled model when
// `client` < 0); NaN when the baseline run for that seed failed.
inline double PairedLoss(const RunOutcome& run, const RunOutcome& baseline,
                         int client) {
  if (!run.report || !baseline.report) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (client < 0) {
    return baseline.report->final_accuracy - run.report->final_accuracy;
  }
  const auto k = static_cast<std::size_t>(client);
  return baseline.report->clients[k].final_local_accuracy -
         run.report->clients[k].final_local_accuracy;
}

inline CellSummary SummarizeCell(const SweepBundle& bundle,
                                 const SweepCell& cell) {
  const std::vector<RunOutcome>& runs = bundle.RunsOf(cell);
  const std::vector<RunOutcome>& base = bundle.BaselineOf(cell);
  const ExperimentConfig& config = bundle.ConfigOf(cell);
  CellSummary out;
  std::vector<double> final_acc, loss, ttt;
  const std::size_t k_clients = config.clients.size();
  std::vector<std::vector<double>> eps(k_clients), closs(k_clients),
      local(k_clients), pp(k_clients), upd(k_clients), tau(k_clients);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!runs[i].report) continue;
    const sim::RunReport& r = *runs[i].report;
    ++out.runs;
    final_acc.push_back(r.final_accuracy);
    if (const double l = PairedLoss(runs[i], base[i], -1); !std::isnan(l)) {
      loss.push_back(l);
    }
    if (r.reached_target) {
      ++out.reached;
      ttt.push_back(r.time_to_target);
    }
    for (std::size_t k = 0; k < k_clients; ++k) {
      const sim::ClientReport& c = r.clients[k];
      eps[k].push_back(c.final_epsilon);
      if (const double l = PairedLoss(runs[i], base[i], static_cast<int>(k));
          !std::isnan(l)) {
        closs[k].push_back(l);
      }
      local[k].push_back(c.final_local_accuracy);
      pp[k].push_back(c.participation_percent);
      upd[k].push_back(static_cast<double>(c.updates));
      tau[k].push_back(sim::MeanStaleness(c));
    }
  }
  out.final_accuracy = Summarize(final_acc);
  out.accuracy_loss = Summarize(loss);
  out.time_to_target = Summarize(ttt);
  for (std::size_t k = 0; k < k_clients; ++k) {
    ClientSummary c;
    c.client_id = static_cast<int>(k);
    c.tier = config.clients[k].tier_name;
    c.epsilon = Summarize(eps[k]);
    c.accuracy_loss = Summarize(closs[k]);
    c.local_accuracy = Summarize(local[k]);
    c.participation_percent = Summarize(pp[k]);
    c.updates = Summarize(upd[k]);
    c.mean_staleness = Summarize(tau[k]);
    out.clients.push_back(std::move(c));
  }
  return out;
}

}  // namespace fedhet::experiment

#endif  // FEDHET_EXPERIMENT_SWEEP_H_
