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
#ifndef FEDHET_EXPERIMENT_REPORT_H_
#define FEDHET_EXPERIMENT_REPORT_H_

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "fedhet/experiment/config_io.h"
#include "fedhet/experiment/sweep.h"
#include "fedhet/sim/event_queue.h"
#include "fedhet/status.h"
#include "nlohmann/json.hpp"

namespace fedhet::experiment {

inline constexpr char kManifestFormat[] = "fedhet-manifest/1";
inline constexpr char kAccuracyLossDefinition[] =
    "paired by seed: accuracy of the sigma=0 run with the same config and seed "
    "minus accuracy of the run";

// Numeric CSV field: 6 significant digits, "inf" for infinities, empty for
// missing values.
inline std::string Num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return absl::StrFormat("%.6g", v);
}

inline std::string Num(const std::optional<double>& v) {
  return v.has_value() ? Num(*v) : std::string();
}

inline std::string CsvField(absl::string_view s) {
  if (s.find_first_of(",\"\n") == s.npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string ToString() const {
    std::string out = absl::StrJoin(header, ",") + "\n";
    for (const auto& row : rows) {
      std::vector<std::string> quoted;
      quoted.reserve(row.size());
      for (const std::string& f : row) quoted.push_back(CsvField(f));
      absl::StrAppend(&out, absl::StrJoin(quoted, ","), "\n");
    }
    return out;
  }
};

namespace internal {

inline std::vector<std::string> CellKey(const SweepBundle& b,
                                        const SweepCell& c) {
  const ExperimentConfig& config = b.ConfigOf(c);
  return {absl::StrCat(c.index), std::string(federation::ModeName(config.mode)),
          Num(config.alpha), Num(config.dp.noise_multiplier)};
}

inline std::string CellStatus(const SweepCell& c) { return c.failed ? "failed" : "ok"; }

}  // namespace internal

// Per (cell, client): epsilon and paired accuracy loss across seeds.
inline CsvTable PrivacyTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "method", "alpha", "sigma", "client", "tier",
              "epsilon_mean", "epsilon_std", "accuracy_loss_mean",
              "accuracy_loss_std", "seeds", "status"};
  for (const SweepCell& cell : b.cells) {
    const CellSummary s = SummarizeCell(b, cell);
    for (const ClientSummary& c : s.clients) {
      std::vector<std::string> row = internal::CellKey(b, cell);
      row.push_back(absl::StrCat(c.client_id));
      row.push_back(c.tier);
      if (cell.failed) {
        row.insert(row.end(), 4, "");
      } else {
        row.push_back(Num(c.epsilon.mean));
        row.push_back(Num(c.epsilon.stddev));
        row.push_back(Num(c.accuracy_loss.mean));
        row.push_back(Num(c.accuracy_loss.stddev));
      }
      row.push_back(absl::StrCat(s.runs));
      row.push_back(internal::CellStatus(cell));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

inline CsvTable ParticipationTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "method", "alpha", "sigma", "client", "tier",
              "participation_percent_mean", "participation_percent_std",
              "updates_mean", "updates_std", "mean_staleness", "status"};
  for (const SweepCell& cell : b.cells) {
    const CellSummary s = SummarizeCell(b, cell);
    for (const ClientSummary& c : s.clients) {
      std::vector<std::string> row = internal::CellKey(b, cell);
      row.push_back(absl::StrCat(c.client_id));
      row.push_back(c.tier);
      if (cell.failed) {
        row.insert(row.end(), 5, "");
      } else {
        row.push_back(Num(c.participation_percent.mean));
        row.push_back(Num(c.participation_percent.stddev));
        row.push_back(Num(c.updates.mean));
        row.push_back(Num(c.updates.stddev));
        row.push_back(Num(c.mean_staleness.mean));
      }
      row.push_back(internal::CellStatus(cell));
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

// One row per cell, with its axis assignment spelled out.
inline CsvTable CellTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "method", "alpha", "sigma"};
  for (const SweepAxis& a : b.axes) t.header.push_back(absl::StrCat("axis:", a.key));
  for (const char* h :
       {"runs", "reached_target", "final_accuracy_mean", "final_accuracy_std",
        "accuracy_loss_mean", "accuracy_loss_std", "time_to_target_mean",
        "time_to_target_std", "status", "failure"}) {
    t.header.push_back(h);
  }
  for (const SweepCell& cell : b.cells) {
    const CellSummary s = SummarizeCell(b, cell);
    std::vector<std::string> row = internal::CellKey(b, cell);
    for (const auto& [key, value] : cell.assignment) row.push_back(value);
    row.push_back(absl::StrCat(s.runs));
    row.push_back(absl::StrCat(s.reached));
    if (cell.failed) {
      row.insert(row.end(), 6, "");
    } else {
      row.push_back(Num(s.final_accuracy.mean));
      row.push_back(Num(s.final_accuracy.stddev));
      row.push_back(Num(s.accuracy_loss.mean));
      row.push_back(Num(s.accuracy_loss.stddev));
      row.push_back(Num(s.time_to_target.mean));
      row.push_back(Num(s.time_to_target.stddev));
    }
    row.push_back(internal::CellStatus(cell));
    row.push_back(cell.failure);
    t.rows.push_back(std::move(row));
  }
  return t;
}

// Per run: convergence summary.
inline CsvTable ConvergenceTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "seed", "status", "reached_target", "time_to_target",
              "aggregations_to_target", "final_accuracy", "accuracy_loss",
              "end_time", "aggregations", "aborted_rounds", "error"};
  for (const SweepCell& cell : b.cells) {
    const auto& runs = b.RunsOf(cell);
    const auto& base = b.BaselineOf(cell);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      std::vector<std::string> row = {absl::StrCat(cell.index),
                                      absl::StrCat(runs[i].seed)};
      if (!runs[i].report) {
        row.push_back("failed");
        row.insert(row.end(), 8, "");
        row.push_back(runs[i].error);
      } else {
        const sim::RunReport& r = *runs[i].report;
        row.push_back("ok");
        row.push_back(r.reached_target ? "true" : "false");
        row.push_back(Num(r.time_to_target));
        row.push_back(r.reached_target ? absl::StrCat(r.aggregations_to_target)
                                       : std::string());
        row.push_back(Num(r.final_accuracy));
        row.push_back(Num(PairedLoss(runs[i], base[i], -1)));
        row.push_back(Num(r.end_time));
        row.push_back(absl::StrCat(r.aggregations));
        row.push_back(absl::StrCat(r.aborted_rounds));
        row.push_back("");
      }
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

// Per run and client: the values the aggregated tables are computed from.
inline CsvTable RunClientTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "seed", "client", "tier", "train_size", "updates",
              "participation_percent", "epsilon", "local_accuracy",
              "accuracy_loss", "mean_staleness", "dropouts", "compositions",
              "mechanism_applications"};
  for (const SweepCell& cell : b.cells) {
    const auto& runs = b.RunsOf(cell);
    const auto& base = b.BaselineOf(cell);
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (!runs[i].report) continue;
      const sim::RunReport& r = *runs[i].report;
      for (const sim::ClientReport& c : r.clients) {
        t.rows.push_back(
            {absl::StrCat(cell.index), absl::StrCat(runs[i].seed),
             absl::StrCat(c.client_id), c.tier, absl::StrCat(c.train_size),
             absl::StrCat(c.updates), Num(c.participation_percent),
             Num(c.final_epsilon), Num(c.final_local_accuracy),
             Num(PairedLoss(runs[i], base[i], c.client_id)),
             Num(sim::MeanStaleness(c)), absl::StrCat(c.dropouts),
             absl::StrCat(c.compositions),
             absl::StrCat(c.mechanism_applications)});
      }
    }
  }
  return t;
}

inline CsvTable TrajectoryTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "seed", "aggregation", "time", "accuracy"};
  for (const SweepCell& cell : b.cells) {
    for (const RunOutcome& o : b.RunsOf(cell)) {
      if (!o.report) continue;
      for (const sim::TrajectoryPoint& p : o.report->trajectory) {
        t.rows.push_back({absl::StrCat(cell.index), absl::StrCat(o.seed),
                          absl::StrCat(p.aggregation), Num(p.time),
                          Num(p.accuracy)});
      }
    }
  }
  return t;
}

inline CsvTable EpsilonTrajectoryTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "seed", "client", "time", "epsilon"};
  for (const SweepCell& cell : b.cells) {
    for (const RunOutcome& o : b.RunsOf(cell)) {
      if (!o.report) continue;
      for (const sim::ClientReport& c : o.report->clients) {
        for (const sim::TimedValue& v : c.epsilon_trajectory) {
          t.rows.push_back({absl::StrCat(cell.index), absl::StrCat(o.seed),
                            absl::StrCat(c.client_id), Num(v.time),
                            Num(v.value)});
        }
      }
    }
  }
  return t;
}

inline CsvTable TraceTable(const SweepBundle& b) {
  CsvTable t;
  t.header = {"cell", "seed", "time", "kind", "client", "scheduled_at"};
  for (const SweepCell& cell : b.cells) {
    for (const RunOutcome& o : b.RunsOf(cell)) {
      if (!o.report) continue;
      for (const sim::TraceEntry& e : o.report->trace) {
        t.rows.push_back({absl::StrCat(cell.index), absl::StrCat(o.seed),
                          absl::StrFormat("%.17g", e.time),
                          std::string(sim::EventKindName(e.kind)),
                          absl::StrCat(e.client_id),
                          absl::StrFormat("%.17g", e.scheduled_at)});
      }
    }
  }
  return t;
}

inline std::string ManifestJson(const SweepBundle& b,
                                const std::vector<std::string>& files) {
  nlohmann::ordered_json j;
  j["format"] = kManifestFormat;
  j["config"] = FormatConfig(b.base, b.axes);
  j["seeds"] = b.base.seeds;
  nlohmann::ordered_json axes = nlohmann::ordered_json::array();
  for (const SweepAxis& a : b.axes) {
    axes.push_back({{"key", a.key}, {"values", a.values}});
  }
  j["axes"] = axes;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const SweepCell& c : b.cells) {
    nlohmann::ordered_json assignment = nlohmann::ordered_json::object();
    for (const auto& [k, v] : c.assignment) assignment[k] = v;
    cells.push_back({{"index", c.index},
                     {"assignment", assignment},
                     {"status", internal::CellStatus(c)}});
  }
  j["cells"] = cells;
  j["accuracy_loss"] = kAccuracyLossDefinition;
  j["files"] = files;
  return j.dump(2) + "\n";
}

struct Manifest {
  ExperimentConfig config;
  std::vector<SweepAxis> axes;
};

inline absl::StatusOr<Manifest> ParseManifest(absl::string_view text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return UsageError("manifest is not a JSON object");
  }
  if (!j.contains("format") || j["format"] != kManifestFormat) {
    return UsageError(absl::StrCat("manifest format must be ", kManifestFormat));
  }
  if (!j.contains("config") || !j["config"].is_string()) {
    return UsageError("manifest has no config text");
  }
  absl::StatusOr<ParsedConfig> parsed =
      ParseConfig(j["config"].get<std::string>());
  if (!parsed.ok()) {
    return absl::Status(parsed.status().code(),
                        absl::StrCat("manifest config: ", parsed.status().message()));
  }
  return Manifest{parsed->config, parsed->axes};
}

inline absl::StatusOr<Manifest> LoadManifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return UsageError(absl::StrCat("cannot read manifest ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  absl::StatusOr<Manifest> m = ParseManifest(buf.str());
  if (!m.ok()) {
    return absl::Status(m.status().code(),
                        absl::StrCat(path, ": ", m.status().message()));
  }
  return m;
}

inline absl::Status WriteFile(const std::filesystem::path& path,
                              const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot write ", path.string()));
  out << contents;
  out.close();
  if (!out) return absl::UnavailableError(absl::StrCat("write failed: ", path.string()));
  return absl::OkStatus();
}

// Writes every report file plus manifest.json into `out_dir`. Returns the
// file names written, in order.
inline absl::StatusOr<std::vector<std::string>> EmitReports(
    const SweepBundle& b, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    return absl::UnavailableError(
        absl::StrCat("cannot create ", out_dir, ": ", ec.message()));
  }
  std::vector<std::pair<std::string, CsvTable>> tables = {
      {"cells.csv", CellTable(b)},
      {"privacy.csv", PrivacyTable(b)},
      {"participation.csv", ParticipationTable(b)},
      {"convergence.csv", ConvergenceTable(b)},
      {"runs.csv", RunClientTable(b)},
      {"trajectories.csv", TrajectoryTable(b)},
      {"epsilon_trajectories.csv", EpsilonTrajectoryTable(b)},
  };
  if (b.base.record_trace) tables.emplace_back("trace.csv", TraceTable(b));
  std::vector<std::string> files;
  for (const auto& [name, table] : tables) {
    if (absl::Status s =
            WriteFile(std::filesystem::path(out_dir) / name, table.ToString());
        !s.ok()) {
      return s;
    }
    files.push_back(name);
  }
  if (absl::Status s = WriteFile(std::filesystem::path(out_dir) / "manifest.json",
                                 ManifestJson(b, files));
      !s.ok()) {
    return s;
  }
  files.push_back("manifest.json");
  return files;
}

}  // namespace fedhet::experiment

#endif  // FEDHET_EXPERIMENT_REPORT_H_
