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
// Command-line front end: `fedhet run`, `fedhet sweep`, `fedhet replay`.
//
// Errors go to stderr as one JSON object and the exit code is nonzero:
// 2 for usage and config errors, 1 for everything else.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "fedhet/experiment/config_io.h"
#include "fedhet/experiment/report.h"
#include "fedhet/experiment/sweep.h"
#include "nlohmann/json.hpp"

namespace {

using fedhet::experiment::ExperimentConfig;
using fedhet::experiment::SweepAxis;

int Fail(const absl::Status& s) {
  nlohmann::ordered_json j;
  j["error"] = {{"code", absl::StatusCodeToString(s.code())},
                {"message", std::string(s.message())}};
  std::cerr << j.dump() << "\n";
  return s.code() == absl::StatusCode::kInvalidArgument ? 2 : 1;
}

void Warn(absl::string_view msg) {
  nlohmann::ordered_json j;
  j["warning"] = std::string(msg);
  std::cerr << j.dump() << "\n";
}

absl::Status ApplySeeds(ExperimentConfig& config, const std::string& seeds) {
  if (seeds.empty()) return absl::OkStatus();
  absl::StatusOr<std::vector<std::uint64_t>> parsed =
      fedhet::experiment::internal::ParseSeeds(seeds);
  if (!parsed.ok()) return parsed.status();
  config.seeds = *std::move(parsed);
  return absl::OkStatus();
}

absl::Status AppendAxes(std::vector<SweepAxis>& axes,
                        const std::vector<std::string>& specs) {
  for (const std::string& spec : specs) {
    std::vector<std::string> kv = absl::StrSplit(spec, absl::MaxSplits('=', 1));
    if (kv.size() != 2 || kv[0].empty() || kv[1].empty()) {
      return fedhet::UsageError(
          absl::StrCat("--axis expects key=v1,v2,..., got '", spec, "'"));
    }
    // Route through the config parser so axis keys get the same checks.
    absl::StatusOr<fedhet::experiment::ParsedConfig> probe =
        fedhet::experiment::ParseConfig(
            absl::StrCat("sweep.", kv[0], " = ", kv[1], "\n"));
    if (!probe.ok()) return probe.status();
    axes.push_back(probe->axes.front());
  }
  for (std::size_t i = 0; i < axes.size(); ++i) {
    for (std::size_t j = i + 1; j < axes.size(); ++j) {
      if (axes[i].key == axes[j].key) {
        return fedhet::UsageError(
            absl::StrCat("sweep axis ", axes[i].key, " given twice"));
      }
    }
  }
  return absl::OkStatus();
}

// Runs the sweep, writes the reports and prints a JSON summary on stdout.
int Execute(const ExperimentConfig& config, const std::vector<SweepAxis>& axes,
            int jobs, const std::string& out_dir, bool fail_on_failed_cell) {
  for (const std::string& w : fedhet::experiment::ConfigWarnings(config)) {
    Warn(w);
  }
  absl::StatusOr<fedhet::experiment::SweepBundle> bundle =
      fedhet::experiment::RunSweep(config, axes, {.jobs = jobs});
  if (!bundle.ok()) return Fail(bundle.status());
  absl::StatusOr<std::vector<std::string>> files =
      fedhet::experiment::EmitReports(*bundle, out_dir);
  if (!files.ok()) return Fail(files.status());

  int failed = 0;
  std::string first_failure;
  for (const auto& cell : bundle->cells) {
    if (!cell.failed) continue;
    if (failed++ == 0) first_failure = cell.failure;
    Warn(absl::StrCat("cell ", cell.index, " failed: ", cell.failure));
  }
  nlohmann::ordered_json summary;
  summary["out"] = out_dir;
  summary["cells"] = bundle->cells.size();
  summary["failed_cells"] = failed;
  summary["files"] = *files;
  std::cout << summary.dump() << "\n";
  if (fail_on_failed_cell && failed > 0) {
    return Fail(absl::UnavailableError(first_failure));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedhet: discrete-event simulator for synchronous and "
               "asynchronous federated learning with DP-SGD"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, out_dir, seeds;
  std::vector<std::string> axis_specs;
  int jobs = 1;

  CLI::App* run = app.add_subcommand("run", "Run one config over its seeds");
  run->add_option("config", config_path, "Config file")->required();
  CLI::App* sweep =
      app.add_subcommand("sweep", "Run the Cartesian product of sweep axes");
  sweep->add_option("config", config_path, "Config file")->required();
  sweep->add_option("--axis", axis_specs,
                    "Extra axis key=v1,v2,... (repeatable)");
  CLI::App* replay =
      app.add_subcommand("replay", "Re-run a manifest written by run or sweep");
  replay->add_option("manifest", manifest_path, "manifest.json")->required();

  for (CLI::App* sub : {run, sweep, replay}) {
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--jobs", jobs, "Parallel runs")
        ->check(CLI::PositiveNumber);
  }
  for (CLI::App* sub : {run, sweep}) {
    sub->add_option("--seeds", seeds, "Seed override, e.g. 1..10 or 3,7");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Fail(fedhet::UsageError(e.what()));
  }

  if (*replay) {
    absl::StatusOr<fedhet::experiment::Manifest> m =
        fedhet::experiment::LoadManifest(manifest_path);
    if (!m.ok()) return Fail(m.status());
    return Execute(m->config, m->axes, jobs, out_dir, m->axes.empty());
  }

  absl::StatusOr<fedhet::experiment::ParsedConfig> parsed =
      fedhet::experiment::LoadConfig(config_path);
  if (!parsed.ok()) return Fail(parsed.status());
  if (absl::Status s = ApplySeeds(parsed->config, seeds); !s.ok()) {
    return Fail(s);
  }
  if (*run) {
    if (!parsed->axes.empty()) {
      return Fail(fedhet::UsageError(
          "config declares sweep.* axes; use `fedhet sweep`"));
    }
    return Execute(parsed->config, {}, jobs, out_dir, true);
  }
  if (absl::Status s = AppendAxes(parsed->axes, axis_specs); !s.ok()) {
    return Fail(s);
  }
  return Execute(parsed->config, parsed->axes, jobs, out_dir, false);
}
