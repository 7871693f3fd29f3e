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
#ifndef FEDHET_EXPERIMENT_CONFIG_IO_H_
#define FEDHET_EXPERIMENT_CONFIG_IO_H_

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/ascii.h"
#include "absl/strings/match.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "fedhet/experiment/config.h"
#include "fedhet/status.h"

namespace fedhet::experiment {

// One sweep axis: a scalar config key and the values it takes, kept as text
// so that axis values go through the same parser as the config file.
struct SweepAxis {
  std::string key;
  std::vector<std::string> values;

  bool operator==(const SweepAxis&) const = default;
};

struct ParsedConfig {
  ExperimentConfig config;
  std::vector<SweepAxis> axes;
  std::vector<std::string> warnings;
};

namespace internal {

// Shortest %g text that parses back to exactly `v`.
inline std::string FormatDouble(double v) {
  for (int digits = 15; digits < 17; ++digits) {
    std::string s = absl::StrFormat("%.*g", digits, v);
    double back = 0.0;
    if (absl::SimpleAtod(s, &back) && back == v) return s;
  }
  return absl::StrFormat("%.17g", v);
}

inline absl::Status KeyError(absl::string_view key, absl::string_view what) {
  return UsageError(absl::StrCat(key, " ", what));
}

inline absl::StatusOr<double> ParseDouble(absl::string_view key,
                                          absl::string_view text) {
  double v = 0.0;
  if (!absl::SimpleAtod(text, &v) || !std::isfinite(v)) {
    return KeyError(key, absl::StrCat("must be a finite number, got '", text,
                                      "'"));
  }
  return v;
}

inline absl::StatusOr<std::int64_t> ParseInt(absl::string_view key,
                                             absl::string_view text) {
  std::int64_t v = 0;
  if (!absl::SimpleAtoi(text, &v)) {
    return KeyError(key, absl::StrCat("must be an integer, got '", text, "'"));
  }
  return v;
}

inline absl::StatusOr<bool> ParseBool(absl::string_view key,
                                      absl::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  return KeyError(key, absl::StrCat("must be true or false, got '", text, "'"));
}

// Parses "1,2,5" and inclusive ranges such as "1..10" (mixable).
inline absl::StatusOr<std::vector<std::uint64_t>> ParseSeeds(
    absl::string_view text) {
  std::vector<std::uint64_t> out;
  for (absl::string_view item : absl::StrSplit(text, ',')) {
    item = absl::StripAsciiWhitespace(item);
    std::vector<absl::string_view> ends = absl::StrSplit(item, "..");
    std::uint64_t lo = 0;
    std::uint64_t hi = 0;
    if (ends.size() == 1 && absl::SimpleAtoi(ends[0], &lo)) {
      out.push_back(lo);
      continue;
    }
    if (ends.size() != 2 || !absl::SimpleAtoi(ends[0], &lo) ||
        !absl::SimpleAtoi(ends[1], &hi) || hi < lo || hi - lo >= 1000000) {
      return KeyError("seeds", absl::StrCat("must be a list of non-negative "
                                            "integers or a..b ranges, got '",
                                            item, "'"));
    }
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  if (out.empty()) return KeyError("seeds", "must not be empty");
  return out;
}

inline absl::StatusOr<sim::DeviceProfile> ParseProfile(absl::string_view name,
                                                       absl::string_view text) {
  const std::string key = absl::StrCat("profile.", name);
  std::vector<absl::string_view> parts = absl::StrSplit(text, ',');
  if (parts.size() != 5) {
    return KeyError(key, "must be train_mean,jitter,latency,dropout,rejoin");
  }
  double v[5];
  for (int i = 0; i < 5; ++i) {
    absl::StatusOr<double> d =
        ParseDouble(key, absl::StripAsciiWhitespace(parts[static_cast<std::size_t>(i)]));
    if (!d.ok()) return d.status();
    v[i] = *d;
  }
  sim::DeviceProfile p{std::string(name), v[0], v[1], v[2], v[3], v[4]};
  if (absl::Status s = p.Validate(); !s.ok()) return KeyError(key, s.message());
  return p;
}

inline std::string FormatProfile(const sim::DeviceProfile& p) {
  return absl::StrJoin({FormatDouble(p.train_time_mean),
                        FormatDouble(p.train_time_jitter),
                        FormatDouble(p.exchange_latency_mean),
                        FormatDouble(p.dropout_prob_per_round),
                        FormatDouble(p.rejoin_delay)},
                       ",");
}

// A scalar key: its setter validates the value's own domain, its getter
// produces the canonical text.
struct ScalarKey {
  std::string name;
  std::function<absl::Status(ExperimentConfig&, absl::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
ScalarKey RealKey(std::string name, T ExperimentConfig::*outer, double T::*field,
                  std::function<bool(double)> ok, std::string constraint) {
  ScalarKey k;
  k.name = name;
  k.set = [=](ExperimentConfig& c, absl::string_view text) -> absl::Status {
    absl::StatusOr<double> v = ParseDouble(name, text);
    if (!v.ok()) return v.status();
    if (!ok(*v)) return KeyError(name, constraint);
    (c.*outer).*field = *v;
    return absl::OkStatus();
  };
  k.get = [=](const ExperimentConfig& c) {
    return FormatDouble((c.*outer).*field);
  };
  return k;
}

template <typename T, typename I>
ScalarKey IntKey(std::string name, T ExperimentConfig::*outer, I T::*field,
                 std::int64_t min_value) {
  ScalarKey k;
  k.name = name;
  k.set = [=](ExperimentConfig& c, absl::string_view text) -> absl::Status {
    absl::StatusOr<std::int64_t> v = ParseInt(name, text);
    if (!v.ok()) return v.status();
    if (*v < min_value || *v > std::numeric_limits<I>::max()) {
      return KeyError(name, absl::StrCat("must be >= ", min_value));
    }
    (c.*outer).*field = static_cast<I>(*v);
    return absl::OkStatus();
  };
  k.get = [=](const ExperimentConfig& c) {
    return absl::StrCat((c.*outer).*field);
  };
  return k;
}

inline bool Positive(double v) { return v > 0.0; }
inline bool NonNegative(double v) { return v >= 0.0; }
inline bool OpenUnit(double v) { return v > 0.0 && v < 1.0; }
inline bool HalfOpenUnit(double v) { return v > 0.0 && v <= 1.0; }

inline const std::vector<ScalarKey>& ScalarKeys() {
  static const std::vector<ScalarKey>* keys = [] {
    auto* k = new std::vector<ScalarKey>;
    k->push_back(
        {"mode",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           if (v == "sync") {
             c.mode = federation::AggregationMode::kSynchronous;
           } else if (v == "async") {
             c.mode = federation::AggregationMode::kAsynchronous;
           } else {
             return KeyError("mode", "must be sync or async");
           }
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(federation::ModeName(c.mode));
         }});
    k->push_back(
        {"alpha",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<double> a = ParseDouble("alpha", v);
           if (!a.ok()) return a.status();
           if (!HalfOpenUnit(*a)) return UsageError("alpha must lie in (0,1]");
           c.alpha = *a;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) { return FormatDouble(c.alpha); }});
    k->push_back(
        {"staleness_aware",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<bool> b = ParseBool("staleness_aware", v);
           if (!b.ok()) return b.status();
           c.staleness_aware = *b;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(c.staleness_aware ? "true" : "false");
         }});
    k->push_back(
        {"staleness_clock",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           if (v == "round") {
             c.staleness_clock = federation::StalenessClock::kPerRound;
           } else if (v == "update") {
             c.staleness_clock = federation::StalenessClock::kPerUpdate;
           } else {
             return KeyError("staleness_clock", "must be round or update");
           }
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(federation::ClockName(c.staleness_clock));
         }});
    k->push_back(RealKey("sigma", &ExperimentConfig::dp,
                         &dp::DpConfig::noise_multiplier, NonNegative,
                         "must be >= 0"));
    k->push_back(RealKey("clip", &ExperimentConfig::dp,
                         &dp::DpConfig::clip_norm, Positive, "must be > 0"));
    k->push_back(RealKey("learning_rate", &ExperimentConfig::dp,
                         &dp::DpConfig::learning_rate, Positive,
                         "must be > 0"));
    k->push_back(IntKey("batch_size", &ExperimentConfig::dp,
                        &dp::DpConfig::batch_size, 1));
    k->push_back(IntKey("local_epochs", &ExperimentConfig::dp,
                        &dp::DpConfig::local_epochs, 1));
    k->push_back(
        {"delta",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<double> d = ParseDouble("delta", v);
           if (!d.ok()) return d.status();
           if (!OpenUnit(*d)) return KeyError("delta", "must lie in (0,1)");
           c.delta = *d;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) { return FormatDouble(c.delta); }});
    k->push_back(
        {"lambda_max",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<std::int64_t> n = ParseInt("lambda_max", v);
           if (!n.ok()) return n.status();
           if (*n < 1 || *n > 1024) {
             return KeyError("lambda_max", "must lie in [1,1024]");
           }
           c.lambda_max = static_cast<int>(*n);
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) { return absl::StrCat(c.lambda_max); }});
    k->push_back(
        {"composition",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           if (v == "per_round") {
             c.composition = Composition::kPerRound;
           } else if (v == "per_step") {
             c.composition = Composition::kPerStep;
           } else {
             return KeyError("composition", "must be per_round or per_step");
           }
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(c.composition == Composition::kPerStep
                                  ? "per_step"
                                  : "per_round");
         }});
    k->push_back(IntKey("data.classes", &ExperimentConfig::data,
                        &DatasetParams::classes, 2));
    k->push_back(IntKey("data.dim", &ExperimentConfig::data,
                        &DatasetParams::dim, 1));
    k->push_back(IntKey("data.per_class", &ExperimentConfig::data,
                        &DatasetParams::per_class, 1));
    k->push_back(RealKey("data.separation", &ExperimentConfig::data,
                         &DatasetParams::separation, Positive, "must be > 0"));
    k->push_back(RealKey("data.train_fraction", &ExperimentConfig::data,
                         &DatasetParams::train_fraction, OpenUnit,
                         "must lie in (0,1)"));
    k->push_back(
        {"data.seed",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           if (v == "run") {
             c.data.seed.reset();
             return absl::OkStatus();
           }
           std::uint64_t s = 0;
           if (!absl::SimpleAtoi(v, &s)) {
             return KeyError("data.seed",
                             "must be run or a non-negative integer");
           }
           c.data.seed = s;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return c.data.seed ? absl::StrCat(*c.data.seed) : std::string("run");
         }});
    k->push_back(IntKey("model.hidden", &ExperimentConfig::data,
                        &DatasetParams::hidden, 0));
    k->push_back(RealKey("stop.target_accuracy", &ExperimentConfig::stop,
                         &StopRule::target_accuracy, HalfOpenUnit,
                         "must lie in (0,1]"));
    k->push_back(IntKey("stop.sustain_evals", &ExperimentConfig::stop,
                        &StopRule::sustain_evals, 1));
    k->push_back(IntKey("stop.max_aggregations", &ExperimentConfig::stop,
                        &StopRule::max_aggregations, 1));
    k->push_back(RealKey("stop.max_virtual_time", &ExperimentConfig::stop,
                         &StopRule::max_virtual_time, NonNegative,
                         "must be >= 0 (0 means unbounded)"));
    k->push_back(
        {"stop.at_target",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<bool> b = ParseBool("stop.at_target", v);
           if (!b.ok()) return b.status();
           c.stop.stop_at_target = *b;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(c.stop.stop_at_target ? "true" : "false");
         }});
    k->push_back(
        {"record_trace",
         [](ExperimentConfig& c, absl::string_view v) -> absl::Status {
           absl::StatusOr<bool> b = ParseBool("record_trace", v);
           if (!b.ok()) return b.status();
           c.record_trace = *b;
           return absl::OkStatus();
         },
         [](const ExperimentConfig& c) {
           return std::string(c.record_trace ? "true" : "false");
         }});
    return k;
  }();
  return *keys;
}

inline const ScalarKey* FindScalarKey(absl::string_view name) {
  for (const ScalarKey& k : ScalarKeys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

inline std::string KnownKeysHint() {
  std::vector<std::string> names;
  for (const ScalarKey& k : ScalarKeys()) names.push_back(k.name);
  names.push_back("clients");
  names.push_back("seeds");
  names.push_back("profile.<name>");
  names.push_back("sweep.<key>");
  return absl::StrJoin(names, ", ");
}

}  // namespace internal

// Sets one scalar key from its text form. Used by the parser and to apply
// sweep-axis values.
inline absl::Status SetConfigKey(ExperimentConfig& config, absl::string_view key,
                                 absl::string_view value) {
  const internal::ScalarKey* k = internal::FindScalarKey(key);
  if (k == nullptr) {
    return UsageError(absl::StrCat("unknown key '", key,
                                   "'; known keys: ", internal::KnownKeysHint()));
  }
  return k->set(config, value);
}

inline bool IsScalarKey(absl::string_view key) {
  return internal::FindScalarKey(key) != nullptr;
}

inline std::vector<std::string> ConfigWarnings(const ExperimentConfig& config) {
  std::vector<std::string> out;
  if (config.dp.noise_multiplier == 0.0) {
    out.push_back("sigma = 0: no noise is added and privacy accounting is "
                  "disabled (epsilon is reported as inf)");
  }
  return out;
}

// Parses the flat `key = value` format documented in docs/formats.md.
inline absl::StatusOr<ParsedConfig> ParseConfig(absl::string_view text) {
  ParsedConfig out;
  std::map<std::string, sim::DeviceProfile> profiles;
  for (const sim::DeviceProfile& p : sim::DefaultTierProfiles()) {
    profiles[p.tier_name] = p;
  }
  std::vector<std::string> client_names;
  bool clients_set = false;
  std::set<std::string> seen;
  int line_no = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n')) {
    ++line_no;
    absl::string_view line = raw;
    if (const std::size_t hash = line.find('#'); hash != line.npos) {
      line = line.substr(0, hash);
    }
    line = absl::StripAsciiWhitespace(line);
    if (line.empty()) continue;
    const std::string where = absl::StrCat("line ", line_no, ": ");
    const std::size_t eq = line.find('=');
    if (eq == line.npos) {
      return UsageError(absl::StrCat(where, "expected 'key = value', got '",
                                     line, "'"));
    }
    const std::string key(absl::StripAsciiWhitespace(line.substr(0, eq)));
    const std::string value(absl::StripAsciiWhitespace(line.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      return UsageError(absl::StrCat(where, "key and value must be non-empty"));
    }
    if (!seen.insert(key).second) {
      return UsageError(absl::StrCat(where, "duplicate key '", key, "'"));
    }
    absl::Status s;
    if (absl::StartsWith(key, "profile.")) {
      const std::string name = key.substr(8);
      if (name.empty()) {
        s = UsageError("profile.<name> needs a name");
      } else {
        absl::StatusOr<sim::DeviceProfile> p =
            internal::ParseProfile(name, value);
        if (p.ok()) {
          profiles[name] = *std::move(p);
        } else {
          s = p.status();
        }
      }
    } else if (absl::StartsWith(key, "sweep.")) {
      SweepAxis axis;
      axis.key = key.substr(6);
      if (!IsScalarKey(axis.key) || axis.key == "record_trace") {
        s = UsageError(absl::StrCat(key, " does not name a sweepable key"));
      } else {
        for (absl::string_view v : absl::StrSplit(value, ',')) {
          axis.values.emplace_back(absl::StripAsciiWhitespace(v));
          // Each value must be legal on its own.
          ExperimentConfig probe;
          if (s.ok()) s = SetConfigKey(probe, axis.key, axis.values.back());
        }
        if (s.ok()) out.axes.push_back(std::move(axis));
      }
    } else if (key == "clients") {
      clients_set = true;
      for (absl::string_view v : absl::StrSplit(value, ',')) {
        client_names.emplace_back(absl::StripAsciiWhitespace(v));
      }
    } else if (key == "seeds") {
      absl::StatusOr<std::vector<std::uint64_t>> seeds =
          internal::ParseSeeds(value);
      if (seeds.ok()) {
        out.config.seeds = *std::move(seeds);
      } else {
        s = seeds.status();
      }
    } else {
      s = SetConfigKey(out.config, key, value);
    }
    if (!s.ok()) return UsageError(absl::StrCat(where, s.message()));
  }

  if (clients_set) {
    out.config.clients.clear();
    for (const std::string& name : client_names) {
      auto it = profiles.find(name);
      if (it == profiles.end()) {
        return UsageError(absl::StrCat("clients names unknown profile '", name,
                                       "'; define it with profile.", name,
                                       " = train_mean,jitter,latency,"
                                       "dropout,rejoin"));
      }
      out.config.clients.push_back(it->second);
    }
  } else {
    // Overrides of the default tier names still apply.
    for (sim::DeviceProfile& p : out.config.clients) p = profiles[p.tier_name];
  }
  if (absl::Status s = out.config.Validate(); !s.ok()) return s;
  out.warnings = ConfigWarnings(out.config);
  return out;
}

inline absl::StatusOr<ParsedConfig> LoadConfig(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return UsageError(absl::StrCat("cannot read config file ", path));
  std::stringstream buf;
  buf << in.rdbuf();
  absl::StatusOr<ParsedConfig> parsed = ParseConfig(buf.str());
  if (!parsed.ok()) {
    return absl::Status(parsed.status().code(),
                        absl::StrCat(path, ": ", parsed.status().message()));
  }
  return parsed;
}

// Canonical text of a config plus axes: every key, fixed order, doubles at
// full precision. ParseConfig(FormatConfig(c, a)) reproduces c and a.
inline std::string FormatConfig(const ExperimentConfig& config,
                                const std::vector<SweepAxis>& axes = {}) {
  std::string out;
  for (const internal::ScalarKey& k : internal::ScalarKeys()) {
    absl::StrAppend(&out, k.name, " = ", k.get(config), "\n");
  }
  std::set<std::string> emitted;
  std::vector<std::string> names;
  for (const sim::DeviceProfile& p : config.clients) {
    names.push_back(p.tier_name);
    if (emitted.insert(p.tier_name).second) {
      absl::StrAppend(&out, "profile.", p.tier_name, " = ",
                      internal::FormatProfile(p), "\n");
    }
  }
  absl::StrAppend(&out, "clients = ", absl::StrJoin(names, ","), "\n");
  absl::StrAppend(&out, "seeds = ", absl::StrJoin(config.seeds, ","), "\n");
  for (const SweepAxis& a : axes) {
    absl::StrAppend(&out, "sweep.", a.key, " = ", absl::StrJoin(a.values, ","),
                    "\n");
  }
  return out;
}

}  // namespace fedhet::experiment

#endif  // FEDHET_EXPERIMENT_CONFIG_IO_H_
