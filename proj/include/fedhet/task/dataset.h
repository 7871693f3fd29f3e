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

#ifndef FEDHET_TASK_DATASET_H_
#define FEDHET_TASK_DATASET_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_split.h"
#include "absl/strings/string_view.h"
#include "absl/strings/strip.h"
#include "fedhet/status.h"

namespace fedhet::task {

// Labelled feature vectors stored row-major.
struct Dataset {
  int dim = 0;
  int classes = 0;
  std::uint64_t source_seed = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }

  void Append(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  std::vector<std::size_t> ClassHistogram() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  absl::Status Validate() const {
    if (dim < 1 || classes < 1) return UsageError("dataset shape is empty");
    if (features.size() != labels.size() * static_cast<std::size_t>(dim)) {
      return UsageError("feature storage does not match dim * samples");
    }
    for (int y : labels) {
      if (y < 0 || y >= classes) {
        return UsageError(absl::StrCat("label ", y, " out of range"));
      }
    }
    return absl::OkStatus();
  }

  Dataset Subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dim = dim;
    out.classes = classes;
    out.source_seed = source_seed;
    out.features.reserve(indices.size() * static_cast<std::size_t>(dim));
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.Append(row(i), labels[i]);
    return out;
  }
};

inline Dataset Concatenate(std::span<const Dataset> parts) {
  Dataset out;
  if (parts.empty()) return out;
  out.dim = parts.front().dim;
  out.classes = parts.front().classes;
  out.source_seed = parts.front().source_seed;
  for (const Dataset& p : parts) {
    out.features.insert(out.features.end(), p.features.begin(),
                        p.features.end());
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
  }
  return out;
}

// Gaussian mixture: class c is N(mean_c, I) with mean_c = (s / sqrt 2) e_c, so
// every pair of class means is exactly `separation` apart. Samples are
// interleaved by class (0, 1, ..., m-1, 0, 1, ...).
inline absl::StatusOr<Dataset> GenerateSynthetic(int classes, int dim,
                                                 int per_class,
                                                 double separation,
                                                 std::uint64_t seed) {
  if (classes < 2) return UsageError("classes must be >= 2");
  if (dim < 2) return UsageError("dim must be >= 2");
  if (classes > dim) return UsageError("classes must not exceed dim");
  if (per_class < 1) return UsageError("per_class must be >= 1");
  if (!(separation > 0.0)) return UsageError("separation must be > 0");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double offset = separation / std::sqrt(2.0);

  Dataset data;
  data.dim = dim;
  data.classes = classes;
  data.source_seed = seed;
  data.features.reserve(static_cast<std::size_t>(classes) * per_class * dim);
  std::vector<double> x(static_cast<std::size_t>(dim));
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < classes; ++c) {
      for (int j = 0; j < dim; ++j) x[static_cast<std::size_t>(j)] = noise(rng);
      x[static_cast<std::size_t>(c)] += offset;
      data.Append(x, c);
    }
  }
  return data;
}

struct ClientShard {
  Dataset train;
  Dataset test;
};

// Splits `data` into K class-balanced shards and each shard into train/test.
// Per-class index lists are shuffled, concatenated, and dealt round-robin, so
// shard sizes differ by at most one and per-class counts by at most one. The
// train/test split is stratified by class.
inline absl::StatusOr<std::vector<ClientShard>> PartitionIid(
    const Dataset& data, int clients, double train_fraction,
    std::uint64_t seed) {
  if (clients < 1) return UsageError("clients must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    return UsageError("train_fraction must lie in (0,1)");
  }
  if (data.size() < static_cast<std::size_t>(clients)) {
    return UsageError(absl::StrCat("dataset of ", data.size(),
                                   " samples cannot be split across ", clients,
                                   " clients"));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(data.classes));
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  std::vector<std::vector<std::size_t>> dealt(static_cast<std::size_t>(clients));
  std::size_t cursor = 0;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i : members) {
      dealt[cursor % dealt.size()].push_back(i);
      ++cursor;
    }
  }

  std::vector<ClientShard> shards;
  shards.reserve(dealt.size());
  for (const auto& members : dealt) {
    // `members` is grouped by class in dealing order.
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> test_idx;
    std::size_t start = 0;
    while (start < members.size()) {
      std::size_t end = start;
      const int label = data.labels[members[start]];
      while (end < members.size() && data.labels[members[end]] == label) ++end;
      const std::size_t n = end - start;
      const auto n_train = static_cast<std::size_t>(
          std::llround(train_fraction * static_cast<double>(n)));
      for (std::size_t k = 0; k < n; ++k) {
        (k < n_train ? train_idx : test_idx).push_back(members[start + k]);
      }
      start = end;
    }
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    shards.push_back({data.Subset(train_idx), data.Subset(test_idx)});
  }
  return shards;
}

// Plain-text tabular format: optional '#' comment lines, then one sample per
// line as "label,x_1,...,x_d". Values are written with 17 significant digits so
// a save/load cycle is exact.
inline std::string FormatDataset(const Dataset& data) {
  std::ostringstream out;
  out << "# fedhet dataset classes=" << data.classes << " dim=" << data.dim
      << " seed=" << data.source_seed << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.row(i)) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

inline absl::StatusOr<Dataset> ParseDataset(absl::string_view text,
                                            int classes) {
  Dataset data;
  data.classes = classes;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_no;
    line = absl::StripAsciiWhitespace(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<absl::string_view> cells = absl::StrSplit(line, ',');
    if (cells.size() < 2) {
      return UsageError(absl::StrCat("line ", line_no, ": expected label and features"));
    }
    const int dim = static_cast<int>(cells.size()) - 1;
    if (data.dim == 0) data.dim = dim;
    if (dim != data.dim) {
      return UsageError(absl::StrCat("line ", line_no, ": expected ", data.dim,
                                     " features, got ", dim));
    }
    int label = 0;
    if (!absl::SimpleAtoi(cells[0], &label) || label < 0 || label >= classes) {
      return UsageError(absl::StrCat("line ", line_no, ": bad label '", cells[0], "'"));
    }
    for (std::size_t j = 1; j < cells.size(); ++j) {
      double v = 0.0;
      if (!absl::SimpleAtod(cells[j], &v) || !std::isfinite(v)) {
        return UsageError(absl::StrCat("line ", line_no, ": bad feature '", cells[j], "'"));
      }
      data.features.push_back(v);
    }
    data.labels.push_back(label);
  }
  if (data.empty()) return UsageError("dataset file has no samples");
  return data;
}

inline absl::Status SaveDataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) return absl::UnavailableError(absl::StrCat("cannot open ", path));
  out << FormatDataset(data);
  if (!out) return absl::DataLossError(absl::StrCat("write failed: ", path));
  return absl::OkStatus();
}

inline absl::StatusOr<Dataset> LoadDataset(const std::string& path,
                                           int classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return ParseDataset(buffer.str(), classes);
}

}  // namespace fedhet::task

#endif  // FEDHET_TASK_DATASET_H_
