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

// DP-SGD local training: per-sample gradients are clipped to L2 norm C, summed,
// perturbed with N(0, sigma^2 C^2 I) and divided by the batch size before the
// descent step. The noise is added to the sum rather than to the mean; this is
// the scaling under which the (q, sigma) moments analysis of the accountant
// holds.

#ifndef FEDHET_DP_DP_SGD_H_
#define FEDHET_DP_DP_SGD_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "fedhet/status.h"
#include "fedhet/task/dataset.h"
#include "fedhet/task/model.h"

namespace fedhet::dp {

struct DpConfig {
  double clip_norm = 1.0;
  double noise_multiplier = 1.0;
  double learning_rate = 0.05;
  int batch_size = 26;
  int local_epochs = 1;

  absl::Status Validate() const {
    if (!(clip_norm > 0.0)) return UsageError("clip_norm must be > 0");
    if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier)) {
      return UsageError("noise_multiplier must be >= 0");
    }
    if (!(learning_rate > 0.0)) return UsageError("learning_rate must be > 0");
    if (batch_size < 1) return UsageError("batch_size must be >= 1");
    if (local_epochs < 1) return UsageError("local_epochs must be >= 1");
    return absl::OkStatus();
  }
};

// Overflow-safe Euclidean norm.
inline double L2Norm(std::span<const double> v) {
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) {
    const double r = x / scale;
    sum += r * r;
  }
  return scale * std::sqrt(sum);
}

// g <- g / max(1, |g|_2 / C), in place.
inline absl::Status ClipInPlace(std::span<double> g, double clip_norm) {
  for (double x : g) {
    if (!std::isfinite(x)) return DivergenceError("non-finite gradient");
  }
  const double norm = L2Norm(g);
  if (norm <= clip_norm) return absl::OkStatus();
  // Divide by the norm first so huge vectors do not overflow the product.
  for (double& x : g) x = (x / norm) * clip_norm;
  // Rounding can leave the result a few ulps above C. The loop is bounded so
  // subnormal inputs cannot spin.
  double after = L2Norm(g);
  for (int i = 0; i < 64 && after > clip_norm; ++i, after = L2Norm(g)) {
    const double shrink = std::min(clip_norm / after, 1.0 - 0x1p-52);
    for (double& x : g) x *= shrink;
  }
  return absl::OkStatus();
}

inline absl::StatusOr<std::vector<double>> ClipPerSample(
    std::span<const double> gradient, double clip_norm) {
  if (!(clip_norm > 0.0)) return UsageError("clip_norm must be > 0");
  std::vector<double> out(gradient.begin(), gradient.end());
  if (absl::Status s = ClipInPlace(out, clip_norm); !s.ok()) return s;
  return out;
}

// (1/|b|) (sum_i g_i + N(0, sigma^2 C^2 I)) over already-clipped gradients.
template <typename Rng>
absl::StatusOr<std::vector<double>> NoisedMeanGradient(
    const task::GradientBatch& clipped, const DpConfig& config, Rng& rng) {
  const std::size_t n = clipped.rows();
  if (n == 0) return UsageError("cannot average an empty batch");
  std::vector<double> out(clipped.dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::span<const double> g = clipped.row(i);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += g[j];
  }
  const double stddev = config.noise_multiplier * config.clip_norm;
  if (stddev > 0.0) {
    std::normal_distribution<double> noise(0.0, stddev);
    for (double& v : out) v += noise(rng);
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= inv;
  return out;
}

inline std::int64_t MechanismApplications(std::size_t shard_size,
                                          const DpConfig& config) {
  const auto b = static_cast<std::size_t>(config.batch_size);
  return static_cast<std::int64_t>((shard_size + b - 1) / b) *
         config.local_epochs;
}

struct LocalTrainResult {
  task::ModelParameters params;
  std::int64_t mechanism_applications = 0;
  double mean_batch_loss = 0.0;  // average pre-step loss over all batches
};

// Runs E epochs of shuffled mini-batches (the final batch may be short) of
// clip -> noise -> descent. Batch order and noise come from two streams derived
// from `seed`, so changing sigma leaves the batch schedule untouched.
template <typename Objective = task::CrossEntropyObjective>
absl::StatusOr<LocalTrainResult> LocalTrain(const task::ModelParameters& start,
                                            const task::Dataset& shard,
                                            const DpConfig& config,
                                            std::uint64_t seed,
                                            const Objective& objective = {}) {
  if (absl::Status s = config.Validate(); !s.ok()) return s;
  if (shard.empty()) return UsageError("training shard is empty");
  for (double v : start.values) {
    if (!std::isfinite(v)) return UsageError("start parameters are not finite");
  }
  std::seed_seq shuffle_seed{seed, std::uint64_t{0x5eed}, std::uint64_t{1}};
  std::seed_seq noise_seed{seed, std::uint64_t{0x5eed}, std::uint64_t{2}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 noise_rng(noise_seed);

  LocalTrainResult result;
  result.params = start;
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto b = static_cast<std::size_t>(config.batch_size);
  double loss_sum = 0.0;

  for (int epoch = 0; epoch < config.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size(); begin += b) {
      const std::size_t end = std::min(order.size(), begin + b);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);
      absl::StatusOr<task::LossResult> lr =
          objective(result.params, shard, batch);
      if (!lr.ok()) return lr.status();
      if (!std::isfinite(lr->loss)) {
        return DivergenceError(absl::StrCat("loss became ", lr->loss));
      }
      loss_sum += lr->loss;
      for (std::size_t i = 0; i < lr->per_sample.rows(); ++i) {
        if (absl::Status s = ClipInPlace(lr->per_sample.row(i), config.clip_norm);
            !s.ok()) {
          return s;
        }
      }
      absl::StatusOr<std::vector<double>> g =
          NoisedMeanGradient(lr->per_sample, config, noise_rng);
      if (!g.ok()) return g.status();
      for (std::size_t j = 0; j < g->size(); ++j) {
        result.params.values[j] -= config.learning_rate * (*g)[j];
      }
      ++result.mechanism_applications;
    }
  }
  result.mean_batch_loss =
      loss_sum / static_cast<double>(std::max<std::int64_t>(result.mechanism_applications, 1));
  return result;
}

}  // namespace fedhet::dp

#endif  // FEDHET_DP_DP_SGD_H_
