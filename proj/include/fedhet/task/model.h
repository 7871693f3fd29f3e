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

// One-hidden-layer perceptron with softmax cross-entropy loss and exact
// per-sample gradients. With hidden == 0 the model is multinomial logistic
// regression.

#ifndef FEDHET_TASK_MODEL_H_
#define FEDHET_TASK_MODEL_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_cat.h"
#include "fedhet/status.h"
#include "fedhet/task/dataset.h"

namespace fedhet::task {

struct ModelLayout {
  int input_dim = 32;
  int hidden = 64;
  int classes = 4;

  bool operator==(const ModelLayout&) const = default;

  std::size_t W1Size() const {
    return static_cast<std::size_t>(hidden) * input_dim;
  }
  std::size_t OutFanIn() const {
    return static_cast<std::size_t>(hidden > 0 ? hidden : input_dim);
  }
  std::size_t ParameterCount() const {
    const std::size_t first = hidden > 0 ? W1Size() + hidden : 0;
    return first + static_cast<std::size_t>(classes) * OutFanIn() + classes;
  }
};

struct ModelParameters {
  ModelLayout layout;
  std::vector<double> values;
  std::int64_t version = 0;

  absl::Status Validate() const {
    if (values.size() != layout.ParameterCount()) {
      return UsageError(absl::StrCat("parameter vector has ", values.size(),
                                     " entries, layout needs ",
                                     layout.ParameterCount()));
    }
    for (double v : values) {
      if (!std::isfinite(v)) return UsageError("parameters are not finite");
    }
    return absl::OkStatus();
  }
};

inline ModelParameters ZeroParameters(const ModelLayout& layout) {
  return {layout, std::vector<double>(layout.ParameterCount(), 0.0), 0};
}

// He-normal hidden weights, Glorot-normal output weights, zero biases.
inline ModelParameters InitParameters(const ModelLayout& layout,
                                      std::uint64_t seed) {
  ModelParameters p = ZeroParameters(layout);
  std::mt19937_64 rng(seed);
  std::size_t k = 0;
  if (layout.hidden > 0) {
    std::normal_distribution<double> w1(0.0, std::sqrt(2.0 / layout.input_dim));
    for (std::size_t i = 0; i < layout.W1Size(); ++i) p.values[k++] = w1(rng);
    k += static_cast<std::size_t>(layout.hidden);
  }
  std::normal_distribution<double> w2(
      0.0, std::sqrt(2.0 / static_cast<double>(layout.OutFanIn() + layout.classes)));
  for (std::size_t i = 0; i < layout.OutFanIn() * layout.classes; ++i) {
    p.values[k++] = w2(rng);
  }
  return p;
}

// Per-sample gradients stored as rows of a dense matrix.
struct GradientBatch {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

struct LossResult {
  double loss = 0.0;  // mean cross-entropy over the batch
  GradientBatch per_sample;
};

namespace internal {

// Scratch-free evaluation of one sample. Writes logits into `logits` and, when
// `hidden_out` is non-empty, the post-ReLU activations into it.
inline void Logits(const ModelLayout& layout, std::span<const double> w,
                   std::span<const double> x, std::span<double> hidden_out,
                   std::span<double> logits) {
  const std::size_t d = static_cast<std::size_t>(layout.input_dim);
  const std::size_t m = static_cast<std::size_t>(layout.classes);
  std::span<const double> features = x;
  std::size_t k = 0;
  if (layout.hidden > 0) {
    const std::size_t h = static_cast<std::size_t>(layout.hidden);
    const double* w1 = w.data();
    const double* b1 = w.data() + h * d;
    for (std::size_t i = 0; i < h; ++i) {
      double acc = b1[i];
      const double* wi = w1 + i * d;
      for (std::size_t j = 0; j < d; ++j) acc += wi[j] * x[j];
      hidden_out[i] = acc > 0.0 ? acc : 0.0;
    }
    features = hidden_out.first(h);
    k = h * d + h;
  }
  const std::size_t fan_in = features.size();
  const double* w2 = w.data() + k;
  const double* b2 = w2 + m * fan_in;
  for (std::size_t c = 0; c < m; ++c) {
    double acc = b2[c];
    const double* wc = w2 + c * fan_in;
    for (std::size_t j = 0; j < fan_in; ++j) acc += wc[j] * features[j];
    logits[c] = acc;
  }
}

inline double LogSumExp(std::span<const double> v) {
  const double hi = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

}  // namespace internal

inline std::vector<double> Probabilities(const ModelParameters& params,
                                         std::span<const double> x) {
  const ModelLayout& layout = params.layout;
  std::vector<double> hidden(static_cast<std::size_t>(std::max(layout.hidden, 0)));
  std::vector<double> logits(static_cast<std::size_t>(layout.classes));
  internal::Logits(layout, params.values, x, hidden, logits);
  const double lse = internal::LogSumExp(logits);
  for (double& v : logits) v = std::exp(v - lse);
  return logits;
}

inline int Predict(const ModelParameters& params, std::span<const double> x) {
  const ModelLayout& layout = params.layout;
  std::vector<double> hidden(static_cast<std::size_t>(std::max(layout.hidden, 0)));
  std::vector<double> logits(static_cast<std::size_t>(layout.classes));
  internal::Logits(layout, params.values, x, hidden, logits);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

// Mean cross-entropy over data[indices] plus the exact gradient of each
// sample's loss with respect to the flat parameter vector.
inline absl::StatusOr<LossResult> ForwardLoss(
    const ModelParameters& params, const Dataset& data,
    std::span<const std::size_t> indices) {
  const ModelLayout& layout = params.layout;
  if (indices.empty()) return UsageError("batch is empty");
  if (data.dim != layout.input_dim) {
    return UsageError(absl::StrCat("feature dim ", data.dim,
                                   " does not match model input ",
                                   layout.input_dim));
  }
  if (data.classes != layout.classes) {
    return UsageError("dataset class count does not match model output");
  }
  if (params.values.size() != layout.ParameterCount()) {
    return UsageError("parameter vector does not match layout");
  }
  const std::size_t d = static_cast<std::size_t>(layout.input_dim);
  const std::size_t h = static_cast<std::size_t>(std::max(layout.hidden, 0));
  const std::size_t m = static_cast<std::size_t>(layout.classes);
  const std::size_t fan_in = layout.OutFanIn();
  const std::size_t out_offset = h > 0 ? h * d + h : 0;
  const double* w2 = params.values.data() + out_offset;

  LossResult result;
  result.per_sample.dim = layout.ParameterCount();
  result.per_sample.data.assign(indices.size() * result.per_sample.dim, 0.0);
  std::vector<double> hidden(h);
  std::vector<double> logits(m);
  std::vector<double> dlogits(m);
  std::vector<double> dhidden(h);

  double total = 0.0;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    const std::size_t idx = indices[s];
    if (idx >= data.size()) return UsageError("batch index out of range");
    std::span<const double> x = data.row(idx);
    const auto y = static_cast<std::size_t>(data.labels[idx]);
    internal::Logits(layout, params.values, x, hidden, logits);
    const double lse = internal::LogSumExp(logits);
    total += lse - logits[y];
    for (std::size_t c = 0; c < m; ++c) {
      dlogits[c] = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
    }

    std::span<double> g = result.per_sample.row(s);
    std::span<const double> features =
        h > 0 ? std::span<const double>(hidden) : x;
    double* gw2 = g.data() + out_offset;
    double* gb2 = gw2 + m * fan_in;
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t j = 0; j < fan_in; ++j) {
        gw2[c * fan_in + j] = dlogits[c] * features[j];
      }
      gb2[c] = dlogits[c];
    }
    if (h > 0) {
      for (std::size_t j = 0; j < h; ++j) {
        double acc = 0.0;
        if (hidden[j] > 0.0) {
          for (std::size_t c = 0; c < m; ++c) acc += w2[c * h + j] * dlogits[c];
        }
        dhidden[j] = acc;
      }
      double* gw1 = g.data();
      double* gb1 = g.data() + h * d;
      for (std::size_t i = 0; i < h; ++i) {
        if (dhidden[i] == 0.0) continue;
        for (std::size_t j = 0; j < d; ++j) gw1[i * d + j] = dhidden[i] * x[j];
        gb1[i] = dhidden[i];
      }
    }
  }
  result.loss = total / static_cast<double>(indices.size());
  return result;
}

inline absl::StatusOr<LossResult> ForwardLoss(const ModelParameters& params,
                                              const Dataset& batch) {
  std::vector<std::size_t> all(batch.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return ForwardLoss(params, batch, all);
}

// Mean loss only; cheaper than ForwardLoss when gradients are not needed.
inline double MeanLoss(const ModelParameters& params, const Dataset& data) {
  const ModelLayout& layout = params.layout;
  std::vector<double> hidden(static_cast<std::size_t>(std::max(layout.hidden, 0)));
  std::vector<double> logits(static_cast<std::size_t>(layout.classes));
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    internal::Logits(layout, params.values, data.row(i), hidden, logits);
    total += internal::LogSumExp(logits) -
             logits[static_cast<std::size_t>(data.labels[i])];
  }
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

// Fraction of argmax-correct predictions; 0 for an empty shard.
inline double Evaluate(const ModelParameters& params, const Dataset& test) {
  if (test.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (Predict(params, test.row(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

// The default local objective: softmax cross-entropy of the perceptron.
struct CrossEntropyObjective {
  absl::StatusOr<LossResult> operator()(const ModelParameters& params,
                                        const Dataset& data,
                                        std::span<const std::size_t> batch) const {
    return ForwardLoss(params, data, batch);
  }
};

}  // namespace fedhet::task

#endif  // FEDHET_TASK_MODEL_H_
