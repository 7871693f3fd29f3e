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
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "fedhet/dp/dp_sgd.h"
#include "fedhet/task/dataset.h"
#include "fedhet/task/model.h"
#include "gtest/gtest.h"

namespace fedhet::task {
namespace {

Dataset Default(std::uint64_t seed = 7) {
  return *GenerateSynthetic(4, 32, 300, 3.0, seed);
}

TEST(GenerateSyntheticTest, CountsAndBalance) {
  Dataset d = Default();
  EXPECT_EQ(d.size(), 1200u);
  EXPECT_EQ(d.dim, 32);
  EXPECT_EQ(d.features.size(), 1200u * 32u);
  EXPECT_EQ(d.ClassHistogram(), (std::vector<std::size_t>{300, 300, 300, 300}));
  EXPECT_TRUE(d.Validate().ok());
}

TEST(GenerateSyntheticTest, DeterministicPerSeed) {
  Dataset a = Default(11);
  Dataset b = Default(11);
  Dataset c = Default(12);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.features, c.features);
}

TEST(GenerateSyntheticTest, ClassMeansAreSeparationApart) {
  Dataset d = *GenerateSynthetic(3, 5, 20000, 2.5, 3);
  std::vector<std::vector<double>> mean(3, std::vector<double>(5, 0.0));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (int j = 0; j < 5; ++j) {
      mean[static_cast<std::size_t>(d.labels[i])][static_cast<std::size_t>(j)] +=
          d.row(i)[static_cast<std::size_t>(j)] / 20000.0;
    }
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      double sq = 0.0;
      for (int j = 0; j < 5; ++j) {
        const double diff = mean[a][j] - mean[b][j];
        sq += diff * diff;
      }
      EXPECT_NEAR(std::sqrt(sq), 2.5, 0.05);
    }
  }
}

TEST(GenerateSyntheticTest, RejectsBadArguments) {
  EXPECT_FALSE(GenerateSynthetic(1, 4, 10, 1.0, 0).ok());
  EXPECT_FALSE(GenerateSynthetic(2, 1, 10, 1.0, 0).ok());
  EXPECT_FALSE(GenerateSynthetic(2, 2, 0, 1.0, 0).ok());
  EXPECT_FALSE(GenerateSynthetic(2, 2, 10, 0.0, 0).ok());
  EXPECT_FALSE(GenerateSynthetic(5, 4, 10, 1.0, 0).ok());
}

TEST(GenerateSyntheticTest, WellSeparatedPairIsLinearlySeparable) {
  Dataset d = *GenerateSynthetic(2, 2, 100, 8.0, 5);
  auto shards = PartitionIid(d, 1, 0.7, 5);
  ASSERT_TRUE(shards.ok());
  const ClientShard& s = shards->front();
  ModelParameters p = ZeroParameters({2, 0, 2});
  dp::DpConfig cfg{1e9, 0.0, 0.1, 16, 30};
  auto trained = dp::LocalTrain(p, s.train, cfg, 1);
  ASSERT_TRUE(trained.ok());
  EXPECT_GE(Evaluate(trained->params, s.test), 0.99);
}

TEST(PartitionIidTest, FiveEqualShards) {
  auto shards = PartitionIid(Default(), 5, 0.8, 3);
  ASSERT_TRUE(shards.ok());
  ASSERT_EQ(shards->size(), 5u);
  for (const ClientShard& s : *shards) {
    EXPECT_EQ(s.train.size(), 192u);
    EXPECT_EQ(s.test.size(), 48u);
    EXPECT_EQ(s.train.ClassHistogram(),
              (std::vector<std::size_t>{48, 48, 48, 48}));
    EXPECT_EQ(s.test.ClassHistogram(),
              (std::vector<std::size_t>{12, 12, 12, 12}));
  }
}

TEST(PartitionIidTest, SingleClientGetsEverything) {
  Dataset d = Default();
  auto shards = PartitionIid(d, 1, 0.8, 3);
  ASSERT_TRUE(shards.ok());
  ASSERT_EQ(shards->size(), 1u);
  EXPECT_EQ(shards->front().train.size() + shards->front().test.size(),
            d.size());
}

TEST(PartitionIidTest, EverySampleUsedExactlyOnce) {
  Dataset d = Default();
  auto shards = PartitionIid(d, 5, 0.8, 3);
  ASSERT_TRUE(shards.ok());
  std::multiset<std::vector<double>> seen;
  for (const ClientShard& s : *shards) {
    for (const Dataset* part : {&s.train, &s.test}) {
      for (std::size_t i = 0; i < part->size(); ++i) {
        seen.emplace(part->row(i).begin(), part->row(i).end());
      }
    }
  }
  std::multiset<std::vector<double>> all;
  for (std::size_t i = 0; i < d.size(); ++i) {
    all.emplace(d.row(i).begin(), d.row(i).end());
  }
  EXPECT_EQ(seen, all);
}

TEST(PartitionIidTest, UnevenSizesStayBalanced) {
  Dataset d = *GenerateSynthetic(3, 4, 37, 2.0, 1);  // 111 samples
  auto shards = PartitionIid(d, 7, 0.75, 9);
  ASSERT_TRUE(shards.ok());
  std::size_t lo = SIZE_MAX, hi = 0;
  std::vector<std::size_t> class_lo(3, SIZE_MAX), class_hi(3, 0);
  for (const ClientShard& s : *shards) {
    const std::size_t n = s.train.size() + s.test.size();
    lo = std::min(lo, n);
    hi = std::max(hi, n);
    Dataset both = Concatenate(std::vector<Dataset>{s.train, s.test});
    std::vector<std::size_t> h = both.ClassHistogram();
    for (int c = 0; c < 3; ++c) {
      class_lo[c] = std::min(class_lo[c], h[c]);
      class_hi[c] = std::max(class_hi[c], h[c]);
    }
  }
  EXPECT_LE(hi - lo, 1u);
  for (int c = 0; c < 3; ++c) EXPECT_LE(class_hi[c] - class_lo[c], 1u);
}

TEST(PartitionIidTest, Deterministic) {
  auto a = PartitionIid(Default(), 5, 0.8, 4);
  auto b = PartitionIid(Default(), 5, 0.8, 4);
  ASSERT_TRUE(a.ok() && b.ok());
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ((*a)[k].train.features, (*b)[k].train.features);
    EXPECT_EQ((*a)[k].test.labels, (*b)[k].test.labels);
  }
}

TEST(PartitionIidTest, RejectsBadArguments) {
  Dataset tiny = *GenerateSynthetic(2, 2, 1, 1.0, 0);
  EXPECT_EQ(PartitionIid(tiny, 3, 0.5, 0).status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_FALSE(PartitionIid(Default(), 0, 0.8, 0).ok());
  EXPECT_FALSE(PartitionIid(Default(), 2, 1.0, 0).ok());
  EXPECT_FALSE(PartitionIid(Default(), 2, 0.0, 0).ok());
}

TEST(DatasetFormatTest, RoundTripIsExact) {
  Dataset d = *GenerateSynthetic(3, 4, 10, 2.0, 42);
  absl::StatusOr<Dataset> back = ParseDataset(FormatDataset(d), 3);
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(back->features, d.features);
  EXPECT_EQ(back->labels, d.labels);
  EXPECT_EQ(back->dim, 4);
}

TEST(DatasetFormatTest, RejectsMalformedRows) {
  EXPECT_FALSE(ParseDataset("0,1.0,2.0\n1,3.0\n", 2).ok());
  EXPECT_FALSE(ParseDataset("2,1.0,2.0\n", 2).ok());
  EXPECT_FALSE(ParseDataset("x,1.0\n", 2).ok());
  EXPECT_FALSE(ParseDataset("0,abc\n", 2).ok());
}

TEST(ModelTest, ParameterCounts) {
  EXPECT_EQ(ModelLayout{}.ParameterCount(), 32u * 64 + 64 + 64u * 4 + 4);
  EXPECT_EQ((ModelLayout{32, 0, 4}).ParameterCount(), 32u * 4 + 4);
}

TEST(ModelTest, UniformLogitsGiveLogClasses) {
  Dataset d = Default();
  ModelParameters p = ZeroParameters(ModelLayout{});
  std::vector<std::size_t> batch = {0, 5, 17, 400};
  absl::StatusOr<LossResult> r = ForwardLoss(p, d, batch);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r->loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(MeanLoss(p, d), std::log(4.0), 1e-12);
}

TEST(ModelTest, SoftmaxNormalizes) {
  Dataset d = Default();
  ModelParameters p = InitParameters(ModelLayout{}, 3);
  for (std::size_t i = 0; i < 50; ++i) {
    std::vector<double> pr = Probabilities(p, d.row(i));
    EXPECT_NEAR(std::accumulate(pr.begin(), pr.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(ModelTest, LossShrinksWithMarginTowardZero) {
  ModelLayout layout{4, 0, 4};
  Dataset d;
  d.dim = 4;
  d.classes = 4;
  for (int c = 0; c < 4; ++c) {
    std::vector<double> x(4, 0.0);
    x[static_cast<std::size_t>(c)] = 1.0;
    d.Append(x, c);
  }
  double prev = INFINITY;
  for (double margin : {0.0, 1.0, 2.0, 5.0, 10.0, 40.0}) {
    ModelParameters p = ZeroParameters(layout);
    for (int c = 0; c < 4; ++c) p.values[static_cast<std::size_t>(c * 4 + c)] = margin;
    const double loss = ForwardLoss(p, d)->loss;
    EXPECT_LT(loss, prev);
    EXPECT_GE(loss, 0.0);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-15);
}

// Central differences with step 1e-5 against the analytic per-sample
// gradient, on random small instances.
void CheckGradients(const ModelLayout& layout, int pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, layout.classes - 1);
  constexpr double kStep = 1e-5;
  for (int t = 0; t < pairs; ++t) {
    Dataset d;
    d.dim = layout.input_dim;
    d.classes = layout.classes;
    std::vector<double> x(static_cast<std::size_t>(layout.input_dim));
    for (double& v : x) v = normal(rng);
    d.Append(x, label(rng));
    ModelParameters p = InitParameters(layout, rng());
    for (double& v : p.values) v += 0.1 * normal(rng);  // nonzero biases too
    absl::StatusOr<LossResult> r = ForwardLoss(p, d);
    ASSERT_TRUE(r.ok());
    std::span<const double> g = r->per_sample.row(0);
    double diff_sq = 0.0, ref_sq = 0.0;
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      ModelParameters up = p, down = p;
      up.values[j] += kStep;
      down.values[j] -= kStep;
      const double fd = (MeanLoss(up, d) - MeanLoss(down, d)) / (2 * kStep);
      diff_sq += (fd - g[j]) * (fd - g[j]);
      ref_sq += fd * fd;
      EXPECT_NEAR(g[j], fd, 1e-4 * std::max(1.0, std::abs(fd)))
          << "pair " << t << " param " << j;
    }
    EXPECT_LE(std::sqrt(diff_sq), 1e-4 * std::sqrt(ref_sq)) << "pair " << t;
  }
}

TEST(ModelTest, GradientsMatchFiniteDifferencesSmallMlp) {
  CheckGradients({5, 7, 3}, 100, 21);
}

TEST(ModelTest, GradientsMatchFiniteDifferencesLogistic) {
  CheckGradients({6, 0, 4}, 100, 22);
}

TEST(ModelTest, GradientsMatchFiniteDifferencesDefaultLayout) {
  CheckGradients(ModelLayout{}, 3, 23);
}

TEST(ModelTest, BatchLossIsMeanOfSampleLosses) {
  Dataset d = Default();
  ModelParameters p = InitParameters(ModelLayout{}, 9);
  std::vector<std::size_t> idx = {1, 2, 3, 99};
  const double batch = ForwardLoss(p, d, idx)->loss;
  double sum = 0.0;
  for (std::size_t i : idx) {
    sum += ForwardLoss(p, d, std::vector<std::size_t>{i})->loss;
  }
  EXPECT_NEAR(batch, sum / 4.0, 1e-12);
}

TEST(ModelTest, ForwardLossRejectsMismatch) {
  Dataset d = *GenerateSynthetic(4, 8, 5, 1.0, 0);
  ModelParameters p = ZeroParameters(ModelLayout{});
  EXPECT_EQ(ForwardLoss(p, d).status().code(), absl::StatusCode::kInvalidArgument);
  ModelParameters q = ZeroParameters(ModelLayout{8, 4, 4});
  EXPECT_EQ(ForwardLoss(q, d, std::vector<std::size_t>{}).status().code(),
            absl::StatusCode::kInvalidArgument);
}

TEST(ModelTest, PooledLossDecomposesOverClients) {
  Dataset d = Default();
  auto shards = PartitionIid(d, 5, 0.8, 1);
  ASSERT_TRUE(shards.ok());
  ModelParameters p = InitParameters(ModelLayout{}, 4);
  std::vector<Dataset> trains;
  double weighted = 0.0;
  std::size_t total = 0;
  for (const ClientShard& s : *shards) total += s.train.size();
  for (const ClientShard& s : *shards) {
    weighted += static_cast<double>(s.train.size()) / static_cast<double>(total) *
                MeanLoss(p, s.train);
    trains.push_back(s.train);
  }
  EXPECT_NEAR(weighted, MeanLoss(p, Concatenate(trains)), 1e-10);
}

TEST(EvaluateTest, RandomModelIsAtChance) {
  // Near-zero separation, so no classifier can beat chance by much.
  Dataset d = *GenerateSynthetic(4, 32, 2500, 0.01, 8);
  for (std::uint64_t seed : {1, 2, 3}) {
    EXPECT_NEAR(Evaluate(InitParameters(ModelLayout{}, seed), d), 0.25, 0.05);
  }
}

TEST(EvaluateTest, AbsentPredictedClassScoresZero) {
  Dataset d;
  d.dim = 2;
  d.classes = 3;
  d.Append(std::vector<double>{1.0, 2.0}, 0);
  d.Append(std::vector<double>{-1.0, 0.5}, 1);
  ModelParameters p = ZeroParameters({2, 0, 3});
  p.values.back() = 5.0;  // bias of class 2 dominates
  EXPECT_EQ(Evaluate(p, d), 0.0);
}

TEST(EvaluateTest, EmptyShardScoresZero) {
  Dataset d;
  d.dim = 32;
  d.classes = 4;
  EXPECT_EQ(Evaluate(ZeroParameters(ModelLayout{}), d), 0.0);
}

TEST(EvaluateTest, CentralizedReferenceRunSaturatesAboveTarget) {
  // Reference centralized run on the default task: the 75% target must be an
  // intermediate threshold below the plateau.
  Dataset d = Default(3);
  auto shards = PartitionIid(d, 1, 0.8, 3);
  ASSERT_TRUE(shards.ok());
  ModelParameters p = InitParameters(ModelLayout{}, 3);
  dp::DpConfig cfg{1e9, 0.0, 0.05, 26, 40};
  auto trained = dp::LocalTrain(p, shards->front().train, cfg, 3);
  ASSERT_TRUE(trained.ok());
  const double acc = Evaluate(trained->params, shards->front().test);
  EXPECT_GT(acc, 0.78);
  EXPECT_LT(acc, 0.95);
}

}  // namespace
}  // namespace fedhet::task
