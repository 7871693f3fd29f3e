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

#ifndef FEDHET_PRIVACY_QUADRATURE_H_
#define FEDHET_PRIVACY_QUADRATURE_H_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <queue>
#include <vector>

namespace fedhet::privacy {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t intervals = 0;
};

namespace internal {

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]. Index 7 is
// the centre node; odd indices are shared with the Gauss rule.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a;
  double b;
  double value;
  double error;
  bool operator<(const Segment& other) const { return error < other.error; }
};

template <typename F>
Segment KronrodSegment(const F& f, double a, double b) {
  const double centre = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(centre);
  double kronrod = fc * kKronrodWeights[7];
  double gauss = fc * kGaussWeights[3];
  for (int i = 0; i < 7; ++i) {
    const double dx = half * kKronrodNodes[i];
    const double pair = f(centre - dx) + f(centre + dx);
    kronrod += kKronrodWeights[i] * pair;
    if (i % 2 == 1) gauss += kGaussWeights[i / 2] * pair;
  }
  kronrod *= half;
  gauss *= half;
  return {a, b, kronrod, std::abs(kronrod - gauss)};
}

}  // namespace internal

// Globally adaptive Gauss-Kronrod (7/15) integration of f over [a, b]. The
// interval is first cut into `initial_pieces` equal segments so narrow peaks
// are not skipped; the segment with the largest error estimate is then bisected
// until the summed estimate drops below abs_tol or max_intervals is reached.
template <typename F>
QuadratureResult IntegrateAdaptive(const F& f, double a, double b,
                                   double abs_tol, std::size_t initial_pieces,
                                   std::size_t max_intervals = 20000) {
  std::priority_queue<internal::Segment> heap;
  initial_pieces = std::max<std::size_t>(initial_pieces, 1);
  const double width = (b - a) / static_cast<double>(initial_pieces);
  double total = 0.0;
  double total_error = 0.0;
  for (std::size_t i = 0; i < initial_pieces; ++i) {
    const double lo = a + width * static_cast<double>(i);
    const double hi = (i + 1 == initial_pieces) ? b : lo + width;
    internal::Segment s = internal::KronrodSegment(f, lo, hi);
    total += s.value;
    total_error += s.error;
    heap.push(s);
  }
  while (total_error > abs_tol && heap.size() < max_intervals) {
    internal::Segment worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    internal::Segment left = internal::KronrodSegment(f, worst.a, mid);
    internal::Segment right = internal::KronrodSegment(f, mid, worst.b);
    total += left.value + right.value - worst.value;
    total_error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
  }
  // Re-sum from the leaves; the running total accumulates cancellation error.
  QuadratureResult result;
  result.intervals = heap.size();
  while (!heap.empty()) {
    result.value += heap.top().value;
    result.error_estimate += heap.top().error;
    heap.pop();
  }
  return result;
}

}  // namespace fedhet::privacy

#endif  // FEDHET_PRIVACY_QUADRATURE_H_
