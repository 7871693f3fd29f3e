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

#ifndef FEDHET_RANDOM_H_
#define FEDHET_RANDOM_H_

#include <cstdint>
#include <initializer_list>

namespace fedhet {

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream seed for (root, tag...). Used so every consumer of
// randomness (data, timing, batching, noise) draws from its own stream.
inline std::uint64_t DeriveSeed(std::uint64_t root,
                                std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = SplitMix64(root);
  for (std::uint64_t t : tags) h = SplitMix64(h ^ SplitMix64(t + 0x632be59bd9b4e019ULL));
  return h;
}

enum class Stream : std::uint64_t {
  kData = 1,
  kPartition = 2,
  kInit = 3,
  kTiming = 4,
  kTraining = 5,
};

inline std::uint64_t DeriveSeed(std::uint64_t root, Stream stream,
                                std::uint64_t a = 0, std::uint64_t b = 0) {
  return DeriveSeed(root, {static_cast<std::uint64_t>(stream), a, b});
}

}  // namespace fedhet

#endif  // FEDHET_RANDOM_H_
