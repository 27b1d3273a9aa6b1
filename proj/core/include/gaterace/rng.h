// Copyright 2026 The gaterace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GATERACE_RNG_H_
#define GATERACE_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace gaterace {

using Rng = std::mt19937_64;

// Independent generator derived from a root seed, a stream name
// ("track", "init", "rollout", ...) and an index within that stream.
Rng Substream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

// Seed value (rather than a generator) for APIs that take one.
std::uint64_t SubstreamSeed(std::uint64_t root_seed, std::string_view name,
                            std::uint64_t index = 0);

inline double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace gaterace

#endif  // GATERACE_RNG_H_
