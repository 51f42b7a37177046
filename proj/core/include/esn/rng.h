/*
 * Copyright 2026 The ESN Toolkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef ESN_RNG_H_
#define ESN_RNG_H_

#include <cstdint>
#include <random>
#include <vector>

namespace esn {

// Seeded generator with platform-independent derived distributions. The
// standard library pins the mt19937_64 output sequence but not the
// algorithms behind its distributions, so the ones needed here are defined
// locally on top of the raw engine output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of precision.
  double Uniform();

  // Standard normal via Box-Muller.
  double Normal();

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t Below(std::uint64_t n);

  // Uniformly random permutation of 0..n-1.
  std::vector<int> Permutation(int n);

  // `k` distinct values from [0, n), in draw order.
  std::vector<std::uint64_t> SampleWithoutReplacement(std::uint64_t n,
                                                      std::uint64_t k);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace esn

#endif  // ESN_RNG_H_
