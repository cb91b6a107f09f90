// Copyright (c) 2026 The tslab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TSLAB_COMMON_H_
#define TSLAB_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace tslab {

// Violated precondition, shape mismatch, bad config, bad file. CLI exit 2.
class ContractError : public std::runtime_error {
 public:
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/Inf or divergence. CLI exit 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what) {}
};

#define TSLAB_REQUIRE(cond, msg)                                  \
  do {                                                            \
    if (!(cond)) throw ::tslab::ContractError(std::string(msg)); \
  } while (0)

// SplitMix64 finalizer; used to derive independent seeds from tuples.
inline uint64_t MixSeed(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t DeriveSeed(uint64_t a, uint64_t b) {
  return MixSeed(MixSeed(a) ^ (b * 0xD1B54A32D192ED03ULL));
}

inline uint64_t DeriveSeed(uint64_t a, uint64_t b, uint64_t c) {
  return DeriveSeed(DeriveSeed(a, b), c);
}

// Random source with platform-independent distributions. The std::
// distribution classes are implementation-defined, so they are avoided.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  // Uniform integer in [0, n).
  int UniformInt(int n);
  double Normal();
  template <typename T>
  void Shuffle(std::vector<T>* v) {
    for (int i = static_cast<int>(v->size()) - 1; i > 0; --i) {
      int j = UniformInt(i + 1);
      std::swap((*v)[i], (*v)[j]);
    }
  }

  std::string SaveState() const;
  void LoadState(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

inline double RoundToFloat(double x) {
  return static_cast<double>(static_cast<float>(x));
}

}  // namespace tslab

#endif  // TSLAB_COMMON_H_
