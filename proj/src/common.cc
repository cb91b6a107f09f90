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

#include "tslab/common.h"

#include <cmath>
#include <numbers>
#include <sstream>

namespace tslab {

int Rng::UniformInt(int n) {
  TSLAB_REQUIRE(n > 0, "Rng::UniformInt: n must be positive");
  int k = static_cast<int>(Uniform() * n);
  return k < n ? k : n - 1;
}

double Rng::Normal() {
  double u1 = Uniform();
  double u2 = Uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::SaveState() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::LoadState(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  TSLAB_REQUIRE(!is.fail(), "Rng::LoadState: malformed state string");
}

}  // namespace tslab
