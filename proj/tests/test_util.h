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

#ifndef TSLAB_TESTS_TEST_UTIL_H_
#define TSLAB_TESTS_TEST_UTIL_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tslab/common.h"
#include "tslab/gradcore/tensor.h"

namespace tslab::test {

Tensor RandomTensor(Rng* rng, const Shape& shape, double scale = 1.0,
                    bool requires_grad = false);

// Fails the current doctest case if any |a - b| > tol.
void CheckClose(std::span<const double> a, std::span<const double> b,
                double tol);

// Max relative finite-difference error over every input of a random
// instance, loss = sum(op(inputs) * R) for a fixed random R.
struct OpGradCase {
  std::string name;
  std::function<double(Rng*)> run;
};
const std::vector<OpGradCase>& OpGradCases();

// Checks every leaf of `f` with GradCheckLeaf and returns the worst error.
double WorstLeafError(const std::function<Tensor()>& f,
                      const std::vector<Tensor>& leaves, double eps = 1e-5);

}  // namespace tslab::test

#endif  // TSLAB_TESTS_TEST_UTIL_H_
