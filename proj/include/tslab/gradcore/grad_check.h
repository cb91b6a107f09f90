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

#ifndef TSLAB_GRADCORE_GRAD_CHECK_H_
#define TSLAB_GRADCORE_GRAD_CHECK_H_

#include <functional>
#include <vector>

#include "tslab/gradcore/tensor.h"

namespace tslab {

struct GradCheckResult {
  double max_relative_error = 0.0;
  double max_abs_error = 0.0;
  int worst_index = -1;
};

using ScalarFunction = std::function<Tensor(const Tensor&)>;

// Compares the taped gradient of `f` at `input` with central differences,
// component by component:
//   |g - n| / max(|g|, |n|, 1e-3 * max_j |n_j|, 1e-12)
// The floor keeps components that are zero up to round-off from dominating.
GradCheckResult GradCheck(const ScalarFunction& f, const Tensor& input,
                          double eps = 1e-5);

// Same check for a leaf that lives inside `f` (e.g. a model parameter):
// `leaf` is perturbed in place and restored afterwards.
GradCheckResult GradCheckLeaf(const std::function<Tensor()>& f, Tensor leaf,
                              double eps = 1e-5);

// Joint check over several leaves, treated as one concatenated input: the
// floor comes from the largest numeric component across all of them, so a
// leaf whose gradient is identically zero (e.g. an attention key bias, which
// softmax cancels) is compared against the scale of the whole gradient.
// worst_index counts through the leaves in order.
GradCheckResult GradCheckLeaves(const std::function<Tensor()>& f,
                                const std::vector<Tensor>& leaves, double eps = 1e-5);

}  // namespace tslab

#endif  // TSLAB_GRADCORE_GRAD_CHECK_H_
