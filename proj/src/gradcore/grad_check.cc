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

#include "tslab/gradcore/grad_check.h"

#include <algorithm>
#include <cmath>

#include "tslab/common.h"

namespace tslab {

namespace {

struct LeafGradients {
  std::vector<double> analytic, numeric;
};

LeafGradients Differentiate(const std::function<Tensor()>& f, Tensor leaf, double eps) {
  TSLAB_REQUIRE(eps > 0.0, "grad_check: eps must be positive");
  const bool saved_flag = leaf.requires_grad();
  leaf.set_requires_grad(true);
  LeafGradients g;
  {
    Tape tape;
    Tensor loss = f();
    TSLAB_REQUIRE(loss.size() == 1, "grad_check: function is not scalar-valued");
    Tensor a = tape.Backward(loss).Get(leaf);
    g.analytic.assign(a.values().begin(), a.values().end());
  }
  leaf.set_requires_grad(saved_flag);

  g.numeric.resize(leaf.size());
  NoGradScope no_grad;
  auto v = leaf.mutable_values();
  for (size_t i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + eps;
    double up = f().item();
    v[i] = orig - eps;
    double down = f().item();
    v[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("grad_check: non-finite function value");
    }
    g.numeric[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

GradCheckResult Compare(const std::vector<LeafGradients>& gs) {
  double scale = 0.0;
  for (const auto& g : gs) {
    for (double n : g.numeric) scale = std::max(scale, std::fabs(n));
  }
  const double floor = std::max(1e-3 * scale, 1e-12);
  GradCheckResult r;
  int offset = 0;
  for (const auto& g : gs) {
    for (size_t i = 0; i < g.numeric.size(); ++i) {
      double diff = std::fabs(g.analytic[i] - g.numeric[i]);
      double denom = std::max({std::fabs(g.analytic[i]), std::fabs(g.numeric[i]), floor});
      double rel = diff / denom;
      r.max_abs_error = std::max(r.max_abs_error, diff);
      if (rel >= r.max_relative_error) {
        r.max_relative_error = rel;
        r.worst_index = offset + static_cast<int>(i);
      }
    }
    offset += static_cast<int>(g.numeric.size());
  }
  return r;
}

}  // namespace

GradCheckResult GradCheckLeaf(const std::function<Tensor()>& f, Tensor leaf,
                              double eps) {
  return Compare({Differentiate(f, leaf, eps)});
}

GradCheckResult GradCheckLeaves(const std::function<Tensor()>& f,
                                const std::vector<Tensor>& leaves, double eps) {
  std::vector<LeafGradients> gs;
  for (const auto& leaf : leaves) gs.push_back(Differentiate(f, leaf, eps));
  return Compare(gs);
}

GradCheckResult GradCheck(const ScalarFunction& f, const Tensor& input,
                          double eps) {
  Tensor x = input.Clone();
  return GradCheckLeaf([&] { return f(x); }, x, eps);
}

}  // namespace tslab
