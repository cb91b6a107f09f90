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

#include "tslab/downstream/layers.h"

#include <cmath>

#include "tslab/gradcore/ops.h"

namespace tslab {

Tensor ApplyCondition(const Tensor& features, const std::optional<Tensor>& embedding) {
  if (!embedding) return features;
  const Tensor& e = *embedding;
  if (features.rank() != 2 || e.rank() != 1 || features.dim(1) != e.dim(0)) {
    throw ContractError("condition: features " + ShapeString(features.shape()) +
                        " do not match embedding " + ShapeString(e.shape()));
  }
  return ops::Mul(features, e);
}

LinearLayer LinearLayer::Make(Rng* rng, int in, int out, double gain) {
  LinearLayer l;
  l.w = Tensor::Parameter({in, out}, RandomNormal(rng, static_cast<size_t>(in) * out,
                                                  gain / std::sqrt(static_cast<double>(in))));
  l.b = Tensor::Parameter({out}, std::vector<double>(out, 0.0));
  return l;
}

void LinearLayer::Register(ParameterSet* p, const std::string& name) const {
  p->Add(name + ".w", w);
  p->Add(name + ".b", b);
}

Tensor LinearLayer::operator()(const Tensor& x) const {
  return ops::Add(ops::MatMul(x, w), b);
}

LayerNormLayer LayerNormLayer::Make(int dim) {
  return {Tensor::Parameter({dim}, std::vector<double>(dim, 1.0)),
          Tensor::Parameter({dim}, std::vector<double>(dim, 0.0))};
}

void LayerNormLayer::Register(ParameterSet* p, const std::string& name) const {
  p->Add(name + ".gamma", gamma);
  p->Add(name + ".beta", beta);
}

Tensor LayerNormLayer::operator()(const Tensor& x) const {
  return ops::LayerNorm(x, gamma, beta);
}

BlstmLayer BlstmLayer::Make(Rng* rng, int in, int hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto bias = [&] {
    // Forget gate starts open.
    std::vector<double> b(4 * hidden, 0.0);
    for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    return Tensor::Parameter({4 * hidden}, b);
  };
  BlstmLayer l;
  l.fw_ih = Tensor::Parameter({4 * hidden, in}, RandomUniform(rng, 4 * hidden * in, bound));
  l.fw_hh = Tensor::Parameter({4 * hidden, hidden}, RandomUniform(rng, 4 * hidden * hidden, bound));
  l.fw_b = bias();
  l.bw_ih = Tensor::Parameter({4 * hidden, in}, RandomUniform(rng, 4 * hidden * in, bound));
  l.bw_hh = Tensor::Parameter({4 * hidden, hidden}, RandomUniform(rng, 4 * hidden * hidden, bound));
  l.bw_b = bias();
  return l;
}

void BlstmLayer::Register(ParameterSet* p, const std::string& name) const {
  p->Add(name + ".fw_ih", fw_ih);
  p->Add(name + ".fw_hh", fw_hh);
  p->Add(name + ".fw_b", fw_b);
  p->Add(name + ".bw_ih", bw_ih);
  p->Add(name + ".bw_hh", bw_hh);
  p->Add(name + ".bw_b", bw_b);
}

Tensor BlstmLayer::operator()(const Tensor& x) const {
  return ops::Concat({ops::Lstm(x, fw_ih, fw_hh, fw_b, false),
                      ops::Lstm(x, bw_ih, bw_hh, bw_b, true)},
                     1);
}

Tensor SinusoidalPositions(int frames, int dim) {
  std::vector<double> pe(static_cast<size_t>(frames) * dim);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe[static_cast<size_t>(t) * dim + i] = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  }
  return Tensor({frames, dim}, std::move(pe));
}

}  // namespace tslab
