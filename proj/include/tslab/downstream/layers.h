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

#ifndef TSLAB_DOWNSTREAM_LAYERS_H_
#define TSLAB_DOWNSTREAM_LAYERS_H_

#include <optional>
#include <string>

#include "tslab/common.h"
#include "tslab/gradcore/optim.h"
#include "tslab/gradcore/tensor.h"

namespace tslab {

// Hadamard conditioning: features [T x D] times embedding [D], broadcast
// over frames. No embedding means the unconditioned network.
Tensor ApplyCondition(const Tensor& features, const std::optional<Tensor>& embedding);

struct LinearLayer {
  Tensor w;  // [in x out]
  Tensor b;  // [out]

  static LinearLayer Make(Rng* rng, int in, int out, double gain = 1.0);
  void Register(ParameterSet* p, const std::string& name) const;
  Tensor operator()(const Tensor& x) const;
  int in_dim() const { return w.dim(0); }
  int out_dim() const { return w.dim(1); }
};

struct LayerNormLayer {
  Tensor gamma, beta;

  static LayerNormLayer Make(int dim);
  void Register(ParameterSet* p, const std::string& name) const;
  Tensor operator()(const Tensor& x) const;
};

// Forward and backward LSTMs over the same input, outputs concatenated
// [T x 2H] (forward half first).
struct BlstmLayer {
  Tensor fw_ih, fw_hh, fw_b;
  Tensor bw_ih, bw_hh, bw_b;

  static BlstmLayer Make(Rng* rng, int in, int hidden);
  void Register(ParameterSet* p, const std::string& name) const;
  Tensor operator()(const Tensor& x) const;
  int hidden() const { return fw_hh.dim(1); }
};

// Sinusoidal absolute position table [T x D].
Tensor SinusoidalPositions(int frames, int dim);

}  // namespace tslab

#endif  // TSLAB_DOWNSTREAM_LAYERS_H_
