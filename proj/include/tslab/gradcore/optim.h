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

#ifndef TSLAB_GRADCORE_OPTIM_H_
#define TSLAB_GRADCORE_OPTIM_H_

#include <string>
#include <utility>
#include <vector>

#include "tslab/common.h"
#include "tslab/gradcore/tensor.h"

namespace tslab {

// Ordered, named collection of trainable tensors. Order fixes checkpoint
// layout and optimizer state layout.
class ParameterSet {
 public:
  void Add(const std::string& name, const Tensor& t);
  void Append(const std::string& prefix, const ParameterSet& other);

  size_t size() const { return entries_.size(); }
  const std::string& name(size_t i) const { return entries_[i].first; }
  const Tensor& tensor(size_t i) const { return entries_[i].second; }
  Tensor& tensor(size_t i) { return entries_[i].second; }
  const Tensor* Find(const std::string& name) const;

  void SetRequiresGrad(bool v);
  size_t ParameterCount() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

// Freezes a parameter set for the scope's lifetime and restores the previous
// flags afterwards. Values are not touched.
class FreezeScope {
 public:
  explicit FreezeScope(ParameterSet* params);
  ~FreezeScope();
  FreezeScope(const FreezeScope&) = delete;
  FreezeScope& operator=(const FreezeScope&) = delete;

 private:
  ParameterSet* params_;
  std::vector<bool> saved_;
};

// Draws parameter values: N(0, scale^2), rounded to float32 storage.
std::vector<double> RandomNormal(Rng* rng, size_t n, double scale);
std::vector<double> RandomUniform(Rng* rng, size_t n, double bound);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Round parameters and moments to float32 after each step, so a float32
  // checkpoint holds the state exactly.
  bool float32_storage = true;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  long step = 0;
};

// Bias-corrected Adam. Zero gradients leave the parameters untouched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void Init(const std::vector<Tensor>& params);
  void Step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
            double rate);
  void Step(ParameterSet* params, const Gradients& grads, double rate);

  // Update direction m_hat / (sqrt(v_hat) + eps) for one tensor-shaped
  // gradient; advances the state. Used where the caller applies the step.
  std::vector<double> Direction(size_t index, std::span<const double> grad);

  const AdamState& state() const { return state_; }
  AdamState& mutable_state() { return state_; }
  const AdamOptions& options() const { return options_; }

 private:
  void EnsureShapes(const std::vector<Tensor>& params);

  AdamOptions options_;
  AdamState state_;
};

// Linear warmup 0 -> peak over warmup_steps, then linear decay to 0 at
// total_steps. Steps past the end are clamped to 0 with a warning.
class WarmupLinearSchedule {
 public:
  WarmupLinearSchedule(double peak_rate, long warmup_steps, long total_steps);
  double Rate(long step) const;

  double peak_rate() const { return peak_rate_; }
  long warmup_steps() const { return warmup_steps_; }
  long total_steps() const { return total_steps_; }

 private:
  double peak_rate_;
  long warmup_steps_;
  long total_steps_;
};

}  // namespace tslab

#endif  // TSLAB_GRADCORE_OPTIM_H_
