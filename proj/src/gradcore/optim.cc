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

#include "tslab/gradcore/optim.h"

#include <cmath>
#include <iostream>

namespace tslab {

void ParameterSet::Add(const std::string& name, const Tensor& t) {
  TSLAB_REQUIRE(t.defined(), "ParameterSet::Add: undefined tensor " + name);
  TSLAB_REQUIRE(Find(name) == nullptr,
                "ParameterSet::Add: duplicate parameter " + name);
  entries_.emplace_back(name, t);
}

void ParameterSet::Append(const std::string& prefix, const ParameterSet& other) {
  for (const auto& [n, t] : other.entries_) Add(prefix + n, t);
}

const Tensor* ParameterSet::Find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return &e.second;
  }
  return nullptr;
}

void ParameterSet::SetRequiresGrad(bool v) {
  for (auto& e : entries_) e.second.set_requires_grad(v);
}

size_t ParameterSet::ParameterCount() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.second.size();
  return n;
}

FreezeScope::FreezeScope(ParameterSet* params) : params_(params) {
  for (size_t i = 0; i < params_->size(); ++i) {
    saved_.push_back(params_->tensor(i).requires_grad());
  }
  params_->SetRequiresGrad(false);
}

FreezeScope::~FreezeScope() {
  for (size_t i = 0; i < params_->size(); ++i) {
    params_->tensor(i).set_requires_grad(saved_[i]);
  }
}

std::vector<double> RandomNormal(Rng* rng, size_t n, double scale) {
  std::vector<double> v(n);
  for (double& x : v) x = RoundToFloat(scale * rng->Normal());
  return v;
}

std::vector<double> RandomUniform(Rng* rng, size_t n, double bound) {
  std::vector<double> v(n);
  for (double& x : v) x = RoundToFloat(rng->Uniform(-bound, bound));
  return v;
}

void Adam::EnsureShapes(const std::vector<Tensor>& params) {
  if (state_.m.empty()) {
    Init(params);
    return;
  }
  TSLAB_REQUIRE(state_.m.size() == params.size(),
                "adam: state holds " + std::to_string(state_.m.size()) +
                    " tensors, got " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    TSLAB_REQUIRE(state_.m[i].size() == params[i].size(),
                  "adam: moment size mismatch for parameter " +
                      std::to_string(i) + " " + ShapeString(params[i].shape()));
  }
}

void Adam::Init(const std::vector<Tensor>& params) {
  state_ = AdamState{};
  for (const auto& p : params) {
    state_.m.emplace_back(p.size(), 0.0);
    state_.v.emplace_back(p.size(), 0.0);
  }
}

void Adam::Step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
                double rate) {
  TSLAB_REQUIRE(rate >= 0.0, "adam: negative learning rate");
  TSLAB_REQUIRE(params.size() == grads.size(),
                "adam: parameter/gradient count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw ContractError("adam: gradient shape " +
                          ShapeString(grads[i].shape()) +
                          " does not match parameter " +
                          ShapeString(params[i].shape()));
    }
  }
  EnsureShapes(params);
  ++state_.step;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state_.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_values();
    auto g = grads[i].values();
    auto& m = state_.m[i];
    auto& v = state_.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericalError("adam: non-finite gradient in parameter " +
                             std::to_string(i));
      }
      // Entries with an exactly zero gradient (unused embedding rows,
      // frozen paths) keep their value and moments.
      if (g[j] == 0.0) continue;
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      if (options_.float32_storage) {
        m[j] = RoundToFloat(m[j]);
        v[j] = RoundToFloat(v[j]);
      }
      double update = rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
      double next = p[j] - update;
      p[j] = options_.float32_storage ? RoundToFloat(next) : next;
    }
  }
}

void Adam::Step(ParameterSet* params, const Gradients& grads, double rate) {
  std::vector<Tensor> ps, gs;
  for (size_t i = 0; i < params->size(); ++i) {
    ps.push_back(params->tensor(i));
    gs.push_back(grads.Get(params->tensor(i)));
  }
  Step(ps, gs, rate);
}

std::vector<double> Adam::Direction(size_t index, std::span<const double> grad) {
  if (state_.m.size() <= index) {
    state_.m.resize(index + 1);
    state_.v.resize(index + 1);
  }
  auto& m = state_.m[index];
  auto& v = state_.v[index];
  if (m.empty()) {
    m.assign(grad.size(), 0.0);
    v.assign(grad.size(), 0.0);
  }
  TSLAB_REQUIRE(m.size() == grad.size(), "adam: direction size mismatch");
  ++state_.step;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(state_.step));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(state_.step));
  std::vector<double> d(grad.size());
  for (size_t j = 0; j < grad.size(); ++j) {
    m[j] = options_.beta1 * m[j] + (1.0 - options_.beta1) * grad[j];
    v[j] = options_.beta2 * v[j] + (1.0 - options_.beta2) * grad[j] * grad[j];
    d[j] = (m[j] / c1) / (std::sqrt(v[j] / c2) + options_.epsilon);
  }
  return d;
}

WarmupLinearSchedule::WarmupLinearSchedule(double peak_rate, long warmup_steps,
                                           long total_steps)
    : peak_rate_(peak_rate),
      warmup_steps_(warmup_steps),
      total_steps_(total_steps) {
  TSLAB_REQUIRE(peak_rate >= 0.0, "schedule: negative peak rate");
  TSLAB_REQUIRE(warmup_steps >= 0 && total_steps > 0 &&
                    warmup_steps <= total_steps,
                "schedule: need 0 <= warmup_steps <= total_steps, total > 0");
}

double WarmupLinearSchedule::Rate(long step) const {
  TSLAB_REQUIRE(step >= 0, "schedule: negative step");
  if (step > total_steps_) {
    std::cerr << "WARNING: schedule step " << step << " past total "
              << total_steps_ << ", rate clamped to 0\n";
    return 0.0;
  }
  if (step < warmup_steps_) {
    return peak_rate_ * static_cast<double>(step) / warmup_steps_;
  }
  if (total_steps_ == warmup_steps_) return peak_rate_;
  return peak_rate_ * static_cast<double>(total_steps_ - step) /
         static_cast<double>(total_steps_ - warmup_steps_);
}

}  // namespace tslab
