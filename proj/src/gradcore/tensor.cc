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

#include "tslab/gradcore/tensor.h"

#include <sstream>

#include "tslab/common.h"

namespace tslab {
namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

size_t ShapeSize(const Shape& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

std::span<double> TensorNode::GradBuffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  for (int d : shape) {
    TSLAB_REQUIRE(d > 0, "Tensor: non-positive extent in shape " +
                             ShapeString(shape));
  }
  TSLAB_REQUIRE(ShapeSize(shape) == values.size(),
                "Tensor: shape " + ShapeString(shape) + " needs " +
                    std::to_string(ShapeSize(shape)) + " values, got " +
                    std::to_string(values.size()));
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::Zeros(const Shape& shape) {
  return Tensor(shape, std::vector<double>(ShapeSize(shape), 0.0));
}

Tensor Tensor::Filled(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(ShapeSize(shape), value));
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Parameter(Shape shape, std::vector<double> values) {
  return Tensor(std::move(shape), std::move(values), true);
}

int Tensor::rows() const {
  TSLAB_REQUIRE(rank() <= 2, "Tensor::rows on rank " + std::to_string(rank()));
  return rank() == 1 ? 1 : dim(0);
}

int Tensor::cols() const {
  TSLAB_REQUIRE(rank() <= 2, "Tensor::cols on rank " + std::to_string(rank()));
  return rank() == 1 ? dim(0) : dim(1);
}

double Tensor::item() const {
  TSLAB_REQUIRE(size() == 1, "Tensor::item on shape " + ShapeString(shape()));
  return node_->value[0];
}

Tensor Tensor::Clone() const {
  return Tensor(shape(), node_->value, node_->requires_grad);
}

Tensor Gradients::Get(const Tensor& leaf) const {
  auto it = grads_.find(leaf.node());
  if (it == grads_.end()) return Tensor::Zeros(leaf.shape());
  return Tensor(leaf.shape(), it->second);
}

bool Gradients::Contains(const Tensor& leaf) const {
  return grads_.count(leaf.node()) > 0;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::Active() { return g_active_tape; }

void Tape::Record(std::vector<std::shared_ptr<TensorNode>> inputs,
                  std::shared_ptr<TensorNode> output, BackwardFn backward) {
  TSLAB_REQUIRE(!consumed_, "Tape::Record: tape already consumed by backward");
  output->recorded = true;
  output->requires_grad = true;
  entries_.push_back({std::move(inputs), std::move(output),
                      std::move(backward)});
}

Gradients Tape::Backward(const Tensor& loss) {
  TSLAB_REQUIRE(!consumed_, "backward called twice on one tape");
  TSLAB_REQUIRE(loss.defined() && loss.size() == 1,
                "backward needs a scalar loss, got shape " +
                    (loss.defined() ? ShapeString(loss.shape()) : "<null>"));
  consumed_ = true;
  Gradients out;
  if (!loss.requires_grad()) return out;

  loss.node()->GradBuffer()[0] = 1.0;
  std::vector<TensorNode*> raw;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    TensorNode& node = *it->output;
    if (node.grad.empty()) continue;  // not upstream of the loss
    raw.clear();
    for (auto& in : it->inputs) raw.push_back(in.get());
    it->backward(node, raw);
  }

  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (!in->recorded && in->requires_grad && !in->grad.empty()) {
        out.grads_[in.get()] = std::move(in->grad);
        in->grad.clear();
      }
    }
  }
  for (auto& e : entries_) {
    e.output->grad.clear();
    e.output->grad.shrink_to_fit();
  }
  return out;
}

NoGradScope::NoGradScope() : saved_(g_active_tape) { g_active_tape = nullptr; }

NoGradScope::~NoGradScope() { g_active_tape = saved_; }

}  // namespace tslab
