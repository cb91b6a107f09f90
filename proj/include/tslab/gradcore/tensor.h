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

#ifndef TSLAB_GRADCORE_TENSOR_H_
#define TSLAB_GRADCORE_TENSOR_H_

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tslab {

using Shape = std::vector<int>;

std::string ShapeString(const Shape& shape);
size_t ShapeSize(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  // Allocated lazily during backward.
  std::vector<double> grad;
  bool requires_grad = false;
  // True when produced by an op recorded on a tape (i.e. not a leaf).
  bool recorded = false;

  std::span<double> GradBuffer();
};

// Dense row-major tensor of doubles. Copies share storage; use Clone() for a
// deep copy. Rank 1 and 2 are the common cases, rank 3 holds conv weights.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor Zeros(const Shape& shape);
  static Tensor Filled(const Shape& shape, double value);
  static Tensor Scalar(double value);
  static Tensor Parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape.at(i); }
  size_t size() const { return node_->value.size(); }
  // Rows/cols for a rank-2 tensor; a rank-1 tensor is treated as one row.
  int rows() const;
  int cols() const;

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double operator[](size_t i) const { return node_->value[i]; }
  double at(int r, int c) const {
    return node_->value[static_cast<size_t>(r) * cols() + c];
  }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  Tensor Clone() const;
  // Same values, no graph history, requires_grad off.
  Tensor Detach() const { return Tensor(shape(), node_->value); }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared_node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// Gradients of a scalar w.r.t. the leaves reached during backward.
class Gradients {
 public:
  // Zero tensor of the right shape for leaves not on the loss path.
  Tensor Get(const Tensor& leaf) const;
  bool Contains(const Tensor& leaf) const;

 private:
  friend class Tape;
  std::unordered_map<const TensorNode*, std::vector<double>> grads_;
};

// Define-by-run record of ops. Constructing a Tape makes it the active tape
// for the calling thread until it is destroyed; ops whose inputs require
// gradients are recorded on the active tape. With no active tape, ops run in
// inference mode and record nothing.
class Tape {
 public:
  using BackwardFn =
      std::function<void(TensorNode& out, std::span<TensorNode* const> in)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* Active();

  void Record(std::vector<std::shared_ptr<TensorNode>> inputs,
              std::shared_ptr<TensorNode> output, BackwardFn backward);
  size_t size() const { return entries_.size(); }

  // Reverse sweep from a scalar loss. May be called once per tape.
  Gradients Backward(const Tensor& loss);

 private:
  struct Entry {
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::shared_ptr<TensorNode> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
  Tape* previous_ = nullptr;
};

// Suspends recording on this thread (e.g. evaluation inside a training step).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* saved_;
};

}  // namespace tslab

#endif  // TSLAB_GRADCORE_TENSOR_H_
