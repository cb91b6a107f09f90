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

#ifndef TSLAB_GRADCORE_OPS_H_
#define TSLAB_GRADCORE_OPS_H_

#include <span>
#include <string>
#include <vector>

#include "tslab/gradcore/tensor.h"

namespace tslab {

// Builds the output of a primitive: checks finiteness (naming `op`), and
// records `backward` on the active tape if any input requires a gradient.
// Fused ops outside gradcore (CTC, SI-SDR, LSTM) are built on this.
Tensor FinishOp(const char* op, Shape shape, std::vector<double> values,
                const std::vector<Tensor>& inputs, Tape::BackwardFn backward);

// Would an op over these inputs be recorded?
bool NeedsGrad(const std::vector<Tensor>& inputs);

namespace ops {

// a[m x k] * b[k x n].
Tensor MatMul(const Tensor& a, const Tensor& b);
// Same shape, or b rank 1 with b.size() == a.cols() (broadcast over rows).
Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
// Hadamard product; same broadcasting rule as Add.
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& x, double c);

Tensor Relu(const Tensor& x);
Tensor Tanh(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
// x * sigmoid(x)
Tensor Swish(const Tensor& x);

// Along the last axis (per row for rank 2).
Tensor Softmax(const Tensor& x);
Tensor LogSoftmax(const Tensor& x);

// Per-row normalization; gamma/beta may be undefined for the plain form.
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-8);

enum class PadMode { kSame, kValid };

// x[L x Cin], w[Cout x Cin x K] -> [Lout x Cout], explicit zero padding.
Tensor Conv1d(const Tensor& x, const Tensor& w, int stride, int pad_left,
              int pad_right);
Tensor Conv1d(const Tensor& x, const Tensor& w, int stride, PadMode mode);
// Adjoint of Conv1d(., w, stride, pad_left, *) for an input of length
// out_len: y[Lout x Cout] -> [out_len x Cin].
Tensor ConvTranspose1d(const Tensor& y, const Tensor& w, int stride,
                       int pad_left, int out_len);
// x[L x C], w[C x K], odd K, "same" padding.
Tensor DepthwiseConv1d(const Tensor& x, const Tensor& w);

// table[n x d], ids -> [ids.size() x d].
Tensor EmbeddingLookup(const Tensor& table, std::span<const int> ids);
// Rank-2 concat along axis 0 (rows) or 1 (columns).
Tensor Concat(const std::vector<Tensor>& parts, int axis);
// Rank-2 slice [begin, end) along axis.
Tensor Slice(const Tensor& x, int axis, int begin, int end);
Tensor Transpose(const Tensor& x);
Tensor Reshape(const Tensor& x, Shape shape);

// Full reductions return shape [1]. Axis reductions on rank 2 return rank 1.
Tensor ReduceSum(const Tensor& x);
Tensor ReduceMean(const Tensor& x);
Tensor ReduceSum(const Tensor& x, int axis);
Tensor ReduceMean(const Tensor& x, int axis);

// x[T x C], labels[T] -> [T] with x[t, labels[t]].
Tensor PickPerRow(const Tensor& x, std::span<const int> labels);

// Unidirectional LSTM over x[T x I]; gates ordered (i, f, g, o).
// w_ih[4H x I], w_hh[4H x H], bias[4H]. Returns hidden states [T x H].
Tensor Lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh,
            const Tensor& bias, bool reverse);

}  // namespace ops
}  // namespace tslab

#endif  // TSLAB_GRADCORE_OPS_H_
