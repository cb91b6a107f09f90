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

#include "tslab/gradcore/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "tslab/common.h"

namespace tslab {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

bool NeedsGrad(const std::vector<Tensor>& inputs) {
  if (Tape::Active() == nullptr) return false;
  for (const auto& t : inputs) {
    if (t.defined() && t.requires_grad()) return true;
  }
  return false;
}

Tensor FinishOp(const char* op, Shape shape, std::vector<double> values,
                const std::vector<Tensor>& inputs, Tape::BackwardFn backward) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("op ") + op +
                           " produced a non-finite value (output shape " +
                           ShapeString(shape) + ")");
    }
  }
  Tensor out(std::move(shape), std::move(values));
  if (NeedsGrad(inputs)) {
    std::vector<std::shared_ptr<TensorNode>> nodes;
    nodes.reserve(inputs.size());
    for (const auto& t : inputs) nodes.push_back(t.shared_node());
    Tape::Active()->Record(std::move(nodes), out.shared_node(),
                           std::move(backward));
  }
  return out;
}

namespace ops {
namespace {

void RequireRank2(const char* op, const Tensor& x) {
  if (x.rank() != 2) {
    throw ContractError(std::string(op) + ": expected rank-2 input, got " +
                        ShapeString(x.shape()));
  }
}

ConstMapMat AsMat(const Tensor& t, int rows, int cols) {
  return ConstMapMat(t.values().data(), rows, cols);
}

// Shape check shared by Add/Sub/Mul.
bool IsRowBroadcast(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return false;
  if (b.rank() == 1 && a.rank() == 2 && b.dim(0) == a.dim(1)) return true;
  throw ContractError(std::string(op) + ": shape mismatch " +
                      ShapeString(a.shape()) + " vs " +
                      ShapeString(b.shape()));
}

template <typename Fwd, typename Deriv>
Tensor Elementwise(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  std::vector<double> y(x.size());
  auto xv = x.values();
  for (size_t i = 0; i < y.size(); ++i) y[i] = fwd(xv[i]);
  return FinishOp(op, x.shape(), std::move(y), {x},
                  [deriv](TensorNode& out, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t i = 0; i < g.size(); ++i) {
                      g[i] += out.grad[i] * deriv(in[0]->value[i], out.value[i]);
                    }
                  });
}

// Patches [Lout x Cin*K] for a [L x Cin] signal; positions outside [0, L)
// read as zero.
RowMat Im2Col(std::span<const double> x, int len, int cin, int k, int stride,
              int pad_left, int lout) {
  RowMat p = RowMat::Zero(lout, static_cast<Eigen::Index>(cin) * k);
  for (int t = 0; t < lout; ++t) {
    for (int kk = 0; kk < k; ++kk) {
      int j = t * stride + kk - pad_left;
      if (j < 0 || j >= len) continue;
      for (int c = 0; c < cin; ++c) {
        p(t, static_cast<Eigen::Index>(c) * k + kk) =
            x[static_cast<size_t>(j) * cin + c];
      }
    }
  }
  return p;
}

void Col2ImAdd(const RowMat& p, int len, int cin, int k, int stride,
               int pad_left, std::span<double> x) {
  const int lout = static_cast<int>(p.rows());
  for (int t = 0; t < lout; ++t) {
    for (int kk = 0; kk < k; ++kk) {
      int j = t * stride + kk - pad_left;
      if (j < 0 || j >= len) continue;
      for (int c = 0; c < cin; ++c) {
        x[static_cast<size_t>(j) * cin + c] +=
            p(t, static_cast<Eigen::Index>(c) * k + kk);
      }
    }
  }
}

}  // namespace

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank2("matmul", a);
  RequireRank2("matmul", b);
  if (a.dim(1) != b.dim(0)) {
    throw ContractError("matmul: inner dimensions differ, " +
                        ShapeString(a.shape()) + " x " +
                        ShapeString(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  MapMat(out.data(), m, n).noalias() = AsMat(a, m, k) * AsMat(b, k, n);
  return FinishOp(
      "matmul", {m, n}, std::move(out), {a, b},
      [m, k, n](TensorNode& o, std::span<TensorNode* const> in) {
        ConstMapMat dy(o.grad.data(), m, n);
        if (in[0]->requires_grad) {
          MapMat(in[0]->GradBuffer().data(), m, k).noalias() +=
              dy * ConstMapMat(in[1]->value.data(), k, n).transpose();
        }
        if (in[1]->requires_grad) {
          MapMat(in[1]->GradBuffer().data(), k, n).noalias() +=
              ConstMapMat(in[0]->value.data(), m, k).transpose() * dy;
        }
      });
}

Tensor Add(const Tensor& a, const Tensor& b) {
  const bool bc = IsRowBroadcast("add", a, b);
  std::vector<double> y(a.values().begin(), a.values().end());
  auto bv = b.values();
  const size_t nb = b.size();
  for (size_t i = 0; i < y.size(); ++i) y[i] += bv[bc ? i % nb : i];
  return FinishOp("add", a.shape(), std::move(y), {a, b},
                  [bc, nb](TensorNode& o, std::span<TensorNode* const> in) {
                    if (in[0]->requires_grad) {
                      auto g = in[0]->GradBuffer();
                      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                    }
                    if (in[1]->requires_grad) {
                      auto g = in[1]->GradBuffer();
                      for (size_t i = 0; i < o.grad.size(); ++i) {
                        g[bc ? i % nb : i] += o.grad[i];
                      }
                    }
                  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  const bool bc = IsRowBroadcast("sub", a, b);
  std::vector<double> y(a.values().begin(), a.values().end());
  auto bv = b.values();
  const size_t nb = b.size();
  for (size_t i = 0; i < y.size(); ++i) y[i] -= bv[bc ? i % nb : i];
  return FinishOp("sub", a.shape(), std::move(y), {a, b},
                  [bc, nb](TensorNode& o, std::span<TensorNode* const> in) {
                    if (in[0]->requires_grad) {
                      auto g = in[0]->GradBuffer();
                      for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                    }
                    if (in[1]->requires_grad) {
                      auto g = in[1]->GradBuffer();
                      for (size_t i = 0; i < o.grad.size(); ++i) {
                        g[bc ? i % nb : i] -= o.grad[i];
                      }
                    }
                  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  const bool bc = IsRowBroadcast("mul", a, b);
  auto av = a.values();
  auto bv = b.values();
  const size_t nb = b.size();
  std::vector<double> y(a.size());
  for (size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[bc ? i % nb : i];
  return FinishOp("mul", a.shape(), std::move(y), {a, b},
                  [bc, nb](TensorNode& o, std::span<TensorNode* const> in) {
                    const auto& av = in[0]->value;
                    const auto& bv = in[1]->value;
                    if (in[0]->requires_grad) {
                      auto g = in[0]->GradBuffer();
                      for (size_t i = 0; i < g.size(); ++i) {
                        g[i] += o.grad[i] * bv[bc ? i % nb : i];
                      }
                    }
                    if (in[1]->requires_grad) {
                      auto g = in[1]->GradBuffer();
                      for (size_t i = 0; i < o.grad.size(); ++i) {
                        g[bc ? i % nb : i] += o.grad[i] * av[i];
                      }
                    }
                  });
}

Tensor Scale(const Tensor& x, double c) {
  return Elementwise(
      "scale", x, [c](double v) { return c * v; },
      [c](double, double) { return c; });
}

Tensor Relu(const Tensor& x) {
  return Elementwise(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor Tanh(const Tensor& x) {
  return Elementwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor Sigmoid(const Tensor& x) {
  return Elementwise(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Swish(const Tensor& x) {
  return Elementwise(
      "swish", x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor Softmax(const Tensor& x) {
  const int rows = x.rank() == 1 ? 1 : x.dim(0);
  const int cols = static_cast<int>(x.size()) / rows;
  auto xv = x.values();
  std::vector<double> y(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<size_t>(r) * cols;
    double* yr = y.data() + static_cast<size_t>(r) * cols;
    double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += (yr[c] = std::exp(xr[c] - mx));
    for (int c = 0; c < cols; ++c) yr[c] /= s;
  }
  return FinishOp("softmax", x.shape(), std::move(y), {x},
                  [rows, cols](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (int r = 0; r < rows; ++r) {
                      size_t base = static_cast<size_t>(r) * cols;
                      double dot = 0.0;
                      for (int c = 0; c < cols; ++c) {
                        dot += o.grad[base + c] * o.value[base + c];
                      }
                      for (int c = 0; c < cols; ++c) {
                        g[base + c] += o.value[base + c] * (o.grad[base + c] - dot);
                      }
                    }
                  });
}

Tensor LogSoftmax(const Tensor& x) {
  const int rows = x.rank() == 1 ? 1 : x.dim(0);
  const int cols = static_cast<int>(x.size()) / rows;
  auto xv = x.values();
  std::vector<double> y(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<size_t>(r) * cols;
    double* yr = y.data() + static_cast<size_t>(r) * cols;
    double mx = *std::max_element(xr, xr + cols);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += std::exp(xr[c] - mx);
    double lse = mx + std::log(s);
    for (int c = 0; c < cols; ++c) yr[c] = xr[c] - lse;
  }
  return FinishOp("log-softmax", x.shape(), std::move(y), {x},
                  [rows, cols](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (int r = 0; r < rows; ++r) {
                      size_t base = static_cast<size_t>(r) * cols;
                      double s = 0.0;
                      for (int c = 0; c < cols; ++c) s += o.grad[base + c];
                      for (int c = 0; c < cols; ++c) {
                        g[base + c] += o.grad[base + c] -
                                       std::exp(o.value[base + c]) * s;
                      }
                    }
                  });
}

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  RequireRank2("layer-norm", x);
  const int rows = x.dim(0), cols = x.dim(1);
  const bool affine = gamma.defined();
  if (affine) {
    TSLAB_REQUIRE(beta.defined() && gamma.size() == static_cast<size_t>(cols) &&
                      beta.size() == static_cast<size_t>(cols),
                  "layer-norm: gamma/beta must have " + std::to_string(cols) +
                      " entries");
  }
  auto xv = x.values();
  std::vector<double> xhat(x.size()), inv_std(rows), y(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* xr = xv.data() + static_cast<size_t>(r) * cols;
    double mean = 0.0;
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= cols;
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      size_t i = static_cast<size_t>(r) * cols + c;
      xhat[i] = (xr[c] - mean) * inv_std[r];
      y[i] = affine ? gamma[c] * xhat[i] + beta[c] : xhat[i];
    }
  }
  std::vector<Tensor> inputs = {x};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return FinishOp(
      "layer-norm", x.shape(), std::move(y), inputs,
      [rows, cols, affine, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](TensorNode& o,
                                     std::span<TensorNode* const> in) {
        if (affine && in[1]->requires_grad) {
          auto gg = in[1]->GradBuffer();
          for (size_t i = 0; i < o.grad.size(); ++i) {
            gg[i % cols] += o.grad[i] * xhat[i];
          }
        }
        if (affine && in[2]->requires_grad) {
          auto gb = in[2]->GradBuffer();
          for (size_t i = 0; i < o.grad.size(); ++i) gb[i % cols] += o.grad[i];
        }
        if (!in[0]->requires_grad) return;
        auto gx = in[0]->GradBuffer();
        std::vector<double> dxhat(cols);
        for (int r = 0; r < rows; ++r) {
          size_t base = static_cast<size_t>(r) * cols;
          double m1 = 0.0, m2 = 0.0;
          for (int c = 0; c < cols; ++c) {
            dxhat[c] = o.grad[base + c] * (affine ? in[1]->value[c] : 1.0);
            m1 += dxhat[c];
            m2 += dxhat[c] * xhat[base + c];
          }
          m1 /= cols;
          m2 /= cols;
          for (int c = 0; c < cols; ++c) {
            gx[base + c] +=
                inv_std[r] * (dxhat[c] - m1 - xhat[base + c] * m2);
          }
        }
      });
}

Tensor Conv1d(const Tensor& x, const Tensor& w, int stride, int pad_left,
              int pad_right) {
  RequireRank2("conv1d", x);
  TSLAB_REQUIRE(w.rank() == 3, "conv1d: weight must be [Cout x Cin x K], got " +
                                   ShapeString(w.shape()));
  const int len = x.dim(0), cin = x.dim(1);
  const int cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin) {
    throw ContractError("conv1d: input channels " + std::to_string(cin) +
                        " do not match weight " + ShapeString(w.shape()));
  }
  TSLAB_REQUIRE(stride >= 1 && pad_left >= 0 && pad_right >= 0,
                "conv1d: bad stride/padding");
  const int padded = len + pad_left + pad_right;
  if (padded < k) {
    throw ContractError("conv1d: input " + ShapeString(x.shape()) +
                        " shorter than kernel " + std::to_string(k));
  }
  const int lout = (padded - k) / stride + 1;
  RowMat patches = Im2Col(x.values(), len, cin, k, stride, pad_left, lout);
  std::vector<double> y(static_cast<size_t>(lout) * cout);
  MapMat(y.data(), lout, cout).noalias() =
      patches * AsMat(w, cout, cin * k).transpose();
  return FinishOp(
      "conv1d", {lout, cout}, std::move(y), {x, w},
      [len, cin, cout, k, stride, pad_left, lout,
       patches = std::move(patches)](TensorNode& o,
                                     std::span<TensorNode* const> in) {
        ConstMapMat dy(o.grad.data(), lout, cout);
        if (in[1]->requires_grad) {
          MapMat(in[1]->GradBuffer().data(), cout, cin * k).noalias() +=
              dy.transpose() * patches;
        }
        if (in[0]->requires_grad) {
          RowMat dp = dy * ConstMapMat(in[1]->value.data(), cout, cin * k);
          Col2ImAdd(dp, len, cin, k, stride, pad_left, in[0]->GradBuffer());
        }
      });
}

Tensor Conv1d(const Tensor& x, const Tensor& w, int stride, PadMode mode) {
  if (mode == PadMode::kValid) return Conv1d(x, w, stride, 0, 0);
  TSLAB_REQUIRE(w.rank() == 3, "conv1d: weight must be rank 3");
  const int k = w.dim(2);
  // Output length ceil(L / stride).
  const int len = x.dim(0);
  const int lout = (len + stride - 1) / stride;
  const int total = std::max(0, (lout - 1) * stride + k - len);
  return Conv1d(x, w, stride, total / 2, total - total / 2);
}

Tensor ConvTranspose1d(const Tensor& y, const Tensor& w, int stride,
                       int pad_left, int out_len) {
  RequireRank2("transposed-conv1d", y);
  TSLAB_REQUIRE(w.rank() == 3,
                "transposed-conv1d: weight must be [Cout x Cin x K], got " +
                    ShapeString(w.shape()));
  const int lout = y.dim(0), cout = y.dim(1);
  const int cin = w.dim(1), k = w.dim(2);
  if (w.dim(0) != cout) {
    throw ContractError("transposed-conv1d: input channels " +
                        std::to_string(cout) + " do not match weight " +
                        ShapeString(w.shape()));
  }
  TSLAB_REQUIRE(out_len >= 1 && stride >= 1 && pad_left >= 0,
                "transposed-conv1d: bad output length/stride/padding");
  RowMat cols = AsMat(y, lout, cout) * AsMat(w, cout, cin * k);
  std::vector<double> x(static_cast<size_t>(out_len) * cin, 0.0);
  Col2ImAdd(cols, out_len, cin, k, stride, pad_left, x);
  return FinishOp(
      "transposed-conv1d", {out_len, cin}, std::move(x), {y, w},
      [lout, cout, cin, k, stride, pad_left, out_len](
          TensorNode& o, std::span<TensorNode* const> in) {
        RowMat pdx = Im2Col(o.grad, out_len, cin, k, stride, pad_left, lout);
        if (in[0]->requires_grad) {
          MapMat(in[0]->GradBuffer().data(), lout, cout).noalias() +=
              pdx * ConstMapMat(in[1]->value.data(), cout, cin * k).transpose();
        }
        if (in[1]->requires_grad) {
          MapMat(in[1]->GradBuffer().data(), cout, cin * k).noalias() +=
              ConstMapMat(in[0]->value.data(), lout, cout).transpose() * pdx;
        }
      });
}

Tensor DepthwiseConv1d(const Tensor& x, const Tensor& w) {
  RequireRank2("depthwise-conv1d", x);
  RequireRank2("depthwise-conv1d", w);
  const int len = x.dim(0), ch = x.dim(1), k = w.dim(1);
  if (w.dim(0) != ch || k % 2 == 0) {
    throw ContractError("depthwise-conv1d: weight " + ShapeString(w.shape()) +
                        " incompatible with input " + ShapeString(x.shape()) +
                        " (need [C x odd K])");
  }
  const int half = k / 2;
  auto xv = x.values();
  auto wv = w.values();
  std::vector<double> y(x.size(), 0.0);
  for (int t = 0; t < len; ++t) {
    for (int kk = 0; kk < k; ++kk) {
      int j = t + kk - half;
      if (j < 0 || j >= len) continue;
      for (int c = 0; c < ch; ++c) {
        y[static_cast<size_t>(t) * ch + c] +=
            wv[static_cast<size_t>(c) * k + kk] * xv[static_cast<size_t>(j) * ch + c];
      }
    }
  }
  return FinishOp(
      "depthwise-conv1d", x.shape(), std::move(y), {x, w},
      [len, ch, k, half](TensorNode& o, std::span<TensorNode* const> in) {
        const auto& xv = in[0]->value;
        const auto& wv = in[1]->value;
        std::span<double> gx, gw;
        if (in[0]->requires_grad) gx = in[0]->GradBuffer();
        if (in[1]->requires_grad) gw = in[1]->GradBuffer();
        for (int t = 0; t < len; ++t) {
          for (int kk = 0; kk < k; ++kk) {
            int j = t + kk - half;
            if (j < 0 || j >= len) continue;
            for (int c = 0; c < ch; ++c) {
              double dy = o.grad[static_cast<size_t>(t) * ch + c];
              if (!gx.empty()) {
                gx[static_cast<size_t>(j) * ch + c] +=
                    wv[static_cast<size_t>(c) * k + kk] * dy;
              }
              if (!gw.empty()) {
                gw[static_cast<size_t>(c) * k + kk] +=
                    xv[static_cast<size_t>(j) * ch + c] * dy;
              }
            }
          }
        }
      });
}

Tensor EmbeddingLookup(const Tensor& table, std::span<const int> ids) {
  RequireRank2("embedding-lookup", table);
  TSLAB_REQUIRE(!ids.empty(), "embedding-lookup: empty id list");
  const int n = table.dim(0), d = table.dim(1);
  std::vector<int> idv(ids.begin(), ids.end());
  std::vector<double> y(idv.size() * d);
  auto tv = table.values();
  for (size_t r = 0; r < idv.size(); ++r) {
    if (idv[r] < 0 || idv[r] >= n) {
      throw ContractError("embedding-lookup: id " + std::to_string(idv[r]) +
                          " outside table of " + std::to_string(n) + " rows");
    }
    std::copy_n(tv.data() + static_cast<size_t>(idv[r]) * d, d,
                y.data() + r * d);
  }
  const int rows = static_cast<int>(idv.size());
  return FinishOp("embedding-lookup", {rows, d}, std::move(y), {table},
                  [idv = std::move(idv), d](TensorNode& o,
                                            std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t r = 0; r < idv.size(); ++r) {
                      for (int c = 0; c < d; ++c) {
                        g[static_cast<size_t>(idv[r]) * d + c] +=
                            o.grad[r * d + c];
                      }
                    }
                  });
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  TSLAB_REQUIRE(!parts.empty(), "concat: no inputs");
  TSLAB_REQUIRE(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  for (const auto& p : parts) RequireRank2("concat", p);
  const int other = parts[0].dim(1 - axis);
  std::vector<int> extents;
  int total = 0;
  for (const auto& p : parts) {
    if (p.dim(1 - axis) != other) {
      throw ContractError("concat: shape mismatch " +
                          ShapeString(parts[0].shape()) + " vs " +
                          ShapeString(p.shape()) + " along axis " +
                          std::to_string(axis));
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  const int rows = axis == 0 ? total : other;
  const int cols = axis == 0 ? other : total;
  std::vector<double> y(static_cast<size_t>(rows) * cols);
  int offset = 0;
  for (size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].values();
    const int pc = parts[p].dim(1);
    for (int r = 0; r < parts[p].dim(0); ++r) {
      for (int c = 0; c < pc; ++c) {
        int rr = axis == 0 ? r + offset : r;
        int cc = axis == 0 ? c : c + offset;
        y[static_cast<size_t>(rr) * cols + cc] = v[static_cast<size_t>(r) * pc + c];
      }
    }
    offset += extents[p];
  }
  return FinishOp(
      "concat", {rows, cols}, std::move(y), parts,
      [axis, cols, extents = std::move(extents)](
          TensorNode& o, std::span<TensorNode* const> in) {
        int offset = 0;
        for (size_t p = 0; p < in.size(); ++p) {
          if (in[p]->requires_grad) {
            auto g = in[p]->GradBuffer();
            const int pr = in[p]->shape[0], pc = in[p]->shape[1];
            for (int r = 0; r < pr; ++r) {
              for (int c = 0; c < pc; ++c) {
                int rr = axis == 0 ? r + offset : r;
                int cc = axis == 0 ? c : c + offset;
                g[static_cast<size_t>(r) * pc + c] +=
                    o.grad[static_cast<size_t>(rr) * cols + cc];
              }
            }
          }
          offset += extents[p];
        }
      });
}

Tensor Slice(const Tensor& x, int axis, int begin, int end) {
  RequireRank2("slice", x);
  TSLAB_REQUIRE(axis == 0 || axis == 1, "slice: axis must be 0 or 1");
  if (begin < 0 || end > x.dim(axis) || begin >= end) {
    throw ContractError("slice: range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") invalid for " +
                        ShapeString(x.shape()) + " axis " +
                        std::to_string(axis));
  }
  const int in_cols = x.dim(1);
  const int rows = axis == 0 ? end - begin : x.dim(0);
  const int cols = axis == 0 ? in_cols : end - begin;
  const int r0 = axis == 0 ? begin : 0, c0 = axis == 0 ? 0 : begin;
  auto xv = x.values();
  std::vector<double> y(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    std::copy_n(xv.data() + static_cast<size_t>(r + r0) * in_cols + c0, cols,
                y.data() + static_cast<size_t>(r) * cols);
  }
  return FinishOp("slice", {rows, cols}, std::move(y), {x},
                  [rows, cols, r0, c0, in_cols](
                      TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (int r = 0; r < rows; ++r) {
                      for (int c = 0; c < cols; ++c) {
                        g[static_cast<size_t>(r + r0) * in_cols + c + c0] +=
                            o.grad[static_cast<size_t>(r) * cols + c];
                      }
                    }
                  });
}

Tensor Transpose(const Tensor& x) {
  RequireRank2("transpose", x);
  const int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> y(x.size());
  MapMat(y.data(), cols, rows) = AsMat(x, rows, cols).transpose();
  return FinishOp("transpose", {cols, rows}, std::move(y), {x},
                  [rows, cols](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    MapMat(in[0]->GradBuffer().data(), rows, cols) +=
                        ConstMapMat(o.grad.data(), cols, rows).transpose();
                  });
}

Tensor Reshape(const Tensor& x, Shape shape) {
  if (ShapeSize(shape) != x.size()) {
    throw ContractError("reshape: cannot view " + ShapeString(x.shape()) +
                        " as " + ShapeString(shape));
  }
  std::vector<double> y(x.values().begin(), x.values().end());
  return FinishOp("reshape", std::move(shape), std::move(y), {x},
                  [](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
                  });
}

Tensor ReduceSum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return FinishOp("reduce-sum", {1}, {s}, {x},
                  [](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (double& v : g) v += o.grad[0];
                  });
}

Tensor ReduceMean(const Tensor& x) {
  return Scale(ReduceSum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor ReduceSum(const Tensor& x, int axis) {
  RequireRank2("reduce-sum", x);
  TSLAB_REQUIRE(axis == 0 || axis == 1, "reduce-sum: axis must be 0 or 1");
  const int rows = x.dim(0), cols = x.dim(1);
  const int n = axis == 0 ? cols : rows;
  std::vector<double> y(n, 0.0);
  auto xv = x.values();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      y[axis == 0 ? c : r] += xv[static_cast<size_t>(r) * cols + c];
    }
  }
  return FinishOp("reduce-sum", {n}, std::move(y), {x},
                  [axis, rows, cols](TensorNode& o,
                                     std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (int r = 0; r < rows; ++r) {
                      for (int c = 0; c < cols; ++c) {
                        g[static_cast<size_t>(r) * cols + c] +=
                            o.grad[axis == 0 ? c : r];
                      }
                    }
                  });
}

Tensor ReduceMean(const Tensor& x, int axis) {
  RequireRank2("reduce-mean", x);
  const int n = axis == 0 ? x.dim(0) : x.dim(1);
  return Scale(ReduceSum(x, axis), 1.0 / n);
}

Tensor PickPerRow(const Tensor& x, std::span<const int> labels) {
  RequireRank2("pick-per-row", x);
  const int rows = x.dim(0), cols = x.dim(1);
  if (static_cast<int>(labels.size()) != rows) {
    throw ContractError("pick-per-row: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(rows) + " rows");
  }
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<double> y(rows);
  for (int r = 0; r < rows; ++r) {
    if (lab[r] < 0 || lab[r] >= cols) {
      throw ContractError("pick-per-row: label " + std::to_string(lab[r]) +
                          " out of range [0, " + std::to_string(cols) + ")");
    }
    y[r] = x.at(r, lab[r]);
  }
  return FinishOp("pick-per-row", {rows}, std::move(y), {x},
                  [lab = std::move(lab), cols](TensorNode& o,
                                               std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t r = 0; r < lab.size(); ++r) {
                      g[r * cols + lab[r]] += o.grad[r];
                    }
                  });
}

Tensor Lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh,
            const Tensor& bias, bool reverse) {
  RequireRank2("lstm", x);
  const int steps = x.dim(0), in_dim = x.dim(1);
  const int hid = w_hh.rank() == 2 ? w_hh.dim(1) : 0;
  if (w_ih.rank() != 2 || w_hh.rank() != 2 || w_ih.dim(0) != 4 * hid ||
      w_ih.dim(1) != in_dim || w_hh.dim(0) != 4 * hid ||
      bias.size() != static_cast<size_t>(4 * hid)) {
    throw ContractError("lstm: weights w_ih " + ShapeString(w_ih.shape()) +
                        ", w_hh " + ShapeString(w_hh.shape()) + ", bias " +
                        ShapeString(bias.shape()) + " do not fit input " +
                        ShapeString(x.shape()));
  }
  const int g4 = 4 * hid;
  // Pre-activations from the input, all steps at once.
  RowMat pre = AsMat(x, steps, in_dim) * AsMat(w_ih, g4, in_dim).transpose();
  pre.rowwise() += ConstMapVec(bias.values().data(), g4).transpose();
  ConstMapMat whh = AsMat(w_hh, g4, hid);

  // gates rows hold activated (i, f, g, o); cells hold c_t.
  RowMat gates(steps, g4), cells(steps, hid);
  std::vector<double> h(static_cast<size_t>(steps) * hid);
  Eigen::VectorXd h_prev = Eigen::VectorXd::Zero(hid);
  Eigen::VectorXd c_prev = Eigen::VectorXd::Zero(hid);
  for (int s = 0; s < steps; ++s) {
    const int t = reverse ? steps - 1 - s : s;
    Eigen::VectorXd z = pre.row(t).transpose() + whh * h_prev;
    for (int j = 0; j < hid; ++j) {
      double ig = 1.0 / (1.0 + std::exp(-z[j]));
      double fg = 1.0 / (1.0 + std::exp(-z[hid + j]));
      double gg = std::tanh(z[2 * hid + j]);
      double og = 1.0 / (1.0 + std::exp(-z[3 * hid + j]));
      double c = fg * c_prev[j] + ig * gg;
      gates(t, j) = ig;
      gates(t, hid + j) = fg;
      gates(t, 2 * hid + j) = gg;
      gates(t, 3 * hid + j) = og;
      cells(t, j) = c;
      c_prev[j] = c;
      h_prev[j] = og * std::tanh(c);
      h[static_cast<size_t>(t) * hid + j] = h_prev[j];
    }
  }
  return FinishOp(
      "lstm", {steps, hid}, std::move(h), {x, w_ih, w_hh, bias},
      [steps, in_dim, hid, g4, reverse, gates = std::move(gates),
       cells = std::move(cells)](TensorNode& o,
                                 std::span<TensorNode* const> in) {
        ConstMapMat whh(in[2]->value.data(), g4, hid);
        RowMat dpre(steps, g4);
        Eigen::VectorXd dh_next = Eigen::VectorXd::Zero(hid);
        Eigen::VectorXd dc_next = Eigen::VectorXd::Zero(hid);
        Eigen::VectorXd dz(g4);
        const bool need_whh = in[2]->requires_grad;
        for (int s = steps - 1; s >= 0; --s) {
          const int t = reverse ? steps - 1 - s : s;
          const int tp = reverse ? t + 1 : t - 1;  // previous step in time
          const bool has_prev = s > 0;
          for (int j = 0; j < hid; ++j) {
            double ig = gates(t, j), fg = gates(t, hid + j);
            double gg = gates(t, 2 * hid + j), og = gates(t, 3 * hid + j);
            double c = cells(t, j);
            double tc = std::tanh(c);
            double c_prev = has_prev ? cells(tp, j) : 0.0;
            double dh = o.grad[static_cast<size_t>(t) * hid + j] + dh_next[j];
            double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * gg * ig * (1.0 - ig);
            dz[hid + j] = dc * c_prev * fg * (1.0 - fg);
            dz[2 * hid + j] = dc * ig * (1.0 - gg * gg);
            dz[3 * hid + j] = dh * tc * og * (1.0 - og);
            dc_next[j] = dc * fg;
          }
          dpre.row(t) = dz.transpose();
          dh_next.noalias() = whh.transpose() * dz;
        }
        if (need_whh) {
          // Row t of h_prev holds the hidden state fed into step t.
          RowMat h_prev = RowMat::Zero(steps, hid);
          for (int t = 0; t < steps; ++t) {
            const int tp = reverse ? t + 1 : t - 1;
            if (tp < 0 || tp >= steps) continue;
            for (int j = 0; j < hid; ++j) {
              h_prev(t, j) = o.value[static_cast<size_t>(tp) * hid + j];
            }
          }
          MapMat(in[2]->GradBuffer().data(), g4, hid).noalias() +=
              dpre.transpose() * h_prev;
        }
        if (in[0]->requires_grad) {
          MapMat(in[0]->GradBuffer().data(), steps, in_dim).noalias() +=
              dpre * ConstMapMat(in[1]->value.data(), g4, in_dim);
        }
        if (in[1]->requires_grad) {
          MapMat(in[1]->GradBuffer().data(), g4, in_dim).noalias() +=
              dpre.transpose() * ConstMapMat(in[0]->value.data(), steps, in_dim);
        }
        if (in[3]->requires_grad) {
          MapVec(in[3]->GradBuffer().data(), g4) += dpre.colwise().sum().transpose();
        }
      });
}

}  // namespace ops
}  // namespace tslab
