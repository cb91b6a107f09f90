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

#include <cmath>

#include "doctest.h"
#include "test_util.h"
#include "tslab/common.h"
#include "tslab/gradcore/grad_check.h"
#include "tslab/gradcore/ops.h"
#include "tslab/gradcore/optim.h"

using namespace tslab;

TEST_CASE("hadamard with zeros annihilates") {
  Tensor y = ops::Mul(Tensor({3}, {1, 2, 3}), Tensor({3}, {0, 0, 0}));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor y = ops::Softmax(Tensor({3}, {0, 0, 0}));
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("conv1d same padding keeps length") {
  Rng rng(1);
  Tensor x = test::RandomTensor(&rng, {8, 1});
  Tensor w = test::RandomTensor(&rng, {1, 1, 3});
  CHECK(ops::Conv1d(x, w, 1, ops::PadMode::kSame).dim(0) == 8);
  CHECK(ops::Conv1d(x, w, 1, ops::PadMode::kValid).dim(0) == 6);
}

TEST_CASE("shape mismatch names the op and shapes") {
  try {
    ops::MatMul(Tensor::Zeros({2, 3}), Tensor::Zeros({2, 3}));
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("non-finite output is an error") {
  CHECK_THROWS_AS(ops::Scale(Tensor({1}, {1e300}), 1e300), NumericalError);
}

TEST_CASE("backward: hadamard derivative and relu mask") {
  Tensor a = Tensor::Parameter({3}, {1, 2, 3});
  Tensor b({3}, {4, 5, 6});
  Tape tape;
  Tensor loss = ops::ReduceSum(ops::Mul(a, b));
  Gradients g = tape.Backward(loss);
  test::CheckClose(g.Get(a).values(), b.values(), 0.0);

  Tensor x = Tensor::Parameter({2}, {-1, 2});
  Tape tape2;
  Gradients gx = tape2.Backward(ops::ReduceSum(ops::Relu(x)));
  CHECK(gx.Get(x)[0] == 0.0);
  CHECK(gx.Get(x)[1] == 1.0);
}

TEST_CASE("backward contract errors and unreached leaves") {
  Tensor a = Tensor::Parameter({2}, {1, 2});
  Tensor unused = Tensor::Parameter({2, 2}, {1, 2, 3, 4});
  Tape tape;
  Tensor s = ops::ReduceSum(ops::Scale(a, 2.0));
  CHECK_THROWS_AS(tape.Backward(ops::Scale(a, 1.0)), ContractError);
  Tape tape2;
  Tensor s2 = ops::ReduceSum(ops::Scale(a, 2.0));
  Gradients g = tape2.Backward(s2);
  Tensor gu = g.Get(unused);
  CHECK(gu.shape() == Shape{2, 2});
  for (double v : gu.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(tape2.Backward(s2), ContractError);
}

TEST_CASE("transposed conv is the adjoint of conv") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    int len = 20 + rng.UniformInt(30), cin = 1 + rng.UniformInt(3);
    int cout = 1 + rng.UniformInt(4), k = 1 + rng.UniformInt(7);
    int stride = 1 + rng.UniformInt(4), pl = rng.UniformInt(3), pr = rng.UniformInt(3);
    Tensor x = test::RandomTensor(&rng, {len, cin});
    Tensor w = test::RandomTensor(&rng, {cout, cin, k});
    Tensor y = ops::Conv1d(x, w, stride, pl, pr);
    Tensor r = test::RandomTensor(&rng, y.shape());
    Tensor xt = ops::ConvTranspose1d(r, w, stride, pl, len);
    double lhs = 0, rhs = 0;
    for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * r[i];
    for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * xt[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows sum to one; layer-norm rows standardized") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor x = test::RandomTensor(&rng, {5, 7}, 5.0);
    Tensor p = ops::Softmax(x);
    for (int r = 0; r < 5; ++r) {
      double s = 0;
      for (int c = 0; c < 7; ++c) {
        CHECK(p.at(r, c) >= 0.0);
        s += p.at(r, c);
      }
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
    Tensor n = ops::LayerNorm(x, Tensor(), Tensor());
    for (int r = 0; r < 5; ++r) {
      double m = 0, v = 0;
      for (int c = 0; c < 7; ++c) m += n.at(r, c);
      m /= 7;
      for (int c = 0; c < 7; ++c) v += (n.at(r, c) - m) * (n.at(r, c) - m);
      v /= 7;
      CHECK(std::fabs(m) < 1e-9);
      CHECK(std::fabs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("grad_check oracle examples") {
  auto sq = [](const Tensor& x) { return ops::ReduceSum(ops::Mul(x, x)); };
  CHECK(GradCheck(sq, Tensor({2}, {1, 2})).max_relative_error < 1e-6);
  auto sum = [](const Tensor& x) { return ops::ReduceSum(x); };
  CHECK(GradCheck(sum, Tensor({3}, {0.3, -2, 5})).max_relative_error < 1e-8);
}

TEST_CASE("joint grad check floors identically-zero leaves by the whole gradient") {
  // softmax(x + c) does not depend on the shift c: its gradient is zero and
  // the numeric estimate is pure round-off.
  Rng rng(12);
  Tensor x = test::RandomTensor(&rng, {1, 4}, 1.0, true);
  Tensor c = Tensor::Parameter({1, 1}, {0.3});
  Tensor r = test::RandomTensor(&rng, {1, 4});
  auto f = [&] {
    Tensor shift = ops::MatMul(c, Tensor::Filled({1, 4}, 1.0));
    return ops::ReduceSum(ops::Mul(ops::Softmax(ops::Add(x, shift)), r));
  };
  const GradCheckResult joint = GradCheckLeaves(f, {x, c});
  CHECK(joint.max_relative_error < 1e-4);
  CHECK(GradCheckLeaves(f, {x}).max_relative_error ==
        doctest::Approx(GradCheckLeaf(f, x).max_relative_error));
}

TEST_CASE("every op passes finite differences") {
  // Seeded sweep; the acceptance binary runs 100 cases per op.
  for (const auto& c : test::OpGradCases()) {
    Rng rng(DeriveSeed(11, std::hash<std::string>{}(c.name)));
    double worst = 0;
    for (int i = 0; i < 5; ++i) worst = std::max(worst, c.run(&rng));
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("adam step examples") {
  Tensor p = Tensor({1}, {0.5});
  Adam adam(AdamOptions{0.9, 0.999, 1e-8, false});
  std::vector<Tensor> ps = {p};
  adam.Step(ps, {Tensor({1}, {1.0})}, 0.1);
  CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(adam.state().step == 1);

  // Zero gradient is the identity for any state.
  double before = p[0];
  adam.Step(ps, {Tensor({1}, {0.0})}, 0.1);
  CHECK(p[0] == before);
  CHECK(adam.state().step == 2);

  // Determinism from identical state.
  Adam a1(adam), a2(adam);
  Tensor q1 = p.Clone(), q2 = p.Clone();
  std::vector<Tensor> v1 = {q1}, v2 = {q2};
  a1.Step(v1, {Tensor({1}, {0.3})}, 0.01);
  a2.Step(v2, {Tensor({1}, {0.3})}, 0.01);
  CHECK(q1[0] == q2[0]);

  CHECK_THROWS_AS(adam.Step(ps, {Tensor({2}, {1.0, 1.0})}, 0.1), ContractError);
}

TEST_CASE("warmup/linear schedule") {
  WarmupLinearSchedule s(0.001, 15000, 200000);
  CHECK(s.Rate(0) == 0.0);
  CHECK(s.Rate(7500) == doctest::Approx(0.0005));
  CHECK(s.Rate(15000) == doctest::Approx(0.001));
  CHECK(s.Rate(107500) == doctest::Approx(0.0005).epsilon(1e-12));
  CHECK(s.Rate(200000) == 0.0);
  CHECK(s.Rate(200001) == 0.0);
  // Continuous and peaked at warmup.
  double prev = s.Rate(0), peak = 0;
  for (long t = 1; t <= 200000; t += 97) {
    double r = s.Rate(t);
    CHECK(std::fabs(r - prev) <= 0.001 / 15000 * 97 + 1e-15);
    peak = std::max(peak, r);
    prev = r;
  }
  CHECK(peak <= s.Rate(15000));
}
