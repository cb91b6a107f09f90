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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "test_util.h"
#include "tslab/gradcore/grad_check.h"
#include "tslab/gradcore/ops.h"
#include "tslab/objectives/objectives.h"

using namespace tslab;

namespace {

int Pick(Rng* rng, int lo, int hi) { return lo + rng->UniformInt(hi - lo + 1); }

Tensor LogProbs(Rng* rng, int t, int c, double scale = 1.5) {
  std::vector<double> v(static_cast<size_t>(t) * c);
  for (int i = 0; i < t; ++i) {
    double z = 0.0;
    for (int k = 0; k < c; ++k) z += std::exp(v[i * c + k] = rng->Normal() * scale);
    for (int k = 0; k < c; ++k) v[i * c + k] -= std::log(z);
  }
  return Tensor({t, c}, v);
}

Tensor FromProbs(int t, int c, std::vector<double> p) {
  for (double& v : p) v = std::log(v);
  return Tensor({t, c}, p);
}

}  // namespace

TEST_CASE("ctc: hand-enumerated alignments") {
  // V = 2 (tokens 0, 1), blank = 2.
  {
    Tensor lp = FromProbs(1, 3, {0.6, 0.3, 0.1});
    std::vector<int> tgt = {0};
    CHECK(CtcLoss(lp, tgt).item() == doctest::Approx(-std::log(0.6)).epsilon(1e-12));
  }
  {
    Tensor lp = FromProbs(2, 3, {0.5, 0.2, 0.3, 0.4, 0.1, 0.5});
    std::vector<int> tgt = {0};
    const double p = 0.5 * 0.4 + 0.5 * 0.5 + 0.3 * 0.4;
    CHECK(CtcLoss(lp, tgt).item() == doctest::Approx(-std::log(p)).epsilon(1e-12));
  }
  {
    Tensor lp = FromProbs(3, 3, {0.5, 0.2, 0.3, 0.4, 0.1, 0.5, 0.7, 0.2, 0.1});
    std::vector<int> tgt = {0, 0};
    CHECK(CtcLoss(lp, tgt).item() ==
          doctest::Approx(-std::log(0.5 * 0.5 * 0.7)).epsilon(1e-12));
  }
  {
    Tensor lp = FromProbs(2, 3, std::vector<double>(6, 1.0 / 3.0));
    std::vector<int> tgt = {0};
    CHECK(CtcLossBruteForce(lp, tgt) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(CtcLoss(lp, tgt).item() == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  }
}

TEST_CASE("ctc: inadmissible targets are errors in both paths") {
  Rng rng(3);
  Tensor lp = LogProbs(&rng, 2, 3);
  std::vector<int> too_long = {0, 1, 0};
  std::vector<int> repeat = {1, 1};
  std::vector<int> bad_token = {2};
  CHECK_THROWS_AS(CtcLoss(lp, too_long), ContractError);
  CHECK_THROWS_AS(CtcLossBruteForce(lp, too_long), ContractError);
  CHECK_THROWS_AS(CtcLoss(lp, repeat), ContractError);
  CHECK_THROWS_AS(CtcLossBruteForce(lp, repeat), ContractError);
  CHECK_THROWS_AS(CtcLoss(lp, bad_token), ContractError);
  CHECK(CtcMinFrames(repeat) == 3);
  Tensor big = LogProbs(&rng, 9, 3);
  std::vector<int> one = {0};
  CHECK_THROWS_AS(CtcLossBruteForce(big, one), ContractError);
}

TEST_CASE("ctc: forward algorithm matches exhaustive enumeration") {
  Rng rng(20260101);
  double worst = 0.0;
  int done = 0;
  while (done < 500) {
    const int t = Pick(&rng, 1, 8);
    const int v = Pick(&rng, 1, 4);
    const int len = Pick(&rng, 0, std::min(4, t));
    std::vector<int> tgt(len);
    for (int& k : tgt) k = Pick(&rng, 0, v - 1);
    if (CtcMinFrames(tgt) > t) continue;
    Tensor lp = LogProbs(&rng, t, v + 1);
    worst = std::max(worst, std::fabs(CtcLoss(lp, tgt).item() - CtcLossBruteForce(lp, tgt)));
    ++done;
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("ctc: gradient and greedy decode") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = Pick(&rng, 3, 12);
    std::vector<int> tgt = {Pick(&rng, 0, 3), Pick(&rng, 0, 3)};
    if (CtcMinFrames(tgt) > t) continue;
    // Differentiate through log-softmax so the inputs are unconstrained.
    Tensor z = test::RandomTensor(&rng, {t, 5});
    auto r = GradCheck([&](const Tensor& x) { return CtcLoss(ops::LogSoftmax(x), tgt); }, z);
    CHECK(r.max_relative_error < 1e-4);
    // Occupancy of each frame sums to one.
    Tape tape;
    Tensor lp = LogProbs(&rng, t, 5);
    lp.set_requires_grad(true);
    Gradients g = tape.Backward(CtcLoss(lp, tgt));
    Tensor gl = g.Get(lp);
    for (int i = 0; i < t; ++i) {
      double s = 0.0;
      for (int k = 0; k < 5; ++k) s += gl.at(i, k);
      CHECK(s == doctest::Approx(-1.0).epsilon(1e-10));
    }
  }
  // Frames argmax [a, a, -, b] with a=0, b=1, blank=2.
  Tensor lp = FromProbs(4, 3, {.8, .1, .1, .7, .2, .1, .1, .1, .8, .1, .8, .1});
  CHECK(CtcGreedyDecode(lp) == std::vector<int>{0, 1});
  Tensor blanks = FromProbs(2, 3, {.1, .1, .8, .1, .1, .8});
  CHECK(CtcGreedyDecode(blanks).empty());
  Tensor sep = FromProbs(3, 3, {.8, .1, .1, .1, .1, .8, .8, .1, .1});
  CHECK(CtcGreedyDecode(sep) == std::vector<int>{0, 0});
}

TEST_CASE("si-sdr: examples and invariants") {
  std::vector<double> ref = {1, 2, 3}, est = {1, 2, 2};
  // alpha = 11/14, |alpha s|^2 = 121/14, error energy = 70/196.
  const double expect = 10.0 * std::log10((121.0 / 14.0) / (70.0 / 196.0));
  CHECK(SiSdr(est, ref) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(SiSdr(est, ref) == doctest::Approx(13.84).epsilon(1e-3));
  CHECK(SiSdr(ref, ref) == 60.0);
  std::vector<double> twice = {2, 4, 6};
  CHECK(SiSdr(twice, ref) == 60.0);
  std::vector<double> zeros = {0, 0, 0};
  CHECK_THROWS_AS(SiSdr(est, zeros), ContractError);
  std::vector<double> short_est = {1, 2};
  CHECK_THROWS_AS(SiSdr(short_est, ref), ContractError);

  Rng rng(11);
  std::vector<double> s(400), e(400), n(400);
  for (size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.Normal();
    e[i] = s[i] + 0.5 * rng.Normal();
    n[i] = rng.Normal();
  }
  const double base = SiSdr(e, s);
  for (double c : {0.1, 1.0, 10.0}) {
    std::vector<double> ce(e);
    for (double& v : ce) v *= c;
    CHECK(std::fabs(SiSdr(ce, s) - base) < 1e-9);
  }
  // Noise orthogonal to both s and e.
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double r = 0;
    for (size_t i = 0; i < a.size(); ++i) r += a[i] * b[i];
    return r;
  };
  for (const auto* basis : {&s, &e}) {
    std::vector<double> u(*basis);
    if (basis == &e) {
      const double k = dot(e, s) / dot(s, s);
      for (size_t i = 0; i < u.size(); ++i) u[i] -= k * s[i];
    }
    const double k = dot(n, u) / dot(u, u);
    for (size_t i = 0; i < n.size(); ++i) n[i] -= k * u[i];
  }
  double prev = base;
  for (double power : {0.01, 0.1, 0.5, 1.0, 4.0}) {
    std::vector<double> noisy(e);
    for (size_t i = 0; i < noisy.size(); ++i) noisy[i] += std::sqrt(power) * n[i];
    const double v = SiSdr(noisy, s);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("si-sdr: loss gradient") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> ref(50);
    for (double& v : ref) v = rng.Normal();
    Tensor est = test::RandomTensor(&rng, {50});
    auto r = GradCheck([&](const Tensor& x) { return NegSiSdrLoss(x, ref); }, est);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(NegSiSdrLoss(est, ref).item() == doctest::Approx(-SiSdr(est.values(), ref)));
  }
  // Clamped region: zero gradient.
  std::vector<double> ref = {1, -2, 3};
  Tape tape;
  Tensor est({3}, {1, -2, 3});
  est.set_requires_grad(true);
  Gradients g = tape.Backward(NegSiSdrLoss(est, ref));
  Tensor ge = g.Get(est);
  for (double v : ge.values()) CHECK(v == 0.0);
}

TEST_CASE("frame cross-entropy") {
  Tensor uniform = Tensor::Zeros({5, 3});
  std::vector<int> labels = {0, 1, 2, 1, 0};
  CHECK(FrameCrossEntropy(uniform, labels).item() == doctest::Approx(std::log(3.0)));
  std::vector<double> conf(15, -20.0);
  for (int t = 0; t < 5; ++t) conf[t * 3 + labels[t]] = 20.0;
  const double sat = FrameCrossEntropy(Tensor({5, 3}, conf), labels).item();
  CHECK(sat >= 0.0);
  CHECK(sat < 1e-15);
  std::vector<int> bad = {0, 1, 3, 1, 0};
  CHECK_THROWS_AS(FrameCrossEntropy(uniform, bad), ContractError);
  std::vector<int> short_labels = {0, 1};
  CHECK_THROWS_AS(FrameCrossEntropy(uniform, short_labels), ContractError);

  Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = test::RandomTensor(&rng, {7, 3}, 2.0);
    std::vector<int> y(7);
    for (int& v : y) v = Pick(&rng, 0, 2);
    CHECK(FrameCrossEntropy(x, y).item() > 0.0);
    auto r = GradCheck([&](const Tensor& z) { return FrameCrossEntropy(z, y); }, x);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("wer") {
  std::vector<int> abc = {0, 1, 2}, axc = {0, 9, 2}, b = {1}, ab = {0, 1}, none;
  CHECK(Wer(abc, abc) == 0.0);
  CHECK(Wer(abc, axc) == doctest::Approx(1.0 / 3.0));
  CHECK(Wer(b, ab) == doctest::Approx(0.5));
  CHECK(Wer(abc, ab) == doctest::Approx(0.5));
  std::vector<int> long_hyp = {5, 5, 5, 5};
  CHECK(Wer(long_hyp, b) == doctest::Approx(4.0));  // unclipped
  CHECK_THROWS_AS(Wer(abc, none), ContractError);

  Rng rng(14);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> h(Pick(&rng, 0, 6)), r(Pick(&rng, 1, 6));
    for (int& v : h) v = Pick(&rng, 0, 3);
    for (int& v : r) v = Pick(&rng, 0, 3);
    const int d = EditDistance(h, r);
    const int tok = Pick(&rng, 0, 3);
    h.push_back(tok);
    r.push_back(tok);
    CHECK(EditDistance(h, r) <= d);
  }
}

TEST_CASE("mean average precision") {
  // Perfect scores.
  std::vector<int> labels = {0, 1, 2, 1, 0, 2};
  std::vector<double> perfect;
  for (int y : labels) {
    for (int c = 0; c < 3; ++c) perfect.push_back(c == y ? 1.0 : 0.0);
  }
  CHECK(MeanAveragePrecision(perfect, 3, labels) == doctest::Approx(1.0));

  std::vector<double> s = {0.9, 0.8, 0.7, 0.1};
  bool pos[] = {false, false, false, true};
  CHECK(AveragePrecision(s, pos) == doctest::Approx(0.25));

  Rng rng(15);
  std::vector<double> scores(labels.size() * 3);
  for (double& v : scores) v = rng.Uniform();
  std::vector<double> swapped(scores);
  std::vector<int> swapped_labels(labels);
  for (size_t i = 0; i < labels.size(); ++i) {
    std::swap(swapped[i * 3 + 0], swapped[i * 3 + 2]);
    swapped_labels[i] = labels[i] == 0 ? 2 : labels[i] == 2 ? 0 : labels[i];
  }
  auto ap = [](const std::vector<double>& sc, const std::vector<int>& lab, int c) {
    std::vector<double> col;
    std::unique_ptr<bool[]> p(new bool[lab.size()]);
    for (size_t i = 0; i < lab.size(); ++i) {
      col.push_back(sc[i * 3 + c]);
      p[i] = lab[i] == c;
    }
    return AveragePrecision(col, std::span<const bool>(p.get(), lab.size()));
  };
  CHECK(ap(scores, labels, 0) == ap(swapped, swapped_labels, 2));
  CHECK(ap(scores, labels, 2) == ap(swapped, swapped_labels, 0));
  CHECK(ap(scores, labels, 1) == ap(swapped, swapped_labels, 1));
  CHECK(MeanAveragePrecision(scores, 3, labels) ==
        doctest::Approx(MeanAveragePrecision(swapped, 3, swapped_labels)));

  std::vector<int> missing = {0, 1, 0, 1, 0, 1};
  try {
    MeanAveragePrecision(scores, 3, missing);
    FAIL("expected an error");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("class 2") != std::string::npos);
  }
}

TEST_CASE("equal error rate") {
  std::vector<double> p = {0.9, 0.8, 0.7}, n = {0.3, 0.2, 0.1};
  CHECK(EqualErrorRate(p, n) == 0.0);
  std::vector<double> pos = {0.9, 0.8, 0.4}, neg = {0.6, 0.2, 0.1};
  CHECK(EqualErrorRate(pos, neg) == doctest::Approx(1.0 / 3.0));
  CHECK(EqualErrorRate(neg, pos) == doctest::Approx(2.0 / 3.0));
  std::vector<double> none;
  CHECK_THROWS_AS(EqualErrorRate(none, neg), ContractError);
  CHECK_THROWS_AS(EqualErrorRate(pos, none), ContractError);

  Rng rng(16);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> a(Pick(&rng, 1, 20)), b(Pick(&rng, 1, 20));
    for (double& v : a) v = rng.Normal() + 0.5;
    for (double& v : b) v = rng.Normal();
    const double e = EqualErrorRate(a, b);
    CHECK(e >= 0.0);
    CHECK(e <= 1.0);
    auto ta = a, tb = b;
    for (double& v : ta) v = std::exp(3.0 * v) + 1.0;
    for (double& v : tb) v = std::exp(3.0 * v) + 1.0;
    CHECK(EqualErrorRate(ta, tb) == doctest::Approx(e).epsilon(1e-12));
  }

  std::vector<Trial> trials = {{{1, 0}, {2, 0}, true}, {{1, 0}, {0, 1}, false}};
  CHECK(TrialSetEer(trials) == 0.0);
  CHECK(CosineSimilarity(std::vector<double>{1, 1}, std::vector<double>{2, 2}) ==
        doctest::Approx(1.0));
}

TEST_CASE("metrics report csv") {
  MetricsReport r{"tsasr", "test-open", "clean", {{"wer", 0.25}, {"loss", 1.5}}, 10};
  const std::string csv = MetricsCsv({r});
  CHECK(csv ==
        "task,split,condition,metric,value,count\n"
        "tsasr,test-open,clean,loss,1.5,10\n"
        "tsasr,test-open,clean,wer,0.25,10\n");
  CHECK(MetricsTable({r}).find("test-open") != std::string::npos);
  r.metrics["bad"] = std::nan("");
  CHECK_THROWS_AS(MetricsCsv({r}), NumericalError);
}
