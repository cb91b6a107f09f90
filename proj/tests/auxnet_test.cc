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
#include "tslab/auxnet/auxnet.h"
#include "tslab/gradcore/grad_check.h"
#include "tslab/gradcore/ops.h"

using namespace tslab;

namespace {

LayerFeatureStack RandomStack(Rng* rng, int layers, int t, int d) {
  std::vector<Tensor> v;
  for (int l = 0; l < layers; ++l) v.push_back(test::RandomTensor(rng, {t, d}));
  return MakeStack(v);
}

void Zero(Tensor t) {
  for (double& v : t.mutable_values()) v = 0.0;
}

}  // namespace

TEST_CASE("fbank aux: pooling, permutation, zeros") {
  Rng rng(1);
  for (int depth : {1, 2}) {
    FbankAux aux(6, 5, depth, 42);
    // Constant-over-time input: pooled output equals the per-frame output.
    Tensor row = test::RandomTensor(&rng, {1, 6});
    std::vector<double> rep;
    for (int t = 0; t < 7; ++t) rep.insert(rep.end(), row.values().begin(), row.values().end());
    Tensor e1 = aux.EncodeFrames(row), e7 = aux.EncodeFrames(Tensor({7, 6}, rep));
    for (int i = 0; i < 5; ++i) CHECK(std::fabs(e1[i] - e7[i]) < 1e-12);

    Tensor x = test::RandomTensor(&rng, {9, 6});
    std::vector<int> perm = {3, 0, 8, 1, 7, 2, 6, 4, 5};
    std::vector<double> pv;
    for (int p : perm) {
      for (int m = 0; m < 6; ++m) pv.push_back(x.at(p, m));
    }
    Tensor a = aux.EncodeFrames(x), b = aux.EncodeFrames(Tensor({9, 6}, pv));
    for (int i = 0; i < 5; ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-12);
    CHECK(a.shape() == Shape{5});

    for (size_t i = 0; i < aux.params().size(); ++i) {
      if (aux.params().name(i)[0] == 'b') Zero(aux.params().tensor(i));
    }
    Tensor z = aux.EncodeFrames(Tensor::Zeros({4, 6}));
    for (double v : z.values()) CHECK(v == 0.0);
  }
  FbankAux aux(6, 5, 1, 1);
  CHECK_THROWS_AS(aux.Encode(EnrollmentInput{}), ContractError);
  CHECK_THROWS_AS(FbankAux(6, 5, 3, 1), ContractError);
}

TEST_CASE("speaker code: deterministic, nonnegative, closed roster") {
  SpeakerCode sc({0, 1, 2, 5}, 8, 3);
  Tensor a = sc.EncodeId(5), b = sc.EncodeId(5);
  CHECK(a.shape() == Shape{8});
  for (int i = 0; i < 8; ++i) {
    CHECK(a[i] == b[i]);
    CHECK(a[i] >= 0.0);
  }
  try {
    sc.EncodeId(7);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("speaker-closed") != std::string::npos);
  }
  // Trainable end to end: the table row receives a gradient.
  Tape tape;
  Gradients g = tape.Backward(ops::ReduceSum(sc.EncodeId(1)));
  Tensor gt = g.Get(*sc.params().Find("table"));
  double row1 = 0, row0 = 0;
  for (int i = 0; i < 8; ++i) {
    row1 += std::fabs(gt.at(1, i));
    row0 += std::fabs(gt.at(0, i));
  }
  CHECK(row1 > 0.0);
  CHECK(row0 == 0.0);
}

TEST_CASE("mhfa: zero queries average, single frame, content weighting") {
  Rng rng(2);
  MhfaConfig cfg{3, 6, 2, 4, 5};
  Mhfa m(cfg, 9);
  LayerFeatureStack s = RandomStack(&rng, 3, 7, 6);

  Tensor q = *m.params().Find("queries");
  Tensor saved = q.Clone();
  Zero(q);
  Tensor att = m.Attention(s);
  for (double v : att.values()) CHECK(std::fabs(v - 1.0 / 7) < 1e-15);
  // Oracle: heads equal the temporal mean of V, then the projection.
  Tensor v = ops::MatMul(WeightedSum(s, *m.params().Find("value_logits")), *m.params().Find("wv"));
  Tensor mean_v = ops::ReduceMean(v, 0);
  std::vector<double> cat;
  for (int h = 0; h < 2; ++h) cat.insert(cat.end(), mean_v.values().begin(), mean_v.values().end());
  Tensor expect = ops::Add(ops::MatMul(Tensor({1, 8}, cat), *m.params().Find("wo")),
                           *m.params().Find("bo"));
  Tensor got = m.EncodeStack(s);
  for (int i = 0; i < 5; ++i) CHECK(std::fabs(got[i] - expect[i]) < 1e-12);
  std::copy(saved.values().begin(), saved.values().end(), q.mutable_values().begin());

  LayerFeatureStack one = RandomStack(&rng, 3, 1, 6);
  Tensor a1 = m.Attention(one);
  for (double w : a1.values()) CHECK(w == 1.0);

  // Frames are pooled by content-dependent weights, not by position: a frame
  // permutation leaves the embedding unchanged, while the weights themselves
  // differ from the uniform average.
  std::vector<Tensor> rev;
  for (const auto& layer : s.layers) {
    std::vector<Tensor> rows;
    for (int t = 6; t >= 0; --t) rows.push_back(ops::Slice(layer, 0, t, t + 1));
    rev.push_back(ops::Concat(rows, 0));
  }
  Tensor e0 = m.EncodeStack(s), e1 = m.EncodeStack(MakeStack(rev));
  double diff = 0, from_mean = 0;
  for (int i = 0; i < 5; ++i) {
    diff += std::fabs(e0[i] - e1[i]);
    from_mean += std::fabs(e0[i] - expect[i]);
  }
  CHECK(diff < 1e-12);
  CHECK(from_mean > 1e-6);

  CHECK_THROWS_AS(m.EncodeStack(RandomStack(&rng, 2, 4, 6)), ContractError);
}

TEST_CASE("mhfa gradients match finite differences") {
  Rng rng(3);
  Mhfa m(MhfaConfig{3, 5, 2, 3, 4}, 11);
  LayerFeatureStack s = RandomStack(&rng, 3, 6, 5);
  Tensor r = test::RandomTensor(&rng, {4});
  auto f = [&] { return ops::ReduceSum(ops::Mul(m.EncodeStack(s), r)); };
  for (size_t i = 0; i < m.params().size(); ++i) {
    INFO(m.params().name(i));
    CHECK(GradCheckLeaf(f, m.params().tensor(i)).max_relative_error < 1e-4);
  }
}

TEST_CASE("fbank pooling ignores order; mhfa weights follow content") {
  Rng rng(4);
  FbankAux fa(5, 4, 2, 1);
  Mhfa m(MhfaConfig{1, 5, 2, 3, 4}, 2);
  Tensor x = test::RandomTensor(&rng, {6, 5});
  Tensor xp = ops::Concat({ops::Slice(x, 0, 3, 6), ops::Slice(x, 0, 0, 3)}, 0);
  Tensor a = fa.EncodeFrames(x), b = fa.EncodeFrames(xp);
  for (int i = 0; i < 4; ++i) CHECK(std::fabs(a[i] - b[i]) < 1e-12);
  // Content change in one frame moves MHFA attention weights.
  Tensor att0 = m.Attention(MakeStack({x}));
  Tensor x2 = x.Clone();
  x2.mutable_values()[0] += 3.0;
  Tensor att1 = m.Attention(MakeStack({x2}));
  CHECK(std::fabs(att0[1] - att1[1]) > 1e-6);
}

TEST_CASE("external embeddings from csv") {
  auto path = std::filesystem::temp_directory_path() / "tslab_ext.csv";
  {
    std::ofstream out(path);
    out << "# id,values\nspk000_utt001,0.5,1,2\nspk001_utt000,-1,0,3\n";
  }
  ExternalEmbeddings ext = ExternalEmbeddings::Load(path, 3);
  EnrollmentInput in;
  in.utterance_id = "spk001_utt000";
  Tensor e = ext.Encode(in);
  CHECK(e[0] == -1.0);
  CHECK(e[2] == 3.0);
  in.utterance_id = "nope";
  CHECK_THROWS_AS(ext.Encode(in), ContractError);
  CHECK_THROWS_AS(ExternalEmbeddings::Load(path, 4), ContractError);
  std::filesystem::remove(path);
  CHECK(ParseAuxKind("mhfa") == AuxKind::kMhfa);
  CHECK_THROWS_AS(ParseAuxKind("xvector"), ContractError);
}
