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

#include "tslab/downstream/models.h"

#include <cmath>
#include <numbers>

#include "tslab/gradcore/ops.h"

namespace tslab {

std::string TaskName(Task t) {
  switch (t) {
    case Task::kTsAsr: return "tsasr";
    case Task::kTse: return "tse";
    case Task::kPVad: return "pvad";
  }
  return "?";
}

Task ParseTask(const std::string& s) {
  if (s == "tsasr") return Task::kTsAsr;
  if (s == "tse") return Task::kTse;
  if (s == "pvad") return Task::kPVad;
  throw ContractError("unknown task '" + s + "' (expected tsasr|tse|pvad)");
}

ConditionPosition ParseConditionPosition(const std::string& s) {
  if (s == "early") return ConditionPosition::kEarly;
  if (s == "late") return ConditionPosition::kLate;
  throw ContractError("unknown condition position '" + s + "' (expected early|late)");
}

namespace {

Tensor LayerLogits(int n) {
  TSLAB_REQUIRE(n >= 1, "need at least one upstream layer");
  return Tensor::Parameter({n}, std::vector<double>(n, 0.0));
}

void CheckFeatures(const Tensor& x, int d_up, const char* op) {
  if (!x.defined() || x.rank() != 2 || x.dim(1) != d_up) {
    throw ContractError(std::string(op) + ": expected features [T x " + std::to_string(d_up) +
                        "], got " + (x.defined() ? ShapeString(x.shape()) : "none"));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TS-ASR

TsAsrModel::TsAsrModel(const TsAsrConfig& config, uint64_t seed) : config_(config) {
  const ConformerConfig& c = config.conformer;
  TSLAB_REQUIRE(c.n_blocks >= 1 && c.d_model >= 1 && c.n_heads >= 1 && c.d_ff >= 1,
                "conformer: sizes must be positive");
  TSLAB_REQUIRE(c.d_model % c.n_heads == 0, "conformer: d_model must be divisible by n_heads");
  TSLAB_REQUIRE(c.conv_kernel % 2 == 1, "conformer: conv_kernel must be odd");
  if (config.position == ConditionPosition::kLate) {
    TSLAB_REQUIRE(c.d_model == config.d_emb,
                  "tsasr: late conditioning needs d_model == d_emb");
  }
  Rng rng(seed);
  layer_logits_ = LayerLogits(config.num_layers);
  params_.Add("layer_logits", layer_logits_);
  linear_in_ = LinearLayer::Make(&rng, config.d_up, config.d_emb);
  linear_in_.Register(&params_, "linear_in");
  linear_proj_ = LinearLayer::Make(&rng, config.d_emb, c.d_model);
  linear_proj_.Register(&params_, "linear_proj");
  const int d = c.d_model;
  for (int i = 0; i < c.n_blocks; ++i) {
    Block b;
    b.ff1_ln = LayerNormLayer::Make(d);
    b.ff1_a = LinearLayer::Make(&rng, d, c.d_ff);
    b.ff1_b = LinearLayer::Make(&rng, c.d_ff, d);
    b.att_ln = LayerNormLayer::Make(d);
    b.q = LinearLayer::Make(&rng, d, d);
    b.k = LinearLayer::Make(&rng, d, d);
    b.v = LinearLayer::Make(&rng, d, d);
    b.o = LinearLayer::Make(&rng, d, d);
    b.conv_ln = LayerNormLayer::Make(d);
    b.pw1 = LinearLayer::Make(&rng, d, 2 * d);
    b.dw = Tensor::Parameter({d, c.conv_kernel},
                             RandomNormal(&rng, static_cast<size_t>(d) * c.conv_kernel,
                                          1.0 / std::sqrt(static_cast<double>(c.conv_kernel))));
    b.conv_norm = LayerNormLayer::Make(d);
    b.pw2 = LinearLayer::Make(&rng, d, d);
    b.ff2_ln = LayerNormLayer::Make(d);
    b.ff2_a = LinearLayer::Make(&rng, d, c.d_ff);
    b.ff2_b = LinearLayer::Make(&rng, c.d_ff, d);
    b.out_ln = LayerNormLayer::Make(d);
    const std::string p = "block" + std::to_string(i) + ".";
    b.ff1_ln.Register(&params_, p + "ff1_ln");
    b.ff1_a.Register(&params_, p + "ff1_a");
    b.ff1_b.Register(&params_, p + "ff1_b");
    b.att_ln.Register(&params_, p + "att_ln");
    b.q.Register(&params_, p + "q");
    b.k.Register(&params_, p + "k");
    b.v.Register(&params_, p + "v");
    b.o.Register(&params_, p + "o");
    b.conv_ln.Register(&params_, p + "conv_ln");
    b.pw1.Register(&params_, p + "pw1");
    params_.Add(p + "dw", b.dw);
    b.conv_norm.Register(&params_, p + "conv_norm");
    b.pw2.Register(&params_, p + "pw2");
    b.ff2_ln.Register(&params_, p + "ff2_ln");
    b.ff2_a.Register(&params_, p + "ff2_a");
    b.ff2_b.Register(&params_, p + "ff2_b");
    b.out_ln.Register(&params_, p + "out_ln");
    blocks_.push_back(std::move(b));
  }
  linear_out_ = LinearLayer::Make(&rng, d, config.vocab + 1);
  linear_out_.b.mutable_values()[config.vocab] = config.blank_bias;
  linear_out_.Register(&params_, "linear_out");
}

Tensor TsAsrModel::RunBlock(const Block& b, const Tensor& x) const {
  const int d = config_.conformer.d_model, heads = config_.conformer.n_heads;
  const int dk = d / heads;
  auto ff = [](const LayerNormLayer& ln, const LinearLayer& a, const LinearLayer& o,
               const Tensor& in) { return o(ops::Swish(a(ln(in)))); };

  Tensor h = ops::Add(x, ops::Scale(ff(b.ff1_ln, b.ff1_a, b.ff1_b, x), 0.5));

  Tensor a = b.att_ln(h);
  Tensor q = b.q(a), k = b.k(a), v = b.v(a);
  std::vector<Tensor> outs;
  for (int i = 0; i < heads; ++i) {
    Tensor qh = ops::Slice(q, 1, i * dk, (i + 1) * dk);
    Tensor kh = ops::Slice(k, 1, i * dk, (i + 1) * dk);
    Tensor vh = ops::Slice(v, 1, i * dk, (i + 1) * dk);
    Tensor s = ops::Scale(ops::MatMul(qh, ops::Transpose(kh)), 1.0 / std::sqrt(dk));
    outs.push_back(ops::MatMul(ops::Softmax(s), vh));
  }
  h = ops::Add(h, b.o(heads == 1 ? outs[0] : ops::Concat(outs, 1)));

  Tensor c = b.pw1(b.conv_ln(h));
  c = ops::Mul(ops::Slice(c, 1, 0, d), ops::Sigmoid(ops::Slice(c, 1, d, 2 * d)));
  c = b.pw2(ops::Swish(b.conv_norm(ops::DepthwiseConv1d(c, b.dw))));
  h = ops::Add(h, c);

  h = ops::Add(h, ops::Scale(ff(b.ff2_ln, b.ff2_a, b.ff2_b, h), 0.5));
  return b.out_ln(h);
}

Tensor TsAsrModel::Forward(const Tensor& features,
                           const std::optional<Tensor>& embedding) const {
  CheckFeatures(features, config_.d_up, "tsasr_forward");
  const int t = features.dim(0);
  Tensor h = linear_in_(features);
  if (config_.position == ConditionPosition::kEarly) h = ApplyCondition(h, embedding);
  h = ops::Add(linear_proj_(h), SinusoidalPositions(t, config_.conformer.d_model));
  for (size_t i = 0; i < blocks_.size(); ++i) {
    h = RunBlock(blocks_[i], h);
    if (i == 0 && config_.position == ConditionPosition::kLate) h = ApplyCondition(h, embedding);
  }
  return linear_out_(h);
}

// ---------------------------------------------------------------------------
// TSE

namespace {

// Windowed real DFT analysis basis [2F x 1 x N] (real parts, then imaginary
// parts) and the matching synthesis basis.
void DftBases(std::vector<double>* analysis, std::vector<double>* synthesis) {
  const auto& win = SqrtHannWindow();
  const int k = kWindowSamples;
  analysis->assign(static_cast<size_t>(2 * kNumBins) * k, 0.0);
  synthesis->assign(analysis->size(), 0.0);
  for (int f = 0; f < kNumBins; ++f) {
    const double cf = (f == 0 || f == kNumBins - 1) ? 1.0 : 2.0;
    for (int n = 0; n < k; ++n) {
      const double ph = 2.0 * std::numbers::pi * f * n / kFftSize;
      (*analysis)[static_cast<size_t>(f) * k + n] = win[n] * std::cos(ph);
      (*analysis)[static_cast<size_t>(kNumBins + f) * k + n] = -win[n] * std::sin(ph);
      (*synthesis)[static_cast<size_t>(f) * k + n] = cf / kFftSize * win[n] * std::cos(ph);
      (*synthesis)[static_cast<size_t>(kNumBins + f) * k + n] =
          -cf / kFftSize * win[n] * std::sin(ph);
    }
  }
}

}  // namespace

TseModel::TseModel(const TseConfig& config, uint64_t seed) : config_(config) {
  if (config_.encoder == TseEncoder::kStft) {
    config_.kernel = kWindowSamples;
    config_.stride = kHopSamples;
  }
  TSLAB_REQUIRE(config_.channels >= 1 && config_.hidden >= 1 && config_.kernel >= 1 &&
                    config_.stride >= 1,
                "tse: sizes must be positive");
  Rng rng(seed);
  layer_logits_ = LayerLogits(config_.num_layers);
  params_.Add("layer_logits", layer_logits_);
  const int c = encoder_channels(), kw = config_.kernel;
  if (config_.encoder == TseEncoder::kLearned) {
    enc_w_ = Tensor::Parameter({c, 1, kw}, RandomNormal(&rng, static_cast<size_t>(c) * kw,
                                                        1.0 / std::sqrt(static_cast<double>(kw))));
    dec_w_ = Tensor::Parameter(
        {c, 1, kw}, RandomNormal(&rng, static_cast<size_t>(c) * kw,
                                 1.0 / std::sqrt(2.0 * c)));
    params_.Add("encoder", enc_w_);
    params_.Add("decoder", dec_w_);
  } else {
    std::vector<double> a, s;
    DftBases(&a, &s);
    enc_w_ = Tensor({c, 1, kw}, std::move(a));
    dec_w_ = Tensor({c, 1, kw}, std::move(s));
  }
  const int h2 = 2 * config_.hidden;
  const bool early = config_.position == ConditionPosition::kEarly;
  rnn1_ = BlstmLayer::Make(&rng, config_.d_up + c, config_.hidden);
  proj_ = LinearLayer::Make(&rng, h2, config_.d_emb);
  rnn2_ = BlstmLayer::Make(&rng, early ? config_.d_emb : h2, config_.hidden);
  rnn3_ = BlstmLayer::Make(&rng, early ? h2 : config_.d_emb, config_.hidden);
  mask_ = LinearLayer::Make(&rng, h2,
                            config_.encoder == TseEncoder::kStft ? kNumBins : c);
  rnn1_.Register(&params_, "rnn1");
  proj_.Register(&params_, "proj");
  rnn2_.Register(&params_, "rnn2");
  rnn3_.Register(&params_, "rnn3");
  mask_.Register(&params_, "mask");
}

int TseModel::encoder_channels() const {
  return config_.encoder == TseEncoder::kStft ? 2 * kNumBins : config_.channels;
}

Tensor TseModel::Encode(const Tensor& mixture) const {
  return ops::Conv1d(mixture, enc_w_, config_.stride, 0, 0);
}

Tensor TseModel::Decode(const Tensor& masked, int out_len) const {
  Tensor y = ops::ConvTranspose1d(masked, dec_w_, config_.stride, 0, out_len);
  if (config_.encoder == TseEncoder::kStft) {
    const auto& win = SqrtHannWindow();
    std::vector<double> norm(out_len, 0.0);
    for (int t = 0; t < masked.dim(0); ++t) {
      for (int n = 0; n < kWindowSamples && t * kHopSamples + n < out_len; ++n) {
        norm[t * kHopSamples + n] += win[n] * win[n];
      }
    }
    for (double& v : norm) v = v > 1e-8 ? 1.0 / v : 0.0;
    y = ops::Mul(y, Tensor({out_len, 1}, std::move(norm)));
  }
  return ops::Reshape(y, {out_len});
}

Tensor TseModel::Forward(const Waveform& mixture, const Tensor& features,
                         const std::optional<Tensor>& embedding, MaskOverride mask) const {
  CheckFeatures(features, config_.d_up, "tse_forward");
  const int len = static_cast<int>(mixture.size());
  TSLAB_REQUIRE(len >= config_.kernel, "tse_forward: mixture shorter than the encoder kernel");
  Tensor enc = Encode(Tensor({len, 1}, mixture.samples));
  const int te = enc.dim(0), tf = features.dim(0);
  if (std::abs(te - tf) > 1) {
    throw ContractError("tse_forward: encoder gives " + std::to_string(te) +
                        " frames but features have " + std::to_string(tf));
  }
  const int n = std::min(te, tf);
  if (te != n) enc = ops::Slice(enc, 0, 0, n);
  Tensor feats = tf != n ? ops::Slice(features, 0, 0, n) : features;

  Tensor h = rnn1_(ops::Concat({feats, enc}, 1));
  if (config_.position == ConditionPosition::kEarly) {
    h = rnn3_(rnn2_(ApplyCondition(proj_(h), embedding)));
  } else {
    h = rnn3_(ApplyCondition(proj_(rnn2_(h)), embedding));
  }
  Tensor m;
  switch (mask) {
    case MaskOverride::kNone:
      m = ops::Sigmoid(mask_(h));
      if (config_.encoder == TseEncoder::kStft) m = ops::Concat({m, m}, 1);
      break;
    case MaskOverride::kOnes: m = Tensor::Filled(enc.shape(), 1.0); break;
    case MaskOverride::kZeros: m = Tensor::Zeros(enc.shape()); break;
  }
  return Decode(ops::Mul(m, enc), len);
}

// ---------------------------------------------------------------------------
// p-VAD

PVadModel::PVadModel(const PVadConfig& config, uint64_t seed) : config_(config) {
  TSLAB_REQUIRE(config.hidden >= 1 && config.d_emb >= 1, "pvad: sizes must be positive");
  Rng rng(seed);
  layer_logits_ = LayerLogits(config.num_layers);
  params_.Add("layer_logits", layer_logits_);
  const int h2 = 2 * config.hidden;
  const bool early = config.position == ConditionPosition::kEarly;
  in_ = LinearLayer::Make(&rng, config.d_up, config.d_emb);
  in_.Register(&params_, "in");
  rnn1_ = BlstmLayer::Make(&rng, config.d_emb, config.hidden);
  rnn1_.Register(&params_, "rnn1");
  if (!early) {
    late_proj_ = LinearLayer::Make(&rng, h2, config.d_emb);
    late_proj_.Register(&params_, "late_proj");
  }
  rnn2_ = BlstmLayer::Make(&rng, early ? h2 : config.d_emb, config.hidden);
  rnn2_.Register(&params_, "rnn2");
  out_ = LinearLayer::Make(&rng, h2, kNumVadClasses);
  out_.Register(&params_, "out");
}

Tensor PVadModel::Forward(const Tensor& features,
                          const std::optional<Tensor>& embedding) const {
  CheckFeatures(features, config_.d_up, "pvad_forward");
  Tensor h = in_(features);
  if (config_.position == ConditionPosition::kEarly) {
    h = rnn1_(ApplyCondition(h, embedding));
  } else {
    h = ApplyCondition(late_proj_(rnn1_(h)), embedding);
  }
  return out_(rnn2_(h));
}

}  // namespace tslab
