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

#ifndef TSLAB_DOWNSTREAM_MODELS_H_
#define TSLAB_DOWNSTREAM_MODELS_H_

#include <optional>
#include <vector>

#include "tslab/downstream/layers.h"
#include "tslab/frontend/frontend.h"

namespace tslab {

enum class Task { kTsAsr, kTse, kPVad };
std::string TaskName(Task t);
Task ParseTask(const std::string& s);

// Where the embedding multiplies the features.
//   TS-ASR: early = after linear_in, late = after the first Conformer block
//           (needs d_model == d_emb).
//   TSE:    early = after recurrent layer 1, late = after recurrent layer 2
//           (the D_emb projection moves with it).
//   p-VAD:  early = after the input linear, late = after recurrent layer 1
//           (through an extra projection to d_emb).
enum class ConditionPosition { kEarly, kLate };
ConditionPosition ParseConditionPosition(const std::string& s);

// Base for the three task networks. Each owns the learnable layer logits of
// the weighted sum over the upstream stack.
class TaskModel {
 public:
  virtual ~TaskModel() = default;
  virtual Task task() const = 0;
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const Tensor& layer_logits() const { return layer_logits_; }
  Tensor Features(const LayerFeatureStack& stack) const {
    return WeightedSum(stack, layer_logits_);
  }

 protected:
  ParameterSet params_;
  Tensor layer_logits_;
};

struct ConformerConfig {
  int n_blocks = 2;
  int d_model = 32;
  int n_heads = 2;
  int conv_kernel = 7;
  int d_ff = 64;
};

struct TsAsrConfig {
  int num_layers = 4;
  int d_up = 32;
  int d_emb = 32;
  int vocab = 10;  // outputs vocab + 1, blank last
  ConformerConfig conformer;
  ConditionPosition position = ConditionPosition::kEarly;
  // Initial blank logit. Starting blank-dominant lets CTC leave the
  // all-blank plateau without first flattening the frame features.
  double blank_bias = 4.0;
};

class TsAsrModel : public TaskModel {
 public:
  TsAsrModel(const TsAsrConfig& config, uint64_t seed);
  Task task() const override { return Task::kTsAsr; }
  // features [T x d_up] -> logits [T x (vocab+1)].
  Tensor Forward(const Tensor& features, const std::optional<Tensor>& embedding) const;
  const TsAsrConfig& config() const { return config_; }

 private:
  struct Block {
    LayerNormLayer ff1_ln, ff2_ln, att_ln, conv_ln, conv_norm, out_ln;
    LinearLayer ff1_a, ff1_b, ff2_a, ff2_b;
    LinearLayer q, k, v, o;
    LinearLayer pw1, pw2;
    Tensor dw;  // [d_model x kernel]
  };
  Tensor RunBlock(const Block& b, const Tensor& x) const;

  TsAsrConfig config_;
  LinearLayer linear_in_, linear_proj_, linear_out_;
  std::vector<Block> blocks_;
};

enum class TseEncoder { kLearned, kStft };
enum class MaskOverride { kNone, kOnes, kZeros };

struct TseConfig {
  int num_layers = 4;
  int d_up = 32;
  int d_emb = 32;
  int channels = 64;  // learned encoder only; STFT uses 2 x 129
  int kernel = 160;
  int stride = 80;
  int hidden = 64;
  TseEncoder encoder = TseEncoder::kLearned;
  ConditionPosition position = ConditionPosition::kEarly;
};

class TseModel : public TaskModel {
 public:
  TseModel(const TseConfig& config, uint64_t seed);
  Task task() const override { return Task::kTse; }
  // Returns the estimated target waveform [L], L = mixture length.
  Tensor Forward(const Waveform& mixture, const Tensor& features,
                 const std::optional<Tensor>& embedding,
                 MaskOverride mask = MaskOverride::kNone) const;
  // Encoder output [T_enc x C].
  Tensor Encode(const Tensor& mixture) const;
  // Decoder: [T x C] -> [out_len].
  Tensor Decode(const Tensor& masked, int out_len) const;
  const TseConfig& config() const { return config_; }
  int encoder_channels() const;

 private:
  TseConfig config_;
  Tensor enc_w_, dec_w_;  // [C x 1 x K]; fixed DFT bases for kStft
  BlstmLayer rnn1_, rnn2_, rnn3_;
  LinearLayer proj_, mask_;
};

struct PVadConfig {
  int num_layers = 4;
  int d_up = 32;
  int d_emb = 32;
  int hidden = 32;
  ConditionPosition position = ConditionPosition::kEarly;
};

class PVadModel : public TaskModel {
 public:
  PVadModel(const PVadConfig& config, uint64_t seed);
  Task task() const override { return Task::kPVad; }
  // features [T x d_up] -> logits [T x 3] over {ns, tss, ntss}.
  Tensor Forward(const Tensor& features, const std::optional<Tensor>& embedding) const;
  const PVadConfig& config() const { return config_; }
  LinearLayer& output_layer() { return out_; }

 private:
  PVadConfig config_;
  LinearLayer in_, late_proj_, out_;
  BlstmLayer rnn1_, rnn2_;
};

}  // namespace tslab

#endif  // TSLAB_DOWNSTREAM_MODELS_H_
