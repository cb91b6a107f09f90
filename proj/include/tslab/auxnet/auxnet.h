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

#ifndef TSLAB_AUXNET_AUXNET_H_
#define TSLAB_AUXNET_AUXNET_H_

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tslab/frontend/frontend.h"
#include "tslab/gradcore/optim.h"

namespace tslab {

enum class AuxKind { kFbank, kSpeakerCode, kMhfa, kExternal };
std::string AuxKindName(AuxKind k);
AuxKind ParseAuxKind(const std::string& s);

// Everything an auxiliary network might read about one enrollment. Each
// encoder uses only its own field.
struct EnrollmentInput {
  Tensor fbank;                               // normalized, [T x M]
  const LayerFeatureStack* stack = nullptr;   // toy upstream output
  int speaker_id = -1;
  std::string utterance_id;
};

// Maps an enrollment to a SpeakerEmbedding, a rank-1 tensor of d_emb values.
class AuxNet {
 public:
  virtual ~AuxNet() = default;
  virtual AuxKind kind() const = 0;
  virtual int embedding_dim() const = 0;
  virtual Tensor Encode(const EnrollmentInput& in) const = 0;
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

 protected:
  ParameterSet params_;
};

// Per-frame linear -> ReLU (depth 1), or linear -> ReLU -> linear -> ReLU
// (depth 2), then the mean over frames.
class FbankAux : public AuxNet {
 public:
  FbankAux(int num_mels, int d_emb, int depth, uint64_t seed);
  AuxKind kind() const override { return AuxKind::kFbank; }
  int embedding_dim() const override { return d_emb_; }
  Tensor Encode(const EnrollmentInput& in) const override;
  Tensor EncodeFrames(const Tensor& fbank) const;

 private:
  int num_mels_, d_emb_, depth_;
};

// Row lookup -> linear -> ReLU. Only defined for speakers in the training
// roster.
class SpeakerCode : public AuxNet {
 public:
  SpeakerCode(std::vector<int> roster, int d_emb, uint64_t seed);
  AuxKind kind() const override { return AuxKind::kSpeakerCode; }
  int embedding_dim() const override { return d_emb_; }
  Tensor Encode(const EnrollmentInput& in) const override;
  Tensor EncodeId(int speaker_id) const;
  const std::vector<int>& roster() const { return roster_; }

 private:
  std::vector<int> roster_;
  std::map<int, int> row_;
  int d_emb_;
};

struct MhfaConfig {
  int num_layers = 4;
  int d_up = 32;
  int num_heads = 4;
  int d_c = 16;
  int d_emb = 32;
};

// Multi-head factorized attention over the layer stack. Keys and values are
// separately weighted layer sums compressed to d_c; each head attends over
// frames with its own query vector; head outputs are concatenated and
// projected to d_emb. The layer logits are owned here, independent of the
// task network's weighted sum.
class Mhfa : public AuxNet {
 public:
  Mhfa(const MhfaConfig& config, uint64_t seed);
  AuxKind kind() const override { return AuxKind::kMhfa; }
  int embedding_dim() const override { return config_.d_emb; }
  Tensor Encode(const EnrollmentInput& in) const override;
  Tensor EncodeStack(const LayerFeatureStack& stack) const;
  // Per-head attention weights over frames, [num_heads x T].
  Tensor Attention(const LayerFeatureStack& stack) const;

 private:
  MhfaConfig config_;
};

// Embeddings imported from a file: one CSV row per utterance,
// "utterance_id,v1,...,vD".
class ExternalEmbeddings : public AuxNet {
 public:
  ExternalEmbeddings(std::map<std::string, std::vector<double>> table, int d_emb);
  static ExternalEmbeddings Load(const std::filesystem::path& csv, int d_emb);
  AuxKind kind() const override { return AuxKind::kExternal; }
  int embedding_dim() const override { return d_emb_; }
  Tensor Encode(const EnrollmentInput& in) const override;

 private:
  std::map<std::string, std::vector<double>> table_;
  int d_emb_;
};

}  // namespace tslab

#endif  // TSLAB_AUXNET_AUXNET_H_
