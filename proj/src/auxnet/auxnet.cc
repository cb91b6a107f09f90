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

#include "tslab/auxnet/auxnet.h"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tslab/gradcore/ops.h"

namespace tslab {

namespace {

Tensor Weight(Rng* rng, int in, int out, double gain = 1.0) {
  return Tensor::Parameter({in, out},
                           RandomNormal(rng, static_cast<size_t>(in) * out,
                                        gain / std::sqrt(static_cast<double>(in))));
}

Tensor Bias(int n, double value) {
  return Tensor::Parameter({n}, std::vector<double>(n, value));
}

Tensor Linear(const Tensor& x, const ParameterSet& p, const std::string& w,
              const std::string& b) {
  return ops::Add(ops::MatMul(x, *p.Find(w)), *p.Find(b));
}

// Embeddings start close to all-ones, where Hadamard conditioning is the
// identity, so an untrained encoder does not erase the task features.
constexpr double kOutputBias = 1.0;
constexpr double kOutputGain = 0.1;

}  // namespace

std::string AuxKindName(AuxKind k) {
  switch (k) {
    case AuxKind::kFbank: return "fbank";
    case AuxKind::kSpeakerCode: return "speaker_code";
    case AuxKind::kMhfa: return "mhfa";
    case AuxKind::kExternal: return "external";
  }
  return "?";
}

AuxKind ParseAuxKind(const std::string& s) {
  if (s == "fbank") return AuxKind::kFbank;
  if (s == "speaker_code") return AuxKind::kSpeakerCode;
  if (s == "mhfa") return AuxKind::kMhfa;
  if (s == "external") return AuxKind::kExternal;
  throw ContractError("unknown auxiliary network '" + s +
                      "' (expected fbank|speaker_code|mhfa|external)");
}

// ---------------------------------------------------------------------------

FbankAux::FbankAux(int num_mels, int d_emb, int depth, uint64_t seed)
    : num_mels_(num_mels), d_emb_(d_emb), depth_(depth) {
  TSLAB_REQUIRE(num_mels >= 1 && d_emb >= 1, "fbank aux: sizes must be positive");
  TSLAB_REQUIRE(depth == 1 || depth == 2, "fbank aux: depth must be 1 or 2");
  Rng rng(seed);
  if (depth == 1) {
    params_.Add("w1", Weight(&rng, num_mels, d_emb, kOutputGain));
    params_.Add("b1", Bias(d_emb, kOutputBias));
  } else {
    params_.Add("w1", Weight(&rng, num_mels, d_emb));
    params_.Add("b1", Bias(d_emb, 0.0));
    params_.Add("w2", Weight(&rng, d_emb, d_emb, kOutputGain));
    params_.Add("b2", Bias(d_emb, kOutputBias));
  }
}

Tensor FbankAux::EncodeFrames(const Tensor& fbank) const {
  if (fbank.rank() != 2 || fbank.dim(1) != num_mels_) {
    throw ContractError("encode_fbank_aux: expected [T x " + std::to_string(num_mels_) +
                        "], got " + (fbank.defined() ? ShapeString(fbank.shape()) : "none"));
  }
  Tensor h = ops::Relu(Linear(fbank, params_, "w1", "b1"));
  if (depth_ == 2) h = ops::Relu(Linear(h, params_, "w2", "b2"));
  return ops::ReduceMean(h, 0);
}

Tensor FbankAux::Encode(const EnrollmentInput& in) const {
  TSLAB_REQUIRE(in.fbank.defined(), "encode_fbank_aux: empty sequence");
  return EncodeFrames(in.fbank);
}

// ---------------------------------------------------------------------------

SpeakerCode::SpeakerCode(std::vector<int> roster, int d_emb, uint64_t seed)
    : roster_(std::move(roster)), d_emb_(d_emb) {
  TSLAB_REQUIRE(!roster_.empty() && d_emb >= 1, "speaker code: empty roster or bad dim");
  for (size_t i = 0; i < roster_.size(); ++i) {
    TSLAB_REQUIRE(row_.emplace(roster_[i], static_cast<int>(i)).second,
                  "speaker code: duplicate speaker in roster");
  }
  Rng rng(seed);
  const int n = static_cast<int>(roster_.size());
  params_.Add("table", Tensor::Parameter({n, d_emb}, RandomNormal(&rng, n * d_emb, 1.0)));
  params_.Add("w", Weight(&rng, d_emb, d_emb, kOutputGain));
  params_.Add("b", Bias(d_emb, kOutputBias));
}

Tensor SpeakerCode::EncodeId(int speaker_id) const {
  auto it = row_.find(speaker_id);
  if (it == row_.end()) {
    throw ContractError("encode_speaker_code: speaker " + std::to_string(speaker_id) +
                        " is not in the training roster; the speaker code is only "
                        "applicable in a speaker-closed condition");
  }
  const int id = it->second;
  Tensor row = ops::EmbeddingLookup(*params_.Find("table"), std::span<const int>(&id, 1));
  return ops::Reshape(ops::Relu(Linear(row, params_, "w", "b")), {d_emb_});
}

Tensor SpeakerCode::Encode(const EnrollmentInput& in) const {
  return EncodeId(in.speaker_id);
}

// ---------------------------------------------------------------------------

Mhfa::Mhfa(const MhfaConfig& config, uint64_t seed) : config_(config) {
  TSLAB_REQUIRE(config.num_heads >= 1, "mhfa: need at least one head");
  TSLAB_REQUIRE(config.d_c >= 1, "mhfa: compression dim must be positive");
  TSLAB_REQUIRE(config.num_layers >= 1 && config.d_up >= 1 && config.d_emb >= 1,
                "mhfa: sizes must be positive");
  Rng rng(seed);
  const int l = config.num_layers;
  params_.Add("key_logits", Tensor::Parameter({l}, std::vector<double>(l, 0.0)));
  params_.Add("value_logits", Tensor::Parameter({l}, std::vector<double>(l, 0.0)));
  params_.Add("wk", Weight(&rng, config.d_up, config.d_c));
  params_.Add("wv", Weight(&rng, config.d_up, config.d_c));
  params_.Add("queries", Tensor::Parameter({config.num_heads, config.d_c},
                                           RandomNormal(&rng, config.num_heads * config.d_c,
                                                        1.0 / std::sqrt(config.d_c))));
  params_.Add("wo", Weight(&rng, config.num_heads * config.d_c, config.d_emb, kOutputGain));
  params_.Add("bo", Bias(config.d_emb, kOutputBias));
}

Tensor Mhfa::Attention(const LayerFeatureStack& stack) const {
  if (stack.num_layers() != config_.num_layers) {
    throw ContractError("encode_mhfa: stack has " + std::to_string(stack.num_layers()) +
                        " layers, parameters expect " + std::to_string(config_.num_layers));
  }
  TSLAB_REQUIRE(stack.dim() == config_.d_up, "encode_mhfa: feature dim mismatch");
  Tensor k = ops::MatMul(WeightedSum(stack, *params_.Find("key_logits")), *params_.Find("wk"));
  // [H x T]: one softmax over frames per head.
  return ops::Softmax(ops::MatMul(*params_.Find("queries"), ops::Transpose(k)));
}

Tensor Mhfa::EncodeStack(const LayerFeatureStack& stack) const {
  Tensor alpha = Attention(stack);
  Tensor v = ops::MatMul(WeightedSum(stack, *params_.Find("value_logits")), *params_.Find("wv"));
  Tensor heads = ops::Reshape(ops::MatMul(alpha, v), {1, config_.num_heads * config_.d_c});
  return ops::Reshape(Linear(heads, params_, "wo", "bo"), {config_.d_emb});
}

Tensor Mhfa::Encode(const EnrollmentInput& in) const {
  TSLAB_REQUIRE(in.stack != nullptr, "encode_mhfa: no layer stack given");
  return EncodeStack(*in.stack);
}

// ---------------------------------------------------------------------------

ExternalEmbeddings::ExternalEmbeddings(std::map<std::string, std::vector<double>> table,
                                       int d_emb)
    : table_(std::move(table)), d_emb_(d_emb) {
  for (const auto& [id, v] : table_) {
    if (static_cast<int>(v.size()) != d_emb) {
      throw ContractError("external embedding '" + id + "' has " + std::to_string(v.size()) +
                          " values, expected " + std::to_string(d_emb));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw NumericalError("external embedding '" + id + "' is not finite");
    }
  }
}

ExternalEmbeddings ExternalEmbeddings::Load(const std::filesystem::path& csv, int d_emb) {
  std::ifstream in(csv);
  if (!in) throw ContractError("cannot open " + csv.string());
  std::map<std::string, std::vector<double>> table;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string id, cell;
    std::getline(ss, id, ',');
    std::vector<double> v;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ContractError(csv.string() + ":" + std::to_string(lineno) +
                            ": bad number '" + cell + "'");
      }
    }
    if (!table.emplace(id, std::move(v)).second) {
      throw ContractError(csv.string() + ": duplicate utterance id '" + id + "'");
    }
  }
  return ExternalEmbeddings(std::move(table), d_emb);
}

Tensor ExternalEmbeddings::Encode(const EnrollmentInput& in) const {
  auto it = table_.find(in.utterance_id);
  if (it == table_.end()) {
    throw ContractError("no external embedding for utterance '" + in.utterance_id + "'");
  }
  return Tensor({d_emb_}, it->second);
}

}  // namespace tslab
