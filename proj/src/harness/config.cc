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

#include "tslab/harness/config.h"

#include <fstream>
#include <sstream>

namespace tslab {

using nlohmann::json;

json DefaultConfigJson() {
  const ExperimentConfig d;  // typed defaults, before any JSON exists
  return json{
      {"task", TaskName(d.task)},
      {"auxnet", AuxKindName(d.auxnet)},
      {"seed", d.seed},
      {"data_dir", d.data_dir},
      {"data",
       {{"n_train_speakers", d.data.n_train_speakers},
        {"n_open_speakers", d.data.n_open_speakers},
        {"n_train", d.data.n_train},
        {"n_dev", d.data.n_dev},
        {"n_test", d.data.n_test},
        {"condition", ConditionName(d.data.condition)},
        {"corpus_seed", d.data.corpus_seed},
        {"train_utts_per_speaker", d.data.train_utts_per_speaker},
        {"heldout_utts_per_speaker", d.data.heldout_utts_per_speaker}}},
      {"upstream",
       {{"num_layers", d.upstream.num_layers},
        {"dim", d.upstream.dim},
        {"num_mels", d.upstream.num_mels},
        {"seed", d.upstream.seed}}},
      {"aux",
       {{"d_emb", d.aux.d_emb},
        {"fbank_depth", d.aux.fbank_depth},
        {"mhfa_heads", d.aux.mhfa_heads},
        {"mhfa_dc", d.aux.mhfa_dc},
        {"external_csv", d.aux.external_csv}}},
      {"model",
       {{"position", "early"},
        {"tsasr",
         {{"n_blocks", d.tsasr.conformer.n_blocks},
          {"d_model", d.tsasr.conformer.d_model},
          {"n_heads", d.tsasr.conformer.n_heads},
          {"conv_kernel", d.tsasr.conformer.conv_kernel},
          {"d_ff", d.tsasr.conformer.d_ff},
          {"blank_bias", d.tsasr.blank_bias}}},
        {"tse",
         {{"encoder", "learned"},
          {"channels", d.tse.channels},
          {"kernel", d.tse.kernel},
          {"stride", d.tse.stride},
          {"hidden", d.tse.hidden}}},
        {"pvad", {{"hidden", d.pvad.hidden}}}}},
      {"train",
       {{"steps", d.train.steps},
        {"peak_lr", d.train.peak_lr},
        {"warmup_steps", d.train.warmup_steps},
        {"eval_every", d.train.eval_every},
        {"log_every", d.train.log_every},
        {"grad_clip", d.train.grad_clip},
        {"enrollment_resample", "epoch"},
        {"dev_examples", d.train.dev_examples}}},
      {"eval", {{"splits", d.eval_splits}}},
      {"asv",
       {{"split", d.asv.split},
        {"enroll_per_speaker", d.asv.enroll_per_speaker},
        {"trial_seed", d.asv.trial_seed}}},
      {"embopt",
       {{"step_size", 0.0},
        {"iterations", d.embopt.config.iterations},
        {"objective", EmbObjectiveName(d.embopt.config.objective)},
        {"optimizer", EmbOptimizerName(d.embopt.config.optimizer)},
        {"ascent", d.embopt.config.ascent},
        {"split", d.embopt.split},
        {"num_examples", d.embopt.num_examples}}},
  };
}

namespace {

void Merge(json* base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ContractError("config: '" + path + "' must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base->contains(it.key())) throw ContractError("config: unknown key '" + key + "'");
    json& slot = (*base)[it.key()];
    const json& v = it.value();
    bool ok;
    if (slot.is_object()) {
      Merge(&slot, v, key);
      continue;
    } else if (slot.is_number_float()) {
      ok = v.is_number();
    } else if (slot.is_number_unsigned()) {
      ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    } else if (slot.is_number_integer()) {
      ok = v.is_number_integer();
    } else if (slot.is_array()) {
      ok = v.is_array();
    } else {
      ok = std::string(slot.type_name()) == v.type_name();
    }
    if (!ok) {
      throw ContractError("config: '" + key + "' expects " + slot.type_name() + ", got " +
                          v.type_name());
    }
    slot = slot.is_number_float() ? json(v.get<double>()) : v;
  }
}

template <typename T>
T Get(const json& j, const char* a, const char* b) {
  return j.at(a).at(b).get<T>();
}

}  // namespace

void SyncModelDims(ExperimentConfig* c) {
  c->tsasr.num_layers = c->tse.num_layers = c->pvad.num_layers = c->upstream.num_layers;
  c->tsasr.d_up = c->tse.d_up = c->pvad.d_up = c->upstream.dim;
  c->tsasr.d_emb = c->tse.d_emb = c->pvad.d_emb = c->aux.d_emb;
  c->tsasr.vocab = kVocabSize;
  c->tsasr.position = c->tse.position = c->pvad.position = c->position;
}

ExperimentConfig ResolveConfig(const json& overrides) {
  json j = DefaultConfigJson();
  if (!overrides.is_null()) Merge(&j, overrides, "");
  ExperimentConfig c;
  try {
    c.task = ParseTask(j.at("task").get<std::string>());
    c.auxnet = ParseAuxKind(j.at("auxnet").get<std::string>());
    c.seed = j.at("seed").get<uint64_t>();
    c.data_dir = j.at("data_dir").get<std::string>();

    c.data.n_train_speakers = Get<int>(j, "data", "n_train_speakers");
    c.data.n_open_speakers = Get<int>(j, "data", "n_open_speakers");
    c.data.n_train = Get<int>(j, "data", "n_train");
    c.data.n_dev = Get<int>(j, "data", "n_dev");
    c.data.n_test = Get<int>(j, "data", "n_test");
    c.data.condition = ParseCondition(Get<std::string>(j, "data", "condition"));
    c.data.corpus_seed = Get<uint64_t>(j, "data", "corpus_seed");
    c.data.train_utts_per_speaker = Get<int>(j, "data", "train_utts_per_speaker");
    c.data.heldout_utts_per_speaker = Get<int>(j, "data", "heldout_utts_per_speaker");

    c.upstream.num_layers = Get<int>(j, "upstream", "num_layers");
    c.upstream.dim = Get<int>(j, "upstream", "dim");
    c.upstream.num_mels = Get<int>(j, "upstream", "num_mels");
    c.upstream.seed = Get<uint64_t>(j, "upstream", "seed");

    c.aux.d_emb = Get<int>(j, "aux", "d_emb");
    c.aux.fbank_depth = Get<int>(j, "aux", "fbank_depth");
    c.aux.mhfa_heads = Get<int>(j, "aux", "mhfa_heads");
    c.aux.mhfa_dc = Get<int>(j, "aux", "mhfa_dc");
    c.aux.external_csv = Get<std::string>(j, "aux", "external_csv");

    const json& m = j.at("model");
    c.position = ParseConditionPosition(m.at("position").get<std::string>());
    c.tsasr.conformer.n_blocks = Get<int>(m, "tsasr", "n_blocks");
    c.tsasr.conformer.d_model = Get<int>(m, "tsasr", "d_model");
    c.tsasr.conformer.n_heads = Get<int>(m, "tsasr", "n_heads");
    c.tsasr.conformer.conv_kernel = Get<int>(m, "tsasr", "conv_kernel");
    c.tsasr.conformer.d_ff = Get<int>(m, "tsasr", "d_ff");
    c.tsasr.blank_bias = Get<double>(m, "tsasr", "blank_bias");
    const std::string enc = Get<std::string>(m, "tse", "encoder");
    if (enc == "learned") {
      c.tse.encoder = TseEncoder::kLearned;
    } else if (enc == "stft") {
      c.tse.encoder = TseEncoder::kStft;
    } else {
      throw ContractError("config: model.tse.encoder must be learned or stft, got '" + enc + "'");
    }
    c.tse.channels = Get<int>(m, "tse", "channels");
    c.tse.kernel = Get<int>(m, "tse", "kernel");
    c.tse.stride = Get<int>(m, "tse", "stride");
    c.tse.hidden = Get<int>(m, "tse", "hidden");
    c.pvad.hidden = Get<int>(m, "pvad", "hidden");

    c.train.steps = Get<long>(j, "train", "steps");
    c.train.peak_lr = Get<double>(j, "train", "peak_lr");
    c.train.warmup_steps = Get<long>(j, "train", "warmup_steps");
    c.train.eval_every = Get<long>(j, "train", "eval_every");
    c.train.log_every = Get<long>(j, "train", "log_every");
    c.train.grad_clip = Get<double>(j, "train", "grad_clip");
    const std::string resample = Get<std::string>(j, "train", "enrollment_resample");
    if (resample != "epoch" && resample != "step") {
      throw ContractError("config: train.enrollment_resample must be epoch or step");
    }
    c.train.resample_per_step = resample == "step";
    c.train.dev_examples = Get<int>(j, "train", "dev_examples");

    c.eval_splits = j.at("eval").at("splits").get<std::vector<std::string>>();

    c.asv.split = Get<std::string>(j, "asv", "split");
    c.asv.enroll_per_speaker = Get<int>(j, "asv", "enroll_per_speaker");
    c.asv.trial_seed = Get<uint64_t>(j, "asv", "trial_seed");

    c.embopt.config.step_size = Get<double>(j, "embopt", "step_size");
    c.embopt.config.iterations = Get<int>(j, "embopt", "iterations");
    c.embopt.config.objective = ParseEmbObjective(Get<std::string>(j, "embopt", "objective"));
    c.embopt.config.optimizer = ParseEmbOptimizer(Get<std::string>(j, "embopt", "optimizer"));
    c.embopt.config.ascent = Get<bool>(j, "embopt", "ascent");
    c.embopt.split = Get<std::string>(j, "embopt", "split");
    c.embopt.num_examples = Get<int>(j, "embopt", "num_examples");
  } catch (const json::exception& e) {
    throw ContractError(std::string("config: ") + e.what());
  }

  TSLAB_REQUIRE(c.train.steps > 0, "config: train.steps must be positive");
  TSLAB_REQUIRE(c.train.warmup_steps >= 0 && c.train.warmup_steps <= c.train.steps,
                "config: train.warmup_steps must lie in [0, steps]");
  TSLAB_REQUIRE(c.train.eval_every > 0 && c.train.log_every > 0,
                "config: eval_every and log_every must be positive");
  TSLAB_REQUIRE(c.train.peak_lr > 0.0, "config: train.peak_lr must be positive");
  TSLAB_REQUIRE(c.aux.d_emb > 0, "config: aux.d_emb must be positive");
  TSLAB_REQUIRE(c.embopt.config.iterations >= 0, "config: embopt.iterations must be >= 0");
  TSLAB_REQUIRE(c.embopt.config.step_size >= 0.0,
                "config: embopt.step_size must be >= 0 (0 selects the per-auxnet default)");
  TSLAB_REQUIRE(c.upstream.num_mels == FbankOptions{}.num_mels,
                "config: upstream.num_mels must be " + std::to_string(FbankOptions{}.num_mels));
  if (c.auxnet == AuxKind::kExternal) {
    TSLAB_REQUIRE(!c.aux.external_csv.empty(), "config: auxnet external needs aux.external_csv");
  }
  SyncModelDims(&c);
  c.resolved = std::move(j);
  return c;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot read config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ContractError("config " + path.string() + ": " + e.what());
  }
  return ResolveConfig(j);
}

ExperimentConfig DefaultConfig() { return ResolveConfig(json()); }

void CheckSplitCompatible(AuxKind aux, const std::string& split) {
  if (aux == AuxKind::kSpeakerCode && split == "test-open") {
    throw ContractError(
        "speaker_code is only defined in a speaker-closed condition; split test-open "
        "contains speakers outside the training roster");
  }
}

std::string DumpJson(const json& j) { return j.dump(1) + "\n"; }

}  // namespace tslab
