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

#ifndef TSLAB_HARNESS_CONFIG_H_
#define TSLAB_HARNESS_CONFIG_H_

#include <filesystem>
#include <string>

#include "json.hpp"
#include "tslab/auxnet/auxnet.h"
#include "tslab/downstream/models.h"
#include "tslab/embopt/embopt.h"
#include "tslab/synthcorpus/dataset.h"

namespace tslab {

struct TrainOptions {
  long steps = 3000;
  double peak_lr = 1e-3;
  long warmup_steps = 300;
  long eval_every = 500;
  long log_every = 100;
  double grad_clip = 5.0;        // global L2 norm; 0 disables
  bool resample_per_step = false;  // enrollment resampling; default per epoch
  int dev_examples = 100;          // 0 = whole dev split
};

struct AuxOptions {
  int d_emb = 32;
  int fbank_depth = 2;
  int mhfa_heads = 4;
  int mhfa_dc = 16;
  std::string external_csv;
};

struct AsvOptions {
  std::string split = "test-open";
  int enroll_per_speaker = 2;
  uint64_t trial_seed = 7;
};

struct EmbOptOptions {
  EmbOptConfig config;          // step_size <= 0 means the per-auxnet default
  std::string split = "test-closed";
  int num_examples = 50;
};

struct ExperimentConfig {
  Task task = Task::kTsAsr;
  AuxKind auxnet = AuxKind::kSpeakerCode;
  uint64_t seed = 1;
  std::string data_dir = "data";
  DatasetConfig data;
  UpstreamConfig upstream;
  AuxOptions aux;
  ConditionPosition position = ConditionPosition::kEarly;
  TsAsrConfig tsasr;
  TseConfig tse;
  PVadConfig pvad;
  TrainOptions train;
  std::vector<std::string> eval_splits = {"test-closed", "test-open"};
  AsvOptions asv;
  EmbOptOptions embopt;

  nlohmann::json resolved;  // every field, after merging
};

// Full default configuration as JSON.
nlohmann::json DefaultConfigJson();

// Merges `overrides` over the defaults; unknown keys and wrongly typed
// values are ContractErrors.
ExperimentConfig ResolveConfig(const nlohmann::json& overrides);
ExperimentConfig LoadConfig(const std::filesystem::path& path);
ExperimentConfig DefaultConfig();

// Applies the dimensions shared between modules (d_up, d_emb, layers, vocab,
// position) to the task configs.
void SyncModelDims(ExperimentConfig* config);

// speaker_code is only defined on speaker-closed splits.
void CheckSplitCompatible(AuxKind aux, const std::string& split);

// Stable text for hashing and file output (sorted keys, indent 1).
std::string DumpJson(const nlohmann::json& j);

}  // namespace tslab

#endif  // TSLAB_HARNESS_CONFIG_H_
