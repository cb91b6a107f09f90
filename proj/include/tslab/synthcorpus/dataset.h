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

#ifndef TSLAB_SYNTHCORPUS_DATASET_H_
#define TSLAB_SYNTHCORPUS_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tslab/synthcorpus/corpus.h"

namespace tslab {

enum class Condition { kClean, kBoth };
std::string ConditionName(Condition c);
Condition ParseCondition(const std::string& s);

struct DatasetConfig {
  int n_train_speakers = 32;
  int n_open_speakers = 8;
  int n_train = 500;
  int n_dev = 100;
  int n_test = 100;
  Condition condition = Condition::kClean;
  uint64_t corpus_seed = 1234;
  // Utterances per speaker in each pool; pools never share an utterance.
  int train_utts_per_speaker = 12;
  int heldout_utts_per_speaker = 4;
  // Explicit rosters override the default id ranges when non-empty.
  std::vector<int> train_speakers;
  std::vector<int> open_speakers;
};

// Utterance keys look like "spk003_utt012".
std::string UtteranceKey(int speaker_id, int utt_index);
int SpeakerFromKey(const std::string& key);

struct MixtureEntry {
  std::string id;
  std::string target_utt;
  std::string interferer_utt;
  // Fixed one-to-one enrollment (dev/test); for train, the first candidate.
  std::string enrollment_utt;
  // Training draws the enrollment from these at run time.
  std::vector<std::string> enrollment_candidates;
  MixtureExample example;
};

struct DatasetSplit {
  std::string name;  // train, dev, test-open, test-closed
  std::vector<int> roster;
  std::vector<MixtureEntry> entries;
};

struct Dataset {
  DatasetConfig config;
  std::map<std::string, UtteranceRecord> utterances;
  std::vector<DatasetSplit> splits;

  const DatasetSplit& split(const std::string& name) const;
  const UtteranceRecord& utterance(const std::string& key) const;
};

// Rosters: train ids [0, n_train_speakers), open ids follow. Train and dev
// and test-closed draw targets from the train roster with disjoint utterance
// pools; test-open uses only the open roster. Utterance waveforms are kept
// on the PCM16 grid so that a WAV round trip is lossless.
Dataset BuildDataset(const DatasetConfig& config);

// Reproduces the utterance a key refers to.
UtteranceRecord MakeUtterance(uint64_t corpus_seed, int speaker_id,
                              int utt_index);

// Layout under `dir`:
//   corpus.json                 config + rosters + speaker profiles
//   utterances/<key>.wav        enrollment pool
//   <split>/<id>_{mix,target,interf[,noise]}.wav
//   <split>.json                manifest
void WriteDataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset LoadDataset(const std::filesystem::path& dir);

// PCM16 little-endian mono WAV.
void WriteWav(const std::filesystem::path& path, const Waveform& wave);
Waveform ReadWav(const std::filesystem::path& path);

}  // namespace tslab

#endif  // TSLAB_SYNTHCORPUS_DATASET_H_
