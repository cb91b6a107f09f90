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

#ifndef TSLAB_HARNESS_PIPELINE_H_
#define TSLAB_HARNESS_PIPELINE_H_

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tslab/harness/checkpoint.h"
#include "tslab/harness/config.h"
#include "tslab/objectives/objectives.h"

namespace tslab {

// Model + auxiliary network built from a config. Parameter names carry a
// "model/" or "aux/" prefix in the combined set.
struct Experiment {
  ExperimentConfig config;
  ToyUpstream upstream;
  std::unique_ptr<TaskModel> model;
  std::unique_ptr<AuxNet> aux;
  ParameterSet params;

  TsAsrModel& tsasr();
  TseModel& tse();
  PVadModel& pvad();
};

std::unique_ptr<Experiment> MakeExperiment(const ExperimentConfig& config);
// Rebuilds the experiment a checkpoint was trained with and loads its
// weights. With `expected`, the task, auxnet and every model dimension must
// agree with it.
std::unique_ptr<Experiment> RestoreExperiment(const CheckpointData& ck,
                                              const ExperimentConfig* expected = nullptr);

// Upstream features per waveform, computed on first use.
class FeatureCache {
 public:
  FeatureCache(const Dataset* dataset, const ToyUpstream* upstream);

  const LayerFeatureStack& Mixture(const std::string& split, size_t index);
  const LayerFeatureStack& CleanTarget(const std::string& split, size_t index);
  EnrollmentInput Enrollment(const std::string& utterance_key);
  const Dataset& dataset() const { return *dataset_; }

 private:
  struct EnrollEntry {
    Tensor fbank;
    LayerFeatureStack stack;
  };
  const Dataset* dataset_;
  const ToyUpstream* upstream_;
  std::map<std::string, LayerFeatureStack> mixtures_, clean_;
  std::map<std::string, EnrollEntry> enroll_;
};

enum class EmbeddingSource { kAux, kOnes, kZeros, kNone };
EmbeddingSource ParseEmbeddingSource(const std::string& s);

// Labels for feature frame t come from VAD label frame t + 1 (the frame
// holding the window centre), clamped to the last label.
std::vector<int> AlignVadLabels(const std::vector<int>& vad_labels, int num_frames);

// Per-split evaluation. Metrics:
//   tsasr: wer (token error rate, corpus level), ctc_loss
//   tse:   si_sdr, si_sdri, loss
//   pvad:  map, ce
MetricsReport Evaluate(Experiment& exp, FeatureCache& cache, const std::string& split,
                       EmbeddingSource source = EmbeddingSource::kAux, int max_examples = 0);

// Larger is better: -wer, si_sdri, map.
double SelectionScore(Task task, const MetricsReport& report);

struct TrainResult {
  long steps = 0;
  double initial_loss = 0.0;  // mean over the first logging window
  double final_loss = 0.0;    // mean over the last logging window
  double best_dev_score = 0.0;
  long best_step = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
};

// Trains on the dataset's train split, evaluating on dev every eval_every
// steps. Writes resolved_config.json, train_log.csv, best.ckpt and
// last.ckpt into `out_dir`.
TrainResult Train(const ExperimentConfig& config, const Dataset& dataset,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const std::string&)>& log = {});

struct AsvResult {
  double eer = 0.0;
  int num_speakers = 0;
  int num_positive = 0;
  int num_negative = 0;
};
AsvResult AsvEvaluate(Experiment& exp, FeatureCache& cache, const AsvOptions& options);

struct EmbOptRun {
  std::vector<TrajectoryRecord> records;
  std::vector<int> reference_lengths;
  // (iteration, corpus-level WER) at 0, 10, 20, ..., N.
  std::vector<std::pair<int, double>> wer_by_iteration;
  double fraction_score_improved = 0.0;
  bool parameters_unchanged = true;
};
EmbOptRun RunEmbeddingOptimization(Experiment& exp, FeatureCache& cache,
                                   const EmbOptOptions& options,
                                   const std::vector<std::string>& example_ids = {});
std::string EmbOptWerTable(const EmbOptRun& run);

struct Projection {
  std::vector<std::vector<double>> coords;  // [n][2]
  std::vector<double> explained;            // 2 fractions of total variance
  bool degenerate = false;                  // fewer than 2 non-zero singular values
};
Projection ProjectPca(const std::vector<std::vector<double>>& points);

struct LabeledEmbedding {
  std::string id;
  int speaker = -1;
  bool high_f0 = false;
  std::vector<double> values;
};
// One embedding per utterance of the split's roster that the split uses.
std::vector<LabeledEmbedding> CollectEmbeddings(Experiment& exp, FeatureCache& cache,
                                                const std::string& split);
// "id,v1,...,vD" rows; speaker and f0 group come from the utterance key and
// the corpus seed.
std::vector<LabeledEmbedding> ReadEmbeddingCsv(const std::filesystem::path& path,
                                               uint64_t corpus_seed);
void WriteEmbeddingCsv(const std::vector<LabeledEmbedding>& e, const std::filesystem::path& path);
void WriteProjectionCsv(const std::vector<LabeledEmbedding>& e, const Projection& p,
                        const std::filesystem::path& path);
std::string ProjectionSvg(const std::vector<LabeledEmbedding>& e, const Projection& p);

// Exclusive lock on an output directory for the object's lifetime.
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Creates `dir`. A non-empty existing directory is an error unless `force`,
// in which case its contents are removed.
void PrepareOutputDir(const std::filesystem::path& dir, bool force);

void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace tslab

#endif  // TSLAB_HARNESS_PIPELINE_H_
