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

#ifndef TSLAB_EMBOPT_EMBOPT_H_
#define TSLAB_EMBOPT_EMBOPT_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tslab/auxnet/auxnet.h"
#include "tslab/downstream/models.h"

namespace tslab {

enum class EmbObjective { kScoreMax, kCeMin };
enum class EmbOptimizer { kAdamDirection, kRawGradient };
std::string EmbObjectiveName(EmbObjective o);
EmbObjective ParseEmbObjective(const std::string& s);
std::string EmbOptimizerName(EmbOptimizer o);
EmbOptimizer ParseEmbOptimizer(const std::string& s);

struct EmbOptConfig {
  double step_size = 1.0;
  int iterations = 100;
  EmbObjective objective = EmbObjective::kScoreMax;
  EmbOptimizer optimizer = EmbOptimizer::kAdamDirection;
  // true: move so the objective improves (score up, CE down).
  // false: the literal update e <- e - step * d(score)/de.
  bool ascent = true;
};

// 1.0 for fbank and speaker_code, 4.0 for mhfa (and external).
double DefaultStepSize(AuxKind kind);

// sum_t logits[t, labels[t]]. Differentiable.
Tensor TrueClassScore(const Tensor& logits, std::span<const int> labels);

// Per-frame argmax of the model's logits on clean-target features.
std::vector<int> PseudoLabelFrames(const TsAsrModel& model, const Tensor& clean_features,
                                   const Tensor& embedding);

struct EmbeddingTrajectory {
  std::vector<std::vector<double>> embeddings;  // e_0 .. e_N
  std::vector<double> scores;                   // sum_t S_{c_t}(x_t, e_n)
  std::vector<double> cross_entropy;            // mean frame CE against c
  std::vector<double> wer;                      // empty without a reference
};

// Thrown on a non-finite gradient; carries the iterations completed so far.
class EmbOptError : public NumericalError {
 public:
  EmbOptError(const std::string& what, EmbeddingTrajectory partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const EmbeddingTrajectory& partial() const { return partial_; }

 private:
  EmbeddingTrajectory partial_;
};

// Refines the embedding with every model parameter frozen. `features` are
// the mixture's weighted-sum features [T x d_up]; `labels` the per-frame
// classes c_t. With `reference` tokens, the greedy-decoded WER is recorded
// at every iterate.
EmbeddingTrajectory OptimizeEmbedding(TsAsrModel& model, const Tensor& features,
                                      std::span<const int> labels,
                                      std::span<const double> initial,
                                      const EmbOptConfig& config,
                                      std::optional<std::span<const int>> reference = {});

struct TrajectoryRecord {
  std::string example_id;
  EmbeddingTrajectory trajectory;
};

// example_id,iteration,score,wer,e_0..e_{D-1}; wer is empty when absent.
std::string TrajectoryCsv(const std::vector<TrajectoryRecord>& records);
void WriteTrajectoryCsv(const std::vector<TrajectoryRecord>& records,
                        const std::filesystem::path& path);

}  // namespace tslab

#endif  // TSLAB_EMBOPT_EMBOPT_H_
