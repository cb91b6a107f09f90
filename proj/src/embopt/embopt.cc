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

#include "tslab/embopt/embopt.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tslab/gradcore/ops.h"
#include "tslab/objectives/objectives.h"

namespace tslab {

std::string EmbObjectiveName(EmbObjective o) {
  return o == EmbObjective::kScoreMax ? "score_max" : "ce_min";
}

EmbObjective ParseEmbObjective(const std::string& s) {
  if (s == "score_max") return EmbObjective::kScoreMax;
  if (s == "ce_min") return EmbObjective::kCeMin;
  throw ContractError("unknown embopt objective '" + s + "' (score_max|ce_min)");
}

std::string EmbOptimizerName(EmbOptimizer o) {
  return o == EmbOptimizer::kAdamDirection ? "adam_direction" : "raw_gradient";
}

EmbOptimizer ParseEmbOptimizer(const std::string& s) {
  if (s == "adam_direction") return EmbOptimizer::kAdamDirection;
  if (s == "raw_gradient") return EmbOptimizer::kRawGradient;
  throw ContractError("unknown embopt optimizer '" + s + "' (adam_direction|raw_gradient)");
}

double DefaultStepSize(AuxKind kind) {
  switch (kind) {
    case AuxKind::kFbank:
    case AuxKind::kSpeakerCode:
      return 1.0;
    default:
      return 4.0;
  }
}

Tensor TrueClassScore(const Tensor& logits, std::span<const int> labels) {
  TSLAB_REQUIRE(logits.rank() == 2, "true_class_score: logits must be [T x C]");
  if (static_cast<int>(labels.size()) != logits.dim(0)) {
    throw ContractError("true_class_score: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(logits.dim(0)) + " frames");
  }
  for (int c : labels) {
    if (c < 0 || c >= logits.dim(1)) {
      throw ContractError("true_class_score: label " + std::to_string(c) + " out of range");
    }
  }
  return ops::ReduceSum(ops::PickPerRow(logits, labels));
}

std::vector<int> PseudoLabelFrames(const TsAsrModel& model, const Tensor& clean_features,
                                   const Tensor& embedding) {
  NoGradScope no_grad;
  Tensor logits = model.Forward(clean_features, embedding);
  const int t_len = logits.dim(0), c = logits.dim(1);
  std::vector<int> labels(t_len);
  for (int t = 0; t < t_len; ++t) {
    const double* row = logits.values().data() + static_cast<size_t>(t) * c;
    labels[t] = static_cast<int>(std::max_element(row, row + c) - row);
  }
  return labels;
}

EmbeddingTrajectory OptimizeEmbedding(TsAsrModel& model, const Tensor& features,
                                      std::span<const int> labels,
                                      std::span<const double> initial,
                                      const EmbOptConfig& config,
                                      std::optional<std::span<const int>> reference) {
  TSLAB_REQUIRE(config.step_size > 0.0, "embopt: step size must be positive");
  TSLAB_REQUIRE(config.iterations >= 0, "embopt: iterations must be >= 0");
  TSLAB_REQUIRE(static_cast<int>(initial.size()) == model.config().d_emb,
                "embopt: initial embedding has " + std::to_string(initial.size()) +
                    " entries, model expects " + std::to_string(model.config().d_emb));
  if (reference) TSLAB_REQUIRE(!reference->empty(), "embopt: empty reference transcript");

  FreezeScope freeze(&model.params());
  Adam adam(AdamOptions{.float32_storage = false});
  EmbeddingTrajectory traj;
  std::vector<double> e(initial.begin(), initial.end());
  const int d = static_cast<int>(e.size());

  for (int n = 0;; ++n) {
    Tape tape;
    Tensor emb({d}, e);
    emb.set_requires_grad(true);
    Tensor logits, score, ce;
    try {
      logits = model.Forward(features, emb);
      score = TrueClassScore(logits, labels);
      ce = FrameCrossEntropy(logits, labels);
    } catch (const NumericalError& err) {
      throw EmbOptError("embopt: iteration " + std::to_string(n) + ": " + err.what(),
                        std::move(traj));
    }
    if (!std::isfinite(score.item()) || !std::isfinite(ce.item())) {
      throw EmbOptError("embopt: non-finite objective at iteration " + std::to_string(n),
                        std::move(traj));
    }
    traj.embeddings.push_back(e);
    traj.scores.push_back(score.item());
    traj.cross_entropy.push_back(ce.item());
    if (reference) traj.wer.push_back(Wer(CtcGreedyDecode(logits), *reference));
    if (n == config.iterations) break;

    const bool score_max = config.objective == EmbObjective::kScoreMax;
    Tensor g;
    try {
      g = tape.Backward(score_max ? score : ce).Get(emb);
    } catch (const NumericalError& err) {
      throw EmbOptError("embopt: iteration " + std::to_string(n) + ": " + err.what(),
                        std::move(traj));
    }
    for (double v : g.values()) {
      if (!std::isfinite(v)) {
        throw EmbOptError("embopt: non-finite gradient at iteration " + std::to_string(n),
                          std::move(traj));
      }
    }
    std::vector<double> dir = config.optimizer == EmbOptimizer::kAdamDirection
                                  ? adam.Direction(0, g.values())
                                  : std::vector<double>(g.values().begin(), g.values().end());
    // Ascent raises the score (or lowers CE); the literal form subtracts the
    // gradient of the chosen objective.
    double sign = score_max ? 1.0 : -1.0;
    if (!config.ascent) sign = -1.0;
    for (int i = 0; i < d; ++i) e[i] += sign * config.step_size * dir[i];
  }
  return traj;
}

std::string TrajectoryCsv(const std::vector<TrajectoryRecord>& records) {
  size_t dim = 0;
  for (const auto& r : records) {
    if (!r.trajectory.embeddings.empty()) dim = r.trajectory.embeddings[0].size();
  }
  std::string out = "example_id,iteration,score,wer";
  for (size_t i = 0; i < dim; ++i) out += ",e_" + std::to_string(i);
  out += "\n";
  char buf[64];
  for (const auto& r : records) {
    const auto& t = r.trajectory;
    for (size_t n = 0; n < t.embeddings.size(); ++n) {
      out += r.example_id + "," + std::to_string(n);
      std::snprintf(buf, sizeof(buf), ",%.9g,", t.scores[n]);
      out += buf;
      if (n < t.wer.size()) {
        std::snprintf(buf, sizeof(buf), "%.9g", t.wer[n]);
        out += buf;
      }
      TSLAB_REQUIRE(t.embeddings[n].size() == dim, "trajectory csv: mixed embedding sizes");
      for (double v : t.embeddings[n]) {
        std::snprintf(buf, sizeof(buf), ",%.9g", v);
        out += buf;
      }
      out += "\n";
    }
  }
  return out;
}

void WriteTrajectoryCsv(const std::vector<TrajectoryRecord>& records,
                        const std::filesystem::path& path) {
  const std::string csv = TrajectoryCsv(records);
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << csv;
}

}  // namespace tslab
