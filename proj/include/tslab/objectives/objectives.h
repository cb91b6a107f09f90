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

#ifndef TSLAB_OBJECTIVES_OBJECTIVES_H_
#define TSLAB_OBJECTIVES_OBJECTIVES_H_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tslab/gradcore/tensor.h"

namespace tslab {

// ---- CTC -----------------------------------------------------------------

// Smallest T that can emit `target`: its length plus one blank between each
// pair of equal neighbours.
int CtcMinFrames(std::span<const int> target);

// -log sum over alignments, log-space forward algorithm. log_probs is
// [T x (V+1)] with blank = V. The gradient w.r.t. log_probs is minus the
// per-frame label occupancy. Throws ContractError for an inadmissible target.
Tensor CtcLoss(const Tensor& log_probs, std::span<const int> target);

// Exhaustive enumeration of every (V+1)^T frame path. Test oracle; capped at
// T <= 8 and |target| <= 4.
double CtcLossBruteForce(const Tensor& log_probs, std::span<const int> target);

// Per-frame argmax, collapse repeats, drop blanks.
std::vector<int> CtcGreedyDecode(const Tensor& log_probs);

// ---- SI-SDR ----------------------------------------------------------------

constexpr double kSiSdrClampDb = 60.0;

// 10 log10(|a s|^2 / |a s - e|^2), a = <e, s> / |s|^2, 1e-12 floors,
// clamped to [-60, 60] dB.
double SiSdr(std::span<const double> estimate, std::span<const double> reference);

// -SiSdr as a differentiable scalar of `estimate` (rank 1). Zero gradient
// where the value is clamped.
Tensor NegSiSdrLoss(const Tensor& estimate, std::span<const double> reference);

// ---- Frame classification --------------------------------------------------

// Mean over frames of -log softmax(logits)[t, labels[t]].
Tensor FrameCrossEntropy(const Tensor& logits, std::span<const int> labels);

// ---- Metrics ---------------------------------------------------------------

int EditDistance(std::span<const int> hypothesis, std::span<const int> reference);
// Token error rate: edits / |reference|. Unclipped.
double Wer(std::span<const int> hypothesis, std::span<const int> reference);

// scores [N x C] row-major, labels [N]. Per class: rank frames by that
// class's score (descending; ties keep frame order), average precision
// over the positives; mean over classes.
double MeanAveragePrecision(std::span<const double> scores, int num_classes,
                            std::span<const int> labels);
double AveragePrecision(std::span<const double> scores, std::span<const bool> positive);

// Thresholds at score midpoints (plus both ends); accept if score > theta.
// EER is read at the sign change of FAR - FRR with linear interpolation
// between the two neighbouring operating points.
double EqualErrorRate(std::span<const double> positive, std::span<const double> negative);

double CosineSimilarity(std::span<const double> a, std::span<const double> b);

struct Trial {
  std::vector<double> a, b;
  bool same_speaker = false;
};
double TrialSetEer(const std::vector<Trial>& trials);

// ---- Reports ---------------------------------------------------------------

struct MetricsReport {
  std::string task;
  std::string split;
  std::string condition;
  std::map<std::string, double> metrics;
  int example_count = 0;
};

// CSV: task,split,condition,metric,value,count; one row per metric.
std::string MetricsCsv(const std::vector<MetricsReport>& reports);
void WriteMetricsCsv(const std::vector<MetricsReport>& reports,
                     const std::filesystem::path& path);
std::string MetricsTable(const std::vector<MetricsReport>& reports);

}  // namespace tslab

#endif  // TSLAB_OBJECTIVES_OBJECTIVES_H_
