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

#include "tslab/objectives/objectives.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "tslab/common.h"
#include "tslab/gradcore/ops.h"

namespace tslab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double LogAdd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

void CheckCtcInputs(const Tensor& lp, std::span<const int> target, const char* op) {
  if (lp.rank() != 2 || lp.dim(1) < 2) {
    throw ContractError(std::string(op) + ": log-probs must be [T x (V+1)], got " +
                        ShapeString(lp.shape()));
  }
  const int blank = lp.dim(1) - 1;
  for (int k : target) {
    if (k < 0 || k >= blank) {
      throw ContractError(std::string(op) + ": target token " + std::to_string(k) +
                          " outside [0, " + std::to_string(blank) + ")");
    }
  }
  const int need = CtcMinFrames(target);
  if (lp.dim(0) < need) {
    throw ContractError(std::string(op) + ": target of length " + std::to_string(target.size()) +
                        " needs at least " + std::to_string(need) + " frames, got " +
                        std::to_string(lp.dim(0)));
  }
}

}  // namespace

int CtcMinFrames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

Tensor CtcLoss(const Tensor& log_probs, std::span<const int> target) {
  CheckCtcInputs(log_probs, target, "ctc_loss");
  const int t_len = log_probs.dim(0), c = log_probs.dim(1), blank = c - 1;
  const int s_len = 2 * static_cast<int>(target.size()) + 1;
  std::vector<int> ext(s_len, blank);
  for (size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto lp = [&](int t, int s) { return log_probs.values()[static_cast<size_t>(t) * c + ext[s]]; };
  auto can_skip = [&](int s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(static_cast<size_t>(t_len) * s_len, kNegInf);
  std::vector<double> beta(alpha.size(), kNegInf);
  auto A = [&](int t, int s) -> double& { return alpha[static_cast<size_t>(t) * s_len + s]; };
  auto B = [&](int t, int s) -> double& { return beta[static_cast<size_t>(t) * s_len + s]; };

  A(0, 0) = lp(0, 0);
  if (s_len > 1) A(0, 1) = lp(0, 1);
  for (int t = 1; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      double a = A(t - 1, s);
      if (s >= 1) a = LogAdd(a, A(t - 1, s - 1));
      if (can_skip(s)) a = LogAdd(a, A(t - 1, s - 2));
      if (a != kNegInf) A(t, s) = a + lp(t, s);
    }
  }
  B(t_len - 1, s_len - 1) = lp(t_len - 1, s_len - 1);
  if (s_len > 1) B(t_len - 1, s_len - 2) = lp(t_len - 1, s_len - 2);
  for (int t = t_len - 2; t >= 0; --t) {
    for (int s = 0; s < s_len; ++s) {
      double b = B(t + 1, s);
      if (s + 1 < s_len) b = LogAdd(b, B(t + 1, s + 1));
      if (s + 2 < s_len && can_skip(s + 2)) b = LogAdd(b, B(t + 1, s + 2));
      if (b != kNegInf) B(t, s) = b + lp(t, s);
    }
  }
  double log_p = A(t_len - 1, s_len - 1);
  if (s_len > 1) log_p = LogAdd(log_p, A(t_len - 1, s_len - 2));
  if (!std::isfinite(log_p)) throw NumericalError("ctc_loss: total path probability underflowed");

  // Occupancy per (frame, class).
  std::vector<double> occ(static_cast<size_t>(t_len) * c, 0.0);
  for (int t = 0; t < t_len; ++t) {
    for (int s = 0; s < s_len; ++s) {
      const double v = A(t, s) + B(t, s) - lp(t, s) - log_p;
      if (v != kNegInf && !std::isnan(v)) occ[static_cast<size_t>(t) * c + ext[s]] += std::exp(v);
    }
  }
  return FinishOp("ctc-loss", {1}, {-log_p}, {log_probs},
                  [occ = std::move(occ)](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[0] * occ[i];
                  });
}

double CtcLossBruteForce(const Tensor& log_probs, std::span<const int> target) {
  CheckCtcInputs(log_probs, target, "ctc_loss_bruteforce");
  const int t_len = log_probs.dim(0), c = log_probs.dim(1), blank = c - 1;
  TSLAB_REQUIRE(t_len <= 8 && target.size() <= 4,
                "ctc_loss_bruteforce: limited to T <= 8 and target length <= 4");
  std::vector<int> path(t_len, 0);
  std::vector<double> logs;
  const std::vector<int> want(target.begin(), target.end());
  while (true) {
    std::vector<int> out;
    int prev = -1;
    double lsum = 0.0;
    for (int t = 0; t < t_len; ++t) {
      const int k = path[t];
      lsum += log_probs.values()[static_cast<size_t>(t) * c + k];
      if (k != blank && k != prev) out.push_back(k);
      prev = k;
    }
    if (out == want) logs.push_back(lsum);
    int t = t_len - 1;
    while (t >= 0 && ++path[t] == c) path[t--] = 0;
    if (t < 0) break;
  }
  TSLAB_REQUIRE(!logs.empty(), "ctc_loss_bruteforce: no valid alignment");
  const double m = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double l : logs) s += std::exp(l - m);
  return -(m + std::log(s));
}

std::vector<int> CtcGreedyDecode(const Tensor& log_probs) {
  TSLAB_REQUIRE(log_probs.rank() == 2 && log_probs.dim(1) >= 2,
                "ctc_greedy_decode: log-probs must be [T x (V+1)]");
  const int t_len = log_probs.dim(0), c = log_probs.dim(1), blank = c - 1;
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < t_len; ++t) {
    const double* row = log_probs.values().data() + static_cast<size_t>(t) * c;
    const int k = static_cast<int>(std::max_element(row, row + c) - row);
    if (k != blank && k != prev) out.push_back(k);
    prev = k;
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct SiSdrParts {
  double value;   // clamped dB
  bool clamped;
  double alpha;
  double target_energy, error_energy;
  bool target_floored, error_floored;
};

SiSdrParts ComputeSiSdr(std::span<const double> e, std::span<const double> s) {
  if (e.size() != s.size()) {
    throw ContractError("si_sdr: estimate has " + std::to_string(e.size()) +
                        " samples, reference has " + std::to_string(s.size()));
  }
  double ss = 0.0, es = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    es += e[i] * s[i];
  }
  if (ss == 0.0) throw ContractError("si_sdr: reference is all zeros");
  SiSdrParts p{};
  p.alpha = es / std::max(ss, 1e-12);
  double tt = 0.0, ee = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    const double t = p.alpha * s[i];
    tt += t * t;
    ee += (t - e[i]) * (t - e[i]);
  }
  p.target_floored = tt < 1e-12;
  p.error_floored = ee < 1e-12;
  p.target_energy = std::max(tt, 1e-12);
  p.error_energy = std::max(ee, 1e-12);
  const double raw = 10.0 * std::log10(p.target_energy / p.error_energy);
  p.value = std::clamp(raw, -kSiSdrClampDb, kSiSdrClampDb);
  p.clamped = raw != p.value;
  return p;
}

}  // namespace

double SiSdr(std::span<const double> estimate, std::span<const double> reference) {
  return ComputeSiSdr(estimate, reference).value;
}

Tensor NegSiSdrLoss(const Tensor& estimate, std::span<const double> reference) {
  TSLAB_REQUIRE(estimate.rank() == 1, "neg_si_sdr: estimate must be rank 1");
  SiSdrParts p = ComputeSiSdr(estimate.values(), reference);
  std::vector<double> grad(estimate.size(), 0.0);
  if (!p.clamped) {
    // d/de 10 log10(|t|^2 / |e - t|^2) = 10/ln10 (2t/|t|^2 - 2(e - t)/|e - t|^2)
    const double k = 10.0 / std::log(10.0);
    auto ev = estimate.values();
    for (size_t i = 0; i < grad.size(); ++i) {
      const double t = p.alpha * reference[i];
      double g = 0.0;
      if (!p.target_floored) g += 2.0 * t / p.target_energy;
      if (!p.error_floored) g -= 2.0 * (ev[i] - t) / p.error_energy;
      grad[i] = -k * g;
    }
  }
  return FinishOp("neg-si-sdr", {1}, {-p.value}, {estimate},
                  [grad = std::move(grad)](TensorNode& o, std::span<TensorNode* const> in) {
                    if (!in[0]->requires_grad) return;
                    auto g = in[0]->GradBuffer();
                    for (size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * grad[i];
                  });
}

// ---------------------------------------------------------------------------

Tensor FrameCrossEntropy(const Tensor& logits, std::span<const int> labels) {
  TSLAB_REQUIRE(logits.rank() == 2, "frame_cross_entropy: logits must be [T x C]");
  if (static_cast<int>(labels.size()) != logits.dim(0)) {
    throw ContractError("frame_cross_entropy: " + std::to_string(labels.size()) +
                        " labels for " + std::to_string(logits.dim(0)) + " frames");
  }
  for (int l : labels) {
    if (l < 0 || l >= logits.dim(1)) {
      throw ContractError("frame_cross_entropy: label " + std::to_string(l) + " out of range");
    }
  }
  return ops::Scale(ops::ReduceMean(ops::PickPerRow(ops::LogSoftmax(logits), labels)), -1.0);
}

// ---------------------------------------------------------------------------

int EditDistance(std::span<const int> hyp, std::span<const int> ref) {
  std::vector<int> prev(ref.size() + 1), cur(ref.size() + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= ref.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (hyp[i - 1] != ref[j - 1] ? 1 : 0)});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double Wer(std::span<const int> hyp, std::span<const int> ref) {
  TSLAB_REQUIRE(!ref.empty(), "wer: reference is empty");
  return static_cast<double>(EditDistance(hyp, ref)) / static_cast<double>(ref.size());
}

double AveragePrecision(std::span<const double> scores, std::span<const bool> positive) {
  TSLAB_REQUIRE(scores.size() == positive.size(), "average_precision: size mismatch");
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  double hits = 0.0, sum = 0.0;
  for (size_t r = 0; r < order.size(); ++r) {
    if (positive[order[r]]) {
      hits += 1.0;
      sum += hits / static_cast<double>(r + 1);
    }
  }
  TSLAB_REQUIRE(hits > 0, "average_precision: no positives");
  return sum / hits;
}

double MeanAveragePrecision(std::span<const double> scores, int num_classes,
                            std::span<const int> labels) {
  TSLAB_REQUIRE(num_classes >= 1, "mean_average_precision: no classes");
  TSLAB_REQUIRE(scores.size() == labels.size() * num_classes,
                "mean_average_precision: scores must be [N x C]");
  const size_t n = labels.size();
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> col(n);
    std::unique_ptr<bool[]> pos(new bool[n]);
    bool any = false;
    for (size_t i = 0; i < n; ++i) {
      col[i] = scores[i * num_classes + c];
      pos[i] = labels[i] == c;
      any = any || pos[i];
    }
    if (!any) {
      throw ContractError("mean_average_precision: class " + std::to_string(c) +
                          " never occurs in the labels");
    }
    total += AveragePrecision(col, std::span<const bool>(pos.get(), n));
  }
  return total / num_classes;
}

double EqualErrorRate(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    throw ContractError("eer: need at least one positive and one negative trial");
  }
  std::vector<double> all(positive.begin(), positive.end());
  all.insert(all.end(), negative.begin(), negative.end());
  for (double v : all) {
    if (!std::isfinite(v)) throw NumericalError("eer: non-finite score");
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<double> thresholds;
  thresholds.push_back(all.front() - 1.0);
  for (size_t i = 1; i < all.size(); ++i) thresholds.push_back(0.5 * (all[i - 1] + all[i]));
  thresholds.push_back(all.back() + 1.0);

  auto point = [&](double th) {
    double fa = 0, fr = 0;
    for (double s : negative) fa += s > th;
    for (double s : positive) fr += s <= th;
    return std::pair<double, double>{fa / negative.size(), fr / positive.size()};
  };
  // FAR falls and FRR rises as the threshold grows; find the first point
  // where FAR - FRR stops being positive.
  auto [far0, frr0] = point(thresholds[0]);
  for (size_t i = 1; i < thresholds.size(); ++i) {
    auto [far1, frr1] = point(thresholds[i]);
    const double d0 = far0 - frr0, d1 = far1 - frr1;
    if (d1 == 0.0) return far1;
    if (d0 > 0.0 && d1 < 0.0) {
      const double lambda = d0 / (d0 - d1);
      return far0 + lambda * (far1 - far0);
    }
    far0 = far1;
    frr0 = frr1;
  }
  return far0;
}

double CosineSimilarity(std::span<const double> a, std::span<const double> b) {
  TSLAB_REQUIRE(a.size() == b.size() && !a.empty(), "cosine: size mismatch");
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::max(std::sqrt(aa * bb), 1e-12);
}

double TrialSetEer(const std::vector<Trial>& trials) {
  std::vector<double> pos, neg;
  for (const auto& t : trials) (t.same_speaker ? pos : neg).push_back(CosineSimilarity(t.a, t.b));
  return EqualErrorRate(pos, neg);
}

// ---------------------------------------------------------------------------

std::string MetricsCsv(const std::vector<MetricsReport>& reports) {
  std::string out = "task,split,condition,metric,value,count\n";
  char buf[64];
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.metrics) {
      if (!std::isfinite(value)) {
        throw NumericalError("metric " + name + " is not finite");
      }
      std::snprintf(buf, sizeof(buf), "%.9g", value);
      out += r.task + "," + r.split + "," + r.condition + "," + name + "," + buf + "," +
             std::to_string(r.example_count) + "\n";
    }
  }
  return out;
}

void WriteMetricsCsv(const std::vector<MetricsReport>& reports,
                     const std::filesystem::path& path) {
  const std::string csv = MetricsCsv(reports);
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << csv;
}

std::string MetricsTable(const std::vector<MetricsReport>& reports) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-8s %-12s %-9s %-14s %12s %6s\n", "task", "split",
                "condition", "metric", "value", "n");
  out += buf;
  for (const auto& r : reports) {
    for (const auto& [name, value] : r.metrics) {
      std::snprintf(buf, sizeof(buf), "%-8s %-12s %-9s %-14s %12.4f %6d\n", r.task.c_str(),
                    r.split.c_str(), r.condition.c_str(), name.c_str(), value,
                    r.example_count);
      out += buf;
    }
  }
  return out;
}

}  // namespace tslab
