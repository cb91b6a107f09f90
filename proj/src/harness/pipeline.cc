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

#include "tslab/harness/pipeline.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unistd.h>

#include "tslab/gradcore/ops.h"

namespace tslab {

using nlohmann::json;

namespace {

constexpr uint64_t kModelSeedTag = 0x4D4F44;
constexpr uint64_t kAuxSeedTag = 0x415558;
constexpr uint64_t kTrainSeedTag = 0x54524E;

std::vector<int> TrainRoster(const ExperimentConfig& c) {
  std::vector<int> r(c.data.n_train_speakers);
  for (int i = 0; i < c.data.n_train_speakers; ++i) r[i] = i;
  return r;
}

const MixtureEntry& EntryAt(const Dataset& ds, const std::string& split, size_t index) {
  const DatasetSplit& s = ds.split(split);
  TSLAB_REQUIRE(index < s.entries.size(), "split " + split + ": index out of range");
  return s.entries[index];
}

std::string CacheKey(const std::string& split, size_t index) {
  return split + "/" + std::to_string(index);
}

}  // namespace

TsAsrModel& Experiment::tsasr() {
  auto* m = dynamic_cast<TsAsrModel*>(model.get());
  TSLAB_REQUIRE(m != nullptr, "experiment task is " + TaskName(model->task()) + ", not tsasr");
  return *m;
}

TseModel& Experiment::tse() {
  auto* m = dynamic_cast<TseModel*>(model.get());
  TSLAB_REQUIRE(m != nullptr, "experiment task is " + TaskName(model->task()) + ", not tse");
  return *m;
}

PVadModel& Experiment::pvad() {
  auto* m = dynamic_cast<PVadModel*>(model.get());
  TSLAB_REQUIRE(m != nullptr, "experiment task is " + TaskName(model->task()) + ", not pvad");
  return *m;
}

std::unique_ptr<Experiment> MakeExperiment(const ExperimentConfig& config) {
  auto exp = std::make_unique<Experiment>(Experiment{config, ToyUpstream(config.upstream), {}, {}, {}});
  const uint64_t model_seed = DeriveSeed(config.seed, kModelSeedTag);
  const uint64_t aux_seed = DeriveSeed(config.seed, kAuxSeedTag);
  switch (config.task) {
    case Task::kTsAsr:
      exp->model = std::make_unique<TsAsrModel>(config.tsasr, model_seed);
      break;
    case Task::kTse:
      exp->model = std::make_unique<TseModel>(config.tse, model_seed);
      break;
    case Task::kPVad:
      exp->model = std::make_unique<PVadModel>(config.pvad, model_seed);
      break;
  }
  const int d_emb = config.aux.d_emb;
  switch (config.auxnet) {
    case AuxKind::kFbank:
      exp->aux = std::make_unique<FbankAux>(config.upstream.num_mels, d_emb,
                                            config.aux.fbank_depth, aux_seed);
      break;
    case AuxKind::kSpeakerCode:
      exp->aux = std::make_unique<SpeakerCode>(TrainRoster(config), d_emb, aux_seed);
      break;
    case AuxKind::kMhfa:
      exp->aux = std::make_unique<Mhfa>(
          MhfaConfig{config.upstream.num_layers, config.upstream.dim, config.aux.mhfa_heads,
                     config.aux.mhfa_dc, d_emb},
          aux_seed);
      break;
    case AuxKind::kExternal:
      exp->aux = std::make_unique<ExternalEmbeddings>(
          ExternalEmbeddings::Load(config.aux.external_csv, d_emb));
      break;
  }
  exp->params.Append("model/", exp->model->params());
  exp->params.Append("aux/", exp->aux->params());
  return exp;
}

std::unique_ptr<Experiment> RestoreExperiment(const CheckpointData& ck,
                                              const ExperimentConfig* expected) {
  ExperimentConfig cfg = ResolveConfig(ck.config);
  if (expected != nullptr) {
    for (const char* key : {"task", "auxnet", "upstream", "aux", "model"}) {
      if (cfg.resolved.at(key) != expected->resolved.at(key)) {
        throw ContractError(std::string("checkpoint was trained with a different '") + key +
                            "' configuration: " + cfg.resolved.at(key).dump() + " vs " +
                            expected->resolved.at(key).dump());
      }
    }
  }
  auto exp = MakeExperiment(cfg);
  RestoreParameters(ck, &exp->params);
  return exp;
}

// ---------------------------------------------------------------------------

FeatureCache::FeatureCache(const Dataset* dataset, const ToyUpstream* upstream)
    : dataset_(dataset), upstream_(upstream) {}

const LayerFeatureStack& FeatureCache::Mixture(const std::string& split, size_t index) {
  const std::string key = CacheKey(split, index);
  auto it = mixtures_.find(key);
  if (it == mixtures_.end()) {
    it = mixtures_
             .emplace(key, upstream_->Forward(EntryAt(*dataset_, split, index).example.mixture))
             .first;
  }
  return it->second;
}

const LayerFeatureStack& FeatureCache::CleanTarget(const std::string& split, size_t index) {
  const std::string key = CacheKey(split, index);
  auto it = clean_.find(key);
  if (it == clean_.end()) {
    it = clean_
             .emplace(key,
                      upstream_->Forward(EntryAt(*dataset_, split, index).example.target_clean))
             .first;
  }
  return it->second;
}

EnrollmentInput FeatureCache::Enrollment(const std::string& utterance_key) {
  auto it = enroll_.find(utterance_key);
  if (it == enroll_.end()) {
    const Tensor fb = Fbank(dataset_->utterance(utterance_key).wave);
    it = enroll_.emplace(utterance_key, EnrollEntry{NormalizeFbank(fb), upstream_->ForwardFbank(fb)})
             .first;
  }
  EnrollmentInput in;
  in.fbank = it->second.fbank;
  in.stack = &it->second.stack;
  in.speaker_id = SpeakerFromKey(utterance_key);
  in.utterance_id = utterance_key;
  return in;
}

EmbeddingSource ParseEmbeddingSource(const std::string& s) {
  if (s == "aux") return EmbeddingSource::kAux;
  if (s == "ones") return EmbeddingSource::kOnes;
  if (s == "zeros") return EmbeddingSource::kZeros;
  if (s == "none") return EmbeddingSource::kNone;
  throw ContractError("unknown embedding source '" + s + "' (aux|ones|zeros|none)");
}

std::vector<int> AlignVadLabels(const std::vector<int>& vad_labels, int num_frames) {
  TSLAB_REQUIRE(!vad_labels.empty(), "vad labels are empty");
  std::vector<int> out(num_frames);
  const int last = static_cast<int>(vad_labels.size()) - 1;
  for (int t = 0; t < num_frames; ++t) out[t] = vad_labels[std::min(t + 1, last)];
  return out;
}

namespace {

std::optional<Tensor> MakeEmbedding(Experiment& exp, FeatureCache& cache,
                                    const std::string& enroll_key, EmbeddingSource source) {
  const int d = exp.config.aux.d_emb;
  switch (source) {
    case EmbeddingSource::kAux:
      return exp.aux->Encode(cache.Enrollment(enroll_key));
    case EmbeddingSource::kOnes:
      return Tensor::Filled({d}, 1.0);
    case EmbeddingSource::kZeros:
      return Tensor::Zeros({d});
    case EmbeddingSource::kNone:
      return std::nullopt;
  }
  return std::nullopt;
}

struct ExampleOutput {
  Tensor loss;
  // tsasr
  int edits = 0, ref_len = 0;
  // tse
  double si_sdr = 0.0, si_sdr_mix = 0.0;
  // pvad
  std::vector<double> posteriors;
  std::vector<int> labels;
};

ExampleOutput RunExample(Experiment& exp, FeatureCache& cache, const std::string& split,
                         size_t index, const std::string& enroll_key, EmbeddingSource source,
                         bool metrics) {
  const MixtureEntry& entry = EntryAt(cache.dataset(), split, index);
  const MixtureExample& ex = entry.example;
  const LayerFeatureStack& stack = cache.Mixture(split, index);
  Tensor feats = exp.model->Features(stack);
  std::optional<Tensor> emb = MakeEmbedding(exp, cache, enroll_key, source);
  ExampleOutput out;
  switch (exp.config.task) {
    case Task::kTsAsr: {
      Tensor lp = ops::LogSoftmax(exp.tsasr().Forward(feats, emb));
      const auto& tokens = ex.transcript.tokens;
      out.loss = CtcLoss(lp, tokens);
      if (metrics) {
        out.edits = EditDistance(CtcGreedyDecode(lp), tokens);
        out.ref_len = static_cast<int>(tokens.size());
      }
      break;
    }
    case Task::kTse: {
      Tensor est = exp.tse().Forward(ex.mixture, feats, emb);
      out.loss = NegSiSdrLoss(est, ex.target_clean.samples);
      if (metrics) {
        out.si_sdr = -out.loss.item();
        out.si_sdr_mix = SiSdr(ex.mixture.samples, ex.target_clean.samples);
      }
      break;
    }
    case Task::kPVad: {
      Tensor logits = exp.pvad().Forward(feats, emb);
      out.labels = AlignVadLabels(ex.vad_labels, logits.dim(0));
      out.loss = FrameCrossEntropy(logits, out.labels);
      if (metrics) {
        Tensor p = ops::Softmax(logits);
        out.posteriors.assign(p.values().begin(), p.values().end());
      }
      break;
    }
  }
  return out;
}

}  // namespace

MetricsReport Evaluate(Experiment& exp, FeatureCache& cache, const std::string& split,
                       EmbeddingSource source, int max_examples) {
  if (source == EmbeddingSource::kAux) CheckSplitCompatible(exp.config.auxnet, split);
  const DatasetSplit& s = cache.dataset().split(split);
  size_t n = s.entries.size();
  if (max_examples > 0) n = std::min(n, static_cast<size_t>(max_examples));
  TSLAB_REQUIRE(n > 0, "evaluate: split " + split + " is empty");
  NoGradScope no_grad;
  MetricsReport r;
  r.task = TaskName(exp.config.task);
  r.split = split;
  r.condition = ConditionName(cache.dataset().config.condition);
  r.example_count = static_cast<int>(n);
  double loss = 0.0, sdr = 0.0, sdr_mix = 0.0;
  long edits = 0, ref_len = 0;
  std::vector<double> scores;
  std::vector<int> labels;
  for (size_t i = 0; i < n; ++i) {
    ExampleOutput o =
        RunExample(exp, cache, split, i, s.entries[i].enrollment_utt, source, true);
    loss += o.loss.item();
    edits += o.edits;
    ref_len += o.ref_len;
    sdr += o.si_sdr;
    sdr_mix += o.si_sdr_mix;
    scores.insert(scores.end(), o.posteriors.begin(), o.posteriors.end());
    labels.insert(labels.end(), o.labels.begin(), o.labels.end());
  }
  const double dn = static_cast<double>(n);
  switch (exp.config.task) {
    case Task::kTsAsr:
      r.metrics["wer"] = static_cast<double>(edits) / static_cast<double>(ref_len);
      r.metrics["ctc_loss"] = loss / dn;
      break;
    case Task::kTse:
      r.metrics["si_sdr"] = sdr / dn;
      r.metrics["si_sdri"] = (sdr - sdr_mix) / dn;
      r.metrics["loss"] = loss / dn;
      break;
    case Task::kPVad:
      r.metrics["map"] = MeanAveragePrecision(scores, kNumVadClasses, labels);
      r.metrics["ce"] = loss / dn;
      break;
  }
  return r;
}

double SelectionScore(Task task, const MetricsReport& report) {
  switch (task) {
    case Task::kTsAsr:
      return -report.metrics.at("wer");
    case Task::kTse:
      return report.metrics.at("si_sdri");
    case Task::kPVad:
      return report.metrics.at("map");
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

TrainResult Train(const ExperimentConfig& config, const Dataset& dataset,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const std::string&)>& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const TrainOptions& opt = config.train;
  auto exp_ptr = MakeExperiment(config);
  Experiment& exp = *exp_ptr;
  FeatureCache cache(&dataset, &exp.upstream);
  const DatasetSplit& train = dataset.split("train");
  const size_t n = train.entries.size();
  TSLAB_REQUIRE(n > 0, "train: empty train split");
  for (const auto& e : train.entries) {
    TSLAB_REQUIRE(!e.enrollment_candidates.empty(), "train: example " + e.id + " has no enrollment");
  }
  WriteTextFile(out_dir / "resolved_config.json", DumpJson(config.resolved));

  Rng rng(DeriveSeed(config.seed, kTrainSeedTag));
  Adam adam;
  WarmupLinearSchedule schedule(opt.peak_lr, opt.warmup_steps, opt.steps);
  std::vector<size_t> order(n);
  std::vector<std::string> enroll(n);
  size_t pos = 0;
  auto draw_enrollment = [&](size_t i) {
    const auto& c = train.entries[i].enrollment_candidates;
    return c[rng.UniformInt(static_cast<int>(c.size()))];
  };

  TrainResult result;
  result.best_dev_score = -std::numeric_limits<double>::infinity();
  result.best_checkpoint = out_dir / "best.ckpt";
  result.last_checkpoint = out_dir / "last.ckpt";
  std::string train_log = "step,train_loss,lr,dev_loss,dev_metric\n";
  double window_loss = 0.0;
  long window_count = 0;
  bool first_window = true;
  char buf[160];
  const char* dev_metric_name = config.task == Task::kTsAsr ? "wer"
                                : config.task == Task::kTse ? "si_sdri"
                                                            : "map";
  const char* dev_loss_name = config.task == Task::kTsAsr ? "ctc_loss"
                              : config.task == Task::kTse ? "loss"
                                                          : "ce";

  for (long step = 1; step <= opt.steps; ++step) {
    if (pos == 0) {
      for (size_t i = 0; i < n; ++i) order[i] = i;
      rng.Shuffle(&order);
      if (!opt.resample_per_step) {
        for (size_t i = 0; i < n; ++i) enroll[i] = draw_enrollment(i);
      }
    }
    const size_t idx = order[pos];
    pos = (pos + 1) % n;
    const std::string enroll_key = opt.resample_per_step ? draw_enrollment(idx) : enroll[idx];
    const double rate = schedule.Rate(step);

    Tape tape;
    ExampleOutput o;
    try {
      o = RunExample(exp, cache, "train", idx, enroll_key, EmbeddingSource::kAux, false);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step) +
                           "; last good checkpoint: " + result.last_checkpoint.string());
    }
    const double loss = o.loss.item();
    if (!std::isfinite(loss)) {
      throw NumericalError("training loss diverged at step " + std::to_string(step) +
                           "; last good checkpoint: " + result.last_checkpoint.string());
    }
    Gradients grads = tape.Backward(o.loss);
    std::vector<Tensor> ps, gs;
    double norm2 = 0.0;
    for (size_t i = 0; i < exp.params.size(); ++i) {
      ps.push_back(exp.params.tensor(i));
      gs.push_back(grads.Get(exp.params.tensor(i)));
      for (double g : gs.back().values()) norm2 += g * g;
    }
    if (!std::isfinite(norm2)) {
      throw NumericalError("non-finite gradient at step " + std::to_string(step) +
                           "; last good checkpoint: " + result.last_checkpoint.string());
    }
    const double norm = std::sqrt(norm2);
    if (opt.grad_clip > 0.0 && norm > opt.grad_clip) {
      const double k = opt.grad_clip / norm;
      for (Tensor& g : gs) {
        for (double& v : g.mutable_values()) v *= k;
      }
    }
    adam.Step(ps, gs, rate);

    window_loss += loss;
    ++window_count;
    std::string dev_cols = ",";
    if (step % opt.eval_every == 0 || step == opt.steps) {
      MetricsReport dev = Evaluate(exp, cache, "dev", EmbeddingSource::kAux, opt.dev_examples);
      const double score = SelectionScore(config.task, dev);
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g", dev.metrics.at(dev_loss_name),
                    dev.metrics.at(dev_metric_name));
      dev_cols = buf;
      json meta = {{"dev_" + std::string(dev_metric_name), dev.metrics.at(dev_metric_name)},
                   {"dev_" + std::string(dev_loss_name), dev.metrics.at(dev_loss_name)}};
      CheckpointData ck = CaptureCheckpoint(config.resolved, step, exp.params, adam, rng, meta);
      SaveCheckpoint(ck, result.last_checkpoint);
      if (score > result.best_dev_score) {
        result.best_dev_score = score;
        result.best_step = step;
        SaveCheckpoint(ck, result.best_checkpoint);
      }
      std::snprintf(buf, sizeof(buf), "step %ld dev %s %.4f %s %.4f%s", step, dev_loss_name,
                    dev.metrics.at(dev_loss_name), dev_metric_name,
                    dev.metrics.at(dev_metric_name), result.best_step == step ? " *" : "");
      say(buf);
    }
    if (step % opt.log_every == 0 || step == opt.steps) {
      const double mean = window_loss / static_cast<double>(window_count);
      if (first_window) {
        result.initial_loss = mean;
        first_window = false;
      }
      result.final_loss = mean;
      std::snprintf(buf, sizeof(buf), "%ld,%.9g,%.9g,", step, mean, rate);
      train_log += buf + dev_cols + "\n";
      std::snprintf(buf, sizeof(buf), "step %ld loss %.4f lr %.2e |g| %.3f", step, mean, rate,
                    norm);
      say(buf);
      window_loss = 0.0;
      window_count = 0;
    } else if (dev_cols != ",") {
      std::snprintf(buf, sizeof(buf), "%ld,,%.9g,", step, rate);
      train_log += buf + dev_cols + "\n";
    }
  }
  WriteTextFile(out_dir / "train_log.csv", train_log);
  result.steps = opt.steps;
  return result;
}

// ---------------------------------------------------------------------------

namespace {

// Utterances of `speaker` that the split touches, in sorted order.
std::vector<std::string> SplitUtterances(const DatasetSplit& s, int speaker) {
  std::set<std::string> keys;
  for (const auto& e : s.entries) {
    for (const std::string* k : {&e.target_utt, &e.interferer_utt, &e.enrollment_utt}) {
      if (SpeakerFromKey(*k) == speaker) keys.insert(*k);
    }
  }
  return {keys.begin(), keys.end()};
}

std::vector<double> EncodeValues(Experiment& exp, FeatureCache& cache, const std::string& key) {
  NoGradScope no_grad;
  Tensor e = exp.aux->Encode(cache.Enrollment(key));
  return {e.values().begin(), e.values().end()};
}

}  // namespace

AsvResult AsvEvaluate(Experiment& exp, FeatureCache& cache, const AsvOptions& options) {
  if (exp.config.auxnet == AuxKind::kSpeakerCode) {
    throw ContractError(
        "asv-eval: speaker_code embeddings are an identity lookup and trivially separable; "
        "use fbank, mhfa or external");
  }
  TSLAB_REQUIRE(options.enroll_per_speaker >= 1, "asv-eval: enroll_per_speaker must be >= 1");
  const DatasetSplit& s = cache.dataset().split(options.split);
  std::vector<std::pair<int, std::vector<double>>> embs;
  int used = 0;
  for (int spk : s.roster) {
    std::vector<std::string> keys = SplitUtterances(s, spk);
    // Speakers the split touches fewer than k times cannot supply k enrollments.
    if (static_cast<int>(keys.size()) < options.enroll_per_speaker) continue;
    ++used;
    Rng rng(DeriveSeed(options.trial_seed, static_cast<uint64_t>(spk)));
    rng.Shuffle(&keys);
    for (int k = 0; k < options.enroll_per_speaker; ++k) {
      embs.emplace_back(spk, EncodeValues(exp, cache, keys[k]));
    }
  }
  if (used < 2) {
    throw ContractError("asv-eval: fewer than 2 speakers in " + options.split + " have " +
                        std::to_string(options.enroll_per_speaker) + " utterances");
  }
  std::vector<Trial> trials;
  for (size_t i = 0; i < embs.size(); ++i) {
    for (size_t j = i + 1; j < embs.size(); ++j) {
      trials.push_back({embs[i].second, embs[j].second, embs[i].first == embs[j].first});
    }
  }
  AsvResult r;
  r.num_speakers = used;
  for (const auto& t : trials) (t.same_speaker ? r.num_positive : r.num_negative)++;
  r.eer = TrialSetEer(trials);
  return r;
}

// ---------------------------------------------------------------------------

EmbOptRun RunEmbeddingOptimization(Experiment& exp, FeatureCache& cache,
                                   const EmbOptOptions& options,
                                   const std::vector<std::string>& example_ids) {
  TsAsrModel& model = exp.tsasr();
  CheckSplitCompatible(exp.config.auxnet, options.split);
  const DatasetSplit& s = cache.dataset().split(options.split);
  std::vector<size_t> indices;
  if (example_ids.empty()) {
    const size_t n = std::min(s.entries.size(), static_cast<size_t>(options.num_examples));
    for (size_t i = 0; i < n; ++i) indices.push_back(i);
  } else {
    for (const auto& id : example_ids) {
      auto it = std::find_if(s.entries.begin(), s.entries.end(),
                             [&](const MixtureEntry& e) { return e.id == id; });
      if (it == s.entries.end()) {
        throw ContractError("optimize-emb: no example '" + id + "' in split " + options.split);
      }
      indices.push_back(static_cast<size_t>(it - s.entries.begin()));
    }
  }
  TSLAB_REQUIRE(!indices.empty(), "optimize-emb: no examples selected");
  EmbOptConfig cfg = options.config;
  if (cfg.step_size <= 0.0) cfg.step_size = DefaultStepSize(exp.config.auxnet);

  std::vector<std::vector<double>> before;
  for (size_t i = 0; i < exp.params.size(); ++i) {
    auto v = exp.params.tensor(i).values();
    before.emplace_back(v.begin(), v.end());
  }

  EmbOptRun run;
  int improved = 0;
  for (size_t idx : indices) {
    const MixtureEntry& entry = s.entries[idx];
    Tensor feats, clean;
    std::vector<double> e0;
    {
      NoGradScope no_grad;
      feats = model.Features(cache.Mixture(options.split, idx));
      clean = model.Features(cache.CleanTarget(options.split, idx));
      e0 = EncodeValues(exp, cache, entry.enrollment_utt);
    }
    std::vector<int> labels = PseudoLabelFrames(model, clean, Tensor({static_cast<int>(e0.size())}, e0));
    const auto& ref = entry.example.transcript.tokens;
    EmbeddingTrajectory t = OptimizeEmbedding(model, feats, labels, e0, cfg,
                                              std::span<const int>(ref));
    improved += t.scores.back() >= t.scores.front();
    run.reference_lengths.push_back(static_cast<int>(ref.size()));
    run.records.push_back({entry.id, std::move(t)});
  }
  for (size_t i = 0; i < exp.params.size(); ++i) {
    auto v = exp.params.tensor(i).values();
    if (!std::equal(v.begin(), v.end(), before[i].begin(), before[i].end())) {
      run.parameters_unchanged = false;
    }
  }
  run.fraction_score_improved = static_cast<double>(improved) / indices.size();
  const int iters = cfg.iterations;
  auto aggregate = [&](int it) {
    double edits = 0.0, total = 0.0;
    for (size_t k = 0; k < run.records.size(); ++k) {
      edits += run.records[k].trajectory.wer[it] * run.reference_lengths[k];
      total += run.reference_lengths[k];
    }
    run.wer_by_iteration.emplace_back(it, edits / total);
  };
  for (int it = 0; it <= iters; it += 10) aggregate(it);
  if (iters % 10 != 0) aggregate(iters);
  return run;
}

std::string EmbOptWerTable(const EmbOptRun& run) {
  std::string out = "iteration,wer\n";
  char buf[64];
  for (const auto& [it, w] : run.wer_by_iteration) {
    std::snprintf(buf, sizeof(buf), "%d,%.9g\n", it, w);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------

Projection ProjectPca(const std::vector<std::vector<double>>& points) {
  TSLAB_REQUIRE(points.size() >= 3, "project: need at least 3 embeddings");
  const size_t n = points.size(), d = points[0].size();
  TSLAB_REQUIRE(d >= 1, "project: empty embeddings");
  Eigen::MatrixXd x(n, d);
  for (size_t i = 0; i < n; ++i) {
    TSLAB_REQUIRE(points[i].size() == d, "project: embeddings differ in size");
    for (size_t j = 0; j < d; ++j) x(i, j) = points[i][j];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd lambda = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  const double total = lambda.sum();
  Projection p;
  const int k = std::min<int>(2, static_cast<int>(d));
  const double tol = 1e-12 * std::max(lambda(0), 1e-300);
  int rank = 0;
  for (int i = 0; i < lambda.size(); ++i) rank += lambda(i) > tol && lambda(i) > 1e-24;
  p.degenerate = rank < 2;
  p.explained.assign(2, 0.0);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(d, 2);
  for (int c = 0; c < k && c < std::max(rank, 0); ++c) {
    Eigen::VectorXd v = vecs.col(c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;  // deterministic sign
    basis.col(c) = v;
    p.explained[c] = total > 0 ? lambda(c) / total : 0.0;
  }
  const Eigen::MatrixXd y = x * basis;
  p.coords.assign(n, std::vector<double>(2, 0.0));
  for (size_t i = 0; i < n; ++i) {
    p.coords[i][0] = y(i, 0);
    p.coords[i][1] = y(i, 1);
  }
  return p;
}

namespace {

std::vector<LabeledEmbedding> LabelByF0(std::vector<LabeledEmbedding> e, uint64_t corpus_seed) {
  std::vector<double> f0s;
  std::set<int> spk;
  for (const auto& x : e) spk.insert(x.speaker);
  for (int s : spk) f0s.push_back(SampleSpeaker(corpus_seed, s).f0);
  std::sort(f0s.begin(), f0s.end());
  const double median = f0s.empty() ? 0.0
                        : f0s.size() % 2 ? f0s[f0s.size() / 2]
                                         : 0.5 * (f0s[f0s.size() / 2 - 1] + f0s[f0s.size() / 2]);
  for (auto& x : e) x.high_f0 = SampleSpeaker(corpus_seed, x.speaker).f0 > median;
  return e;
}

}  // namespace

std::vector<LabeledEmbedding> CollectEmbeddings(Experiment& exp, FeatureCache& cache,
                                                const std::string& split) {
  CheckSplitCompatible(exp.config.auxnet, split);
  const DatasetSplit& s = cache.dataset().split(split);
  std::vector<LabeledEmbedding> out;
  for (int spk : s.roster) {
    for (const auto& key : SplitUtterances(s, spk)) {
      out.push_back({key, spk, false, EncodeValues(exp, cache, key)});
    }
  }
  return LabelByF0(std::move(out), cache.dataset().config.corpus_seed);
}

std::vector<LabeledEmbedding> ReadEmbeddingCsv(const std::filesystem::path& path,
                                               uint64_t corpus_seed) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot read " + path.string());
  std::vector<LabeledEmbedding> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    LabeledEmbedding e;
    std::getline(ss, e.id, ',');
    while (std::getline(ss, cell, ',')) {
      try {
        e.values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ContractError(path.string() + ":" + std::to_string(lineno) + ": bad number '" +
                            cell + "'");
      }
    }
    try {
      e.speaker = SpeakerFromKey(e.id);
    } catch (const ContractError&) {
      e.speaker = -1;
    }
    out.push_back(std::move(e));
  }
  if (std::all_of(out.begin(), out.end(), [](const auto& e) { return e.speaker >= 0; })) {
    return LabelByF0(std::move(out), corpus_seed);
  }
  return out;
}

void WriteEmbeddingCsv(const std::vector<LabeledEmbedding>& e, const std::filesystem::path& path) {
  std::string out;
  char buf[64];
  for (const auto& x : e) {
    out += x.id;
    for (double v : x.values) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      out += buf;
    }
    out += "\n";
  }
  WriteTextFile(path, out);
}

void WriteProjectionCsv(const std::vector<LabeledEmbedding>& e, const Projection& p,
                        const std::filesystem::path& path) {
  TSLAB_REQUIRE(e.size() == p.coords.size(), "projection: size mismatch");
  std::string out = "id,speaker,f0_group,pc1,pc2\n";
  char buf[96];
  for (size_t i = 0; i < e.size(); ++i) {
    std::snprintf(buf, sizeof(buf), ",%d,%s,%.9g,%.9g\n", e[i].speaker,
                  e[i].high_f0 ? "high" : "low", p.coords[i][0], p.coords[i][1]);
    out += e[i].id + buf;
  }
  WriteTextFile(path, out);
}

std::string ProjectionSvg(const std::vector<LabeledEmbedding>& e, const Projection& p) {
  const double w = 640, h = 520, margin = 40, plot_h = 440;
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  for (const auto& c : p.coords) {
    x0 = std::min(x0, c[0]);
    x1 = std::max(x1, c[0]);
    y0 = std::min(y0, c[1]);
    y1 = std::max(y1, c[1]);
  }
  const double sx = (w - 2 * margin) / std::max(x1 - x0, 1e-12);
  const double sy = (plot_h - 2 * margin) / std::max(y1 - y0, 1e-12);
  std::map<int, int> color_index;
  for (const auto& x : e) color_index.emplace(x.speaker, 0);
  int k = 0;
  for (auto& [s, i] : color_index) i = k++;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n"
                "<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n",
                w, h);
  out += buf;
  for (size_t i = 0; i < e.size(); ++i) {
    const double px = margin + (p.coords[i][0] - x0) * sx;
    const double py = plot_h - margin - (p.coords[i][1] - y0) * sy;
    const double hue = 360.0 * color_index[e[i].speaker] / std::max<size_t>(color_index.size(), 1);
    if (e[i].high_f0) {
      std::snprintf(buf, sizeof(buf),
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"hsl(%.0f,70%%,45%%)\">"
                    "<title>%s</title></circle>\n",
                    px, py, hue, e[i].id.c_str());
    } else {
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"7\" height=\"7\" "
                    "fill=\"hsl(%.0f,70%%,45%%)\"><title>%s</title></rect>\n",
                    px - 3.5, py - 3.5, hue, e[i].id.c_str());
    }
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\">"
                "PCA projection (linear, deterministic): PC1 %.1f%%, PC2 %.1f%% of variance%s"
                "</text>\n",
                margin, plot_h + 20, 100 * p.explained[0], 100 * p.explained[1],
                p.degenerate ? " [degenerate: 1-D layout]" : "");
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"12\">"
                "colour: speaker; circle: f0 above median; square: f0 below median</text>\n",
                margin, plot_h + 40);
  out += buf;
  out += "</svg>\n";
  return out;
}

// ---------------------------------------------------------------------------

DirectoryLock::DirectoryLock(const std::filesystem::path& dir) : path_(dir / ".lock") {
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    throw ContractError("output directory " + dir.string() +
                        " is locked by another command (remove " + path_.string() +
                        " if stale)");
  }
  std::fprintf(f, "%d\n", static_cast<int>(getpid()));
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  std::filesystem::remove(path_, ec);
}

void PrepareOutputDir(const std::filesystem::path& dir, bool force) {
  namespace fs = std::filesystem;
  if (fs::exists(dir)) {
    TSLAB_REQUIRE(fs::is_directory(dir), dir.string() + " exists and is not a directory");
    if (fs::exists(dir / ".lock")) {
      throw ContractError("output directory " + dir.string() + " is locked by another command");
    }
    if (!fs::is_empty(dir)) {
      if (!force) {
        throw ContractError("output directory " + dir.string() +
                            " is not empty (use --force to overwrite)");
      }
      for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(dir);
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << text;
  if (!out) throw ContractError("write failed: " + path.string());
}

}  // namespace tslab
