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

#include "tslab/harness/cli.h"

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "tslab/harness/pipeline.h"

namespace tslab {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out;
  bool force = false;
};

ExperimentConfig ConfigFromFlags(const GlobalFlags& g) {
  ExperimentConfig c = g.config_path.empty() ? DefaultConfig() : LoadConfig(g.config_path);
  if (g.seed) {
    nlohmann::json j = c.resolved;
    j["seed"] = *g.seed;
    c = ResolveConfig(j);
  }
  return c;
}

void Print(const std::string& s) { std::cout << s << "\n" << std::flush; }

fs::path RequireOut(const GlobalFlags& g, const char* cmd) {
  if (g.out.empty()) throw ContractError(std::string(cmd) + ": --out DIR is required");
  return g.out;
}

// Loads a checkpoint and rebuilds its experiment; --config, when given,
// must describe the same model.
std::unique_ptr<Experiment> ExperimentFromCheckpoint(const GlobalFlags& g, const std::string& path) {
  CheckpointData ck = LoadCheckpoint(path);
  if (g.config_path.empty()) return RestoreExperiment(ck);
  ExperimentConfig expected = ConfigFromFlags(g);
  return RestoreExperiment(ck, &expected);
}

int CmdGenData(const GlobalFlags& g) {
  ExperimentConfig c = ConfigFromFlags(g);
  const fs::path out = g.out.empty() ? fs::path(c.data_dir) : fs::path(g.out);
  PrepareOutputDir(out, g.force);
  DirectoryLock lock(out);
  Dataset ds = BuildDataset(c.data);
  WriteDataset(ds, out);
  WriteTextFile(out / "resolved_config.json", DumpJson(c.resolved));
  Print("dataset written to " + out.string() + " (condition " + ConditionName(c.data.condition) +
        ", corpus seed " + std::to_string(c.data.corpus_seed) + ")");
  for (const auto& s : ds.splits) {
    std::string roster;
    for (size_t i = 0; i < s.roster.size(); ++i) roster += (i ? "," : "") + std::to_string(s.roster[i]);
    Print("  " + s.name + ": " + std::to_string(s.entries.size()) + " mixtures, " +
          std::to_string(s.roster.size()) + " speakers [" + roster + "]");
  }
  return 0;
}

int CmdTrain(const GlobalFlags& g, const std::string& data_dir) {
  ExperimentConfig c = ConfigFromFlags(g);
  const fs::path out = RequireOut(g, "train");
  const Dataset ds = LoadDataset(data_dir.empty() ? c.data_dir : data_dir);
  TSLAB_REQUIRE(ds.config.corpus_seed == c.data.corpus_seed &&
                    ds.config.n_train_speakers == c.data.n_train_speakers,
                "train: dataset corpus seed or roster differs from the config's data section");
  PrepareOutputDir(out, g.force);
  DirectoryLock lock(out);
  Print("training " + TaskName(c.task) + " with " + AuxKindName(c.auxnet) + " for " +
        std::to_string(c.train.steps) + " steps");
  TrainResult r = Train(c, ds, out, Print);
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "done: loss %.4f -> %.4f, best dev step %ld, checkpoint %s", r.initial_loss,
                r.final_loss, r.best_step, r.best_checkpoint.c_str());
  Print(buf);
  return 0;
}

int CmdEval(const GlobalFlags& g, const std::string& checkpoint, std::vector<std::string> data_dirs,
            std::vector<std::string> splits, const std::string& embedding) {
  auto exp = ExperimentFromCheckpoint(g, checkpoint);
  if (data_dirs.empty()) data_dirs.push_back(exp->config.data_dir);
  if (splits.empty()) splits = exp->config.eval_splits;
  const EmbeddingSource source = ParseEmbeddingSource(embedding);
  if (source == EmbeddingSource::kAux) {
    for (const auto& s : splits) CheckSplitCompatible(exp->config.auxnet, s);
  }
  std::vector<MetricsReport> reports;
  for (const auto& dir : data_dirs) {
    const Dataset ds = LoadDataset(dir);
    FeatureCache cache(&ds, &exp->upstream);
    for (const auto& s : splits) {
      MetricsReport r = Evaluate(*exp, cache, s, source);
      if (source != EmbeddingSource::kAux) r.task += "[" + embedding + "]";
      reports.push_back(std::move(r));
    }
  }
  std::cout << MetricsTable(reports);
  // Table-style summary: one value per condition, slash separated.
  std::map<std::string, std::vector<std::pair<std::string, double>>> by_metric;
  for (const auto& r : reports) {
    for (const auto& [m, v] : r.metrics) by_metric[r.split + " " + m].emplace_back(r.condition, v);
  }
  for (const auto& [key, vals] : by_metric) {
    if (vals.size() < 2) continue;
    std::string conds, nums;
    char buf[32];
    for (size_t i = 0; i < vals.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.4f", vals[i].second);
      conds += (i ? "/" : "") + vals[i].first;
      nums += (i ? " / " : "") + std::string(buf);
    }
    Print(key + " (" + conds + "): " + nums);
  }
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    DirectoryLock lock(g.out);
    WriteMetricsCsv(reports, fs::path(g.out) / "metrics.csv");
  }
  Print("WER is a token error rate over the synthetic token alphabet.");
  return 0;
}

int CmdAsvEval(const GlobalFlags& g, const std::string& checkpoint, const std::string& data_dir,
               const std::string& split, std::optional<uint64_t> trial_seed) {
  auto exp = ExperimentFromCheckpoint(g, checkpoint);
  AsvOptions opt = exp->config.asv;
  if (!split.empty()) opt.split = split;
  if (trial_seed) opt.trial_seed = *trial_seed;
  const Dataset ds = LoadDataset(data_dir.empty() ? exp->config.data_dir : data_dir);
  FeatureCache cache(&ds, &exp->upstream);
  AsvResult r = AsvEvaluate(*exp, cache, opt);
  char buf[200];
  std::snprintf(buf, sizeof(buf), "asv %s on %s: EER %.4f (%d speakers, %d target / %d non-target trials)",
                AuxKindName(exp->config.auxnet).c_str(), opt.split.c_str(), r.eer,
                r.num_speakers, r.num_positive, r.num_negative);
  Print(buf);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    DirectoryLock lock(g.out);
    MetricsReport m{"asv", opt.split, ConditionName(ds.config.condition), {{"eer", r.eer}},
                    r.num_positive + r.num_negative};
    WriteMetricsCsv({m}, fs::path(g.out) / "asv.csv");
  }
  return 0;
}

struct EmbOptFlags {
  std::string examples;
  std::optional<int> iterations;
  std::optional<double> step_size;
  std::string objective, optimizer, split;
  bool literal_sign = false;
};

int CmdOptimizeEmb(const GlobalFlags& g, const std::string& checkpoint,
                   const std::string& data_dir, const EmbOptFlags& f) {
  auto exp = ExperimentFromCheckpoint(g, checkpoint);
  if (exp->config.task != Task::kTsAsr) {
    throw ContractError("optimize-emb needs a tsasr checkpoint, got " + TaskName(exp->config.task));
  }
  EmbOptOptions opt = exp->config.embopt;
  if (f.iterations) opt.config.iterations = *f.iterations;
  if (f.step_size) opt.config.step_size = *f.step_size;
  if (!f.objective.empty()) opt.config.objective = ParseEmbObjective(f.objective);
  if (!f.optimizer.empty()) opt.config.optimizer = ParseEmbOptimizer(f.optimizer);
  if (!f.split.empty()) opt.split = f.split;
  if (f.literal_sign) opt.config.ascent = false;
  std::vector<std::string> ids;
  if (!f.examples.empty()) {
    std::stringstream ss(f.examples);
    std::string id;
    while (std::getline(ss, id, ',')) ids.push_back(id);
  }
  const Dataset ds = LoadDataset(data_dir.empty() ? exp->config.data_dir : data_dir);
  FeatureCache cache(&ds, &exp->upstream);
  EmbOptRun run = RunEmbeddingOptimization(*exp, cache, opt, ids);
  std::cout << EmbOptWerTable(run);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "examples %zu, score improved on %.1f%%, WER %.4f -> %.4f",
                run.records.size(), 100 * run.fraction_score_improved,
                run.wer_by_iteration.front().second, run.wer_by_iteration.back().second);
  Print(buf);
  if (!g.out.empty()) {
    fs::create_directories(g.out);
    DirectoryLock lock(g.out);
    WriteTrajectoryCsv(run.records, fs::path(g.out) / "trajectory.csv");
    WriteTextFile(fs::path(g.out) / "wer_by_iteration.csv", EmbOptWerTable(run));
  }
  return 0;
}

int CmdProjectEmb(const GlobalFlags& g, const std::string& embeddings,
                  const std::string& checkpoint, const std::string& data_dir,
                  const std::string& split) {
  const fs::path out = RequireOut(g, "project-emb");
  std::vector<LabeledEmbedding> e;
  if (!embeddings.empty()) {
    TSLAB_REQUIRE(checkpoint.empty(), "project-emb: give --embeddings or --checkpoint, not both");
    e = ReadEmbeddingCsv(embeddings, ConfigFromFlags(g).data.corpus_seed);
  } else {
    TSLAB_REQUIRE(!checkpoint.empty(), "project-emb: needs --embeddings CSV or --checkpoint");
    auto exp = ExperimentFromCheckpoint(g, checkpoint);
    const Dataset ds = LoadDataset(data_dir.empty() ? exp->config.data_dir : data_dir);
    FeatureCache cache(&ds, &exp->upstream);
    e = CollectEmbeddings(*exp, cache, split.empty() ? "test-closed" : split);
  }
  std::vector<std::vector<double>> pts;
  for (const auto& x : e) pts.push_back(x.values);
  Projection p = ProjectPca(pts);
  if (p.degenerate) {
    std::cerr << "warning: embeddings span fewer than 2 dimensions; emitting a 1-D layout\n";
  }
  fs::create_directories(out);
  DirectoryLock lock(out);
  WriteProjectionCsv(e, p, out / "projection.csv");
  WriteTextFile(out / "projection.svg", ProjectionSvg(e, p));
  if (embeddings.empty()) WriteEmbeddingCsv(e, out / "embeddings.csv");
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu embeddings; explained variance %.3f, %.3f", e.size(),
                p.explained[0], p.explained[1]);
  Print(buf);
  return 0;
}

}  // namespace

int RunCli(int argc, const char* const* argv) {
  CLI::App app{"Target-speaker toolkit: synthetic data, training, evaluation, embedding analysis"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config_path, "JSON config merged over the defaults");
  app.add_option("--seed", g.seed, "Training seed override");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--force", g.force, "Overwrite a non-empty output directory");
  app.fallthrough();

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");

  std::string data_dir;
  auto* train = app.add_subcommand("train", "Train a task model with an auxiliary network");
  train->add_option("--data", data_dir, "Dataset directory (default: config data_dir)");

  std::string checkpoint, embedding = "aux";
  std::vector<std::string> data_dirs, splits;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint)->required();
  eval->add_option("--data", data_dirs, "Dataset directories (one per condition)");
  eval->add_option("--split", splits, "Splits to evaluate");
  eval->add_option("--embedding", embedding, "aux | ones | zeros | none");

  std::string split;
  std::optional<uint64_t> trial_seed;
  auto* asv = app.add_subcommand("asv-eval", "Speaker verification EER of the auxiliary embeddings");
  asv->add_option("--checkpoint", checkpoint)->required();
  asv->add_option("--data", data_dir);
  asv->add_option("--split", split);
  asv->add_option("--trial-seed", trial_seed);

  EmbOptFlags ef;
  auto* opt = app.add_subcommand("optimize-emb", "Gradient-based embedding refinement");
  opt->add_option("--checkpoint", checkpoint)->required();
  opt->add_option("--data", data_dir);
  opt->add_option("--examples", ef.examples, "Comma-separated example ids");
  opt->add_option("--iterations", ef.iterations);
  opt->add_option("--step-size", ef.step_size);
  opt->add_option("--objective", ef.objective, "score_max | ce_min");
  opt->add_option("--optimizer", ef.optimizer, "adam_direction | raw_gradient");
  opt->add_option("--split", ef.split);
  opt->add_flag("--literal-sign", ef.literal_sign, "Subtract the score gradient");

  std::string embeddings;
  auto* proj = app.add_subcommand("project-emb", "2-D PCA projection of embeddings");
  proj->add_option("--embeddings", embeddings, "CSV of id,v1..vD rows");
  proj->add_option("--checkpoint", checkpoint);
  proj->add_option("--data", data_dir);
  proj->add_option("--split", split);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (gen->parsed()) return CmdGenData(g);
    if (train->parsed()) return CmdTrain(g, data_dir);
    if (eval->parsed()) return CmdEval(g, checkpoint, data_dirs, splits, embedding);
    if (asv->parsed()) return CmdAsvEval(g, checkpoint, data_dir, split, trial_seed);
    if (opt->parsed()) return CmdOptimizeEmb(g, checkpoint, data_dir, ef);
    if (proj->parsed()) return CmdProjectEmb(g, embeddings, checkpoint, data_dir, split);
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

int RunCli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return RunCli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace tslab
