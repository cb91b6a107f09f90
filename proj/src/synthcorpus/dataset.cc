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

#include "tslab/synthcorpus/dataset.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"

namespace tslab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr const char* kSplitNames[] = {"train", "dev", "test-open",
                                       "test-closed"};
constexpr int kMaxInterfererDraws = 200;

std::vector<TokenSpan> AlignmentFromScript(const TokenScript& s) {
  std::vector<TokenSpan> spans;
  int cursor = 0;
  for (size_t i = 0; i < s.tokens.size(); ++i) {
    cursor += s.gaps[i];
    spans.push_back({cursor, cursor + kTokenSamples});
    cursor += kTokenSamples;
  }
  return spans;
}

json SpansToJson(const std::vector<TokenSpan>& spans) {
  json j = json::array();
  for (const auto& s : spans) j.push_back({s.start, s.end});
  return j;
}

std::vector<TokenSpan> SpansFromJson(const json& j) {
  std::vector<TokenSpan> spans;
  for (const auto& s : j) spans.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  return spans;
}

struct SplitPlan {
  std::string name;
  uint64_t tag;
  const std::vector<int>* roster;
  int utt_begin, utt_end;
  int count;
  bool fixed_enrollment;
};

}  // namespace

std::string ConditionName(Condition c) {
  return c == Condition::kClean ? "clean" : "both";
}

Condition ParseCondition(const std::string& s) {
  if (s == "clean") return Condition::kClean;
  if (s == "both") return Condition::kBoth;
  throw ContractError("unknown condition '" + s + "' (expected clean|both)");
}

std::string UtteranceKey(int speaker_id, int utt_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%03d_utt%03d", speaker_id, utt_index);
  return buf;
}

int SpeakerFromKey(const std::string& key) {
  int spk = -1, utt = -1;
  if (std::sscanf(key.c_str(), "spk%d_utt%d", &spk, &utt) != 2 || spk < 0) {
    throw ContractError("malformed utterance key '" + key + "'");
  }
  return spk;
}

const DatasetSplit& Dataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ContractError("dataset has no split '" + name + "'");
}

const UtteranceRecord& Dataset::utterance(const std::string& key) const {
  auto it = utterances.find(key);
  if (it == utterances.end()) {
    throw ContractError("dataset has no utterance '" + key + "'");
  }
  return it->second;
}

UtteranceRecord MakeUtterance(uint64_t corpus_seed, int speaker_id,
                              int utt_index) {
  TSLAB_REQUIRE(utt_index >= 0, "make_utterance: negative utterance index");
  SpeakerProfile prof = SampleSpeaker(corpus_seed, speaker_id);
  Rng rng(DeriveSeed(prof.rng_seed, 0x5554, static_cast<uint64_t>(utt_index)));
  UtteranceRecord rec = RenderUtterance(prof, SampleScript(&rng));
  QuantizePcm16(&rec.wave.samples);
  return rec;
}

Dataset BuildDataset(const DatasetConfig& config) {
  Dataset ds;
  ds.config = config;
  DatasetConfig& c = ds.config;
  TSLAB_REQUIRE(c.n_train > 0 && c.n_dev > 0 && c.n_test > 0,
                "build_dataset: example counts must be positive");
  if (c.train_speakers.empty()) {
    TSLAB_REQUIRE(c.n_train_speakers > 0, "build_dataset: n_train_speakers must be positive");
    for (int i = 0; i < c.n_train_speakers; ++i) c.train_speakers.push_back(i);
  }
  if (c.open_speakers.empty()) {
    TSLAB_REQUIRE(c.n_open_speakers > 0, "build_dataset: n_open_speakers must be positive");
    int base = *std::max_element(c.train_speakers.begin(), c.train_speakers.end()) + 1;
    for (int i = 0; i < c.n_open_speakers; ++i) c.open_speakers.push_back(base + i);
  }
  c.n_train_speakers = static_cast<int>(c.train_speakers.size());
  c.n_open_speakers = static_cast<int>(c.open_speakers.size());
  TSLAB_REQUIRE(c.n_train_speakers >= 2 && c.n_open_speakers >= 2,
                "build_dataset: each roster needs at least two speakers");
  std::set<int> train_set(c.train_speakers.begin(), c.train_speakers.end());
  TSLAB_REQUIRE(train_set.size() == c.train_speakers.size(),
                "build_dataset: duplicate speaker in train roster");
  for (int s : c.open_speakers) {
    TSLAB_REQUIRE(s >= 0, "build_dataset: negative speaker id");
    if (train_set.count(s)) {
      throw ContractError("build_dataset: open roster overlaps train roster at speaker " +
                          std::to_string(s));
    }
  }
  TSLAB_REQUIRE(c.train_utts_per_speaker >= 2 && c.heldout_utts_per_speaker >= 2,
                "build_dataset: need at least two utterances per speaker pool");

  const int tu = c.train_utts_per_speaker, hu = c.heldout_utts_per_speaker;
  const std::vector<SplitPlan> plans = {
      {"train", 1, &c.train_speakers, 0, tu, c.n_train, false},
      {"dev", 2, &c.train_speakers, tu, tu + hu, c.n_dev, true},
      {"test-open", 3, &c.open_speakers, 0, tu, c.n_test, true},
      {"test-closed", 4, &c.train_speakers, tu + hu, tu + 2 * hu, c.n_test, true},
  };

  auto utt = [&](int spk, int idx) -> const UtteranceRecord& {
    const std::string key = UtteranceKey(spk, idx);
    auto it = ds.utterances.find(key);
    if (it == ds.utterances.end()) {
      it = ds.utterances.emplace(key, MakeUtterance(c.corpus_seed, spk, idx)).first;
    }
    return it->second;
  };

  for (const auto& plan : plans) {
    DatasetSplit split;
    split.name = plan.name;
    split.roster = *plan.roster;
    const auto& roster = *plan.roster;
    const int n_utt = plan.utt_end - plan.utt_begin;
    for (int i = 0; i < plan.count; ++i) {
      Rng rng(DeriveSeed(c.corpus_seed, plan.tag, static_cast<uint64_t>(i)));
      MixtureEntry e;
      char id[32];
      std::snprintf(id, sizeof(id), "%s_%05d", plan.name.c_str(), i);
      e.id = id;
      const int tspk = roster[rng.UniformInt(static_cast<int>(roster.size()))];
      const int tidx = plan.utt_begin + rng.UniformInt(n_utt);
      int eidx = plan.utt_begin + rng.UniformInt(n_utt - 1);
      if (eidx >= tidx) ++eidx;
      for (int k = plan.utt_begin; k < plan.utt_end; ++k) {
        if (k != tidx && !plan.fixed_enrollment) {
          e.enrollment_candidates.push_back(UtteranceKey(tspk, k));
          utt(tspk, k);
        }
      }
      const double snr = rng.Uniform(-5.0, 5.0);
      const bool noise = c.condition == Condition::kBoth;
      const uint64_t mix_seed = rng.NextU64();
      e.target_utt = UtteranceKey(tspk, tidx);
      e.enrollment_utt = UtteranceKey(tspk, eidx);
      const UtteranceRecord& target = utt(tspk, tidx);
      const UtteranceRecord& enroll = utt(tspk, eidx);
      // Redraw the interferer until the mixture has frames of both speech
      // classes, so every example carries a full set of p-VAD labels.
      bool ok = false;
      for (int draw = 0; draw < kMaxInterfererDraws && !ok; ++draw) {
        int ispk = roster[rng.UniformInt(static_cast<int>(roster.size()) - 1)];
        if (ispk == tspk) ispk = roster.back();
        const int iidx = plan.utt_begin + rng.UniformInt(n_utt);
        const UtteranceRecord& interf = utt(ispk, iidx);
        e.example = MakeMixture(target, interf, enroll, snr, noise, mix_seed);
        const auto& lab = e.example.vad_labels;
        ok = std::count(lab.begin(), lab.end(), int(VadClass::kTargetSpeech)) > 0 &&
             std::count(lab.begin(), lab.end(), int(VadClass::kOtherSpeech)) > 0;
        e.interferer_utt = UtteranceKey(ispk, iidx);
      }
      if (!ok) {
        throw NumericalError("build_dataset: no interferer gave both speech classes for " + e.id);
      }
      split.entries.push_back(std::move(e));
    }
    ds.splits.push_back(std::move(split));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// WAV

namespace {

void PutU32(std::string* s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s->push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void PutU16(std::string* s, uint16_t v) {
  s->push_back(static_cast<char>(v & 0xFF));
  s->push_back(static_cast<char>(v >> 8));
}
uint32_t GetU32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
uint16_t GetU16(const unsigned char* p) { return p[0] | (p[1] << 8); }

}  // namespace

void WriteWav(const fs::path& path, const Waveform& wave) {
  TSLAB_REQUIRE(wave.sample_rate > 0, "write_wav: bad sample rate");
  const uint32_t data_bytes = static_cast<uint32_t>(wave.size() * 2);
  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  PutU32(&buf, 36 + data_bytes);
  buf += "WAVEfmt ";
  PutU32(&buf, 16);
  PutU16(&buf, 1);  // PCM
  PutU16(&buf, 1);  // mono
  PutU32(&buf, wave.sample_rate);
  PutU32(&buf, wave.sample_rate * 2);
  PutU16(&buf, 2);
  PutU16(&buf, 16);
  buf += "data";
  PutU32(&buf, data_bytes);
  for (double v : wave.samples) {
    double q = std::clamp(std::nearbyint(v * 32768.0), -32768.0, 32767.0);
    PutU16(&buf, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ContractError("write failed: " + path.string());
}

Waveform ReadWav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  auto bad = [&](const std::string& why) {
    return ContractError(path.string() + ": " + why);
  };
  if (raw.size() < 12 || raw.compare(0, 4, "RIFF") || raw.compare(8, 4, "WAVE")) {
    throw bad("not a RIFF/WAVE file");
  }
  Waveform w;
  bool have_fmt = false;
  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const std::string id = raw.substr(pos, 4);
    const uint32_t len = GetU32(p + pos + 4);
    pos += 8;
    if (pos + len > raw.size()) throw bad("truncated chunk " + id);
    if (id == "fmt ") {
      if (len < 16) throw bad("short fmt chunk");
      if (GetU16(p + pos) != 1 || GetU16(p + pos + 2) != 1 || GetU16(p + pos + 14) != 16) {
        throw bad("only PCM16 mono is supported");
      }
      w.sample_rate = static_cast<int>(GetU32(p + pos + 4));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw bad("data before fmt");
      const size_t n = len / 2;
      w.samples.resize(n);
      for (size_t k = 0; k < n; ++k) {
        w.samples[k] = static_cast<int16_t>(GetU16(p + pos + 2 * k)) / 32768.0;
      }
      return w;
    }
    pos += len + (len & 1);
  }
  throw bad("no data chunk");
}

// ---------------------------------------------------------------------------
// Manifests

namespace {

void WriteJson(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

json ReadJson(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
}

}  // namespace

void WriteDataset(const Dataset& ds, const fs::path& dir) {
  const DatasetConfig& c = ds.config;
  fs::create_directories(dir / "utterances");
  json corpus;
  corpus["corpus_seed"] = c.corpus_seed;
  corpus["condition"] = ConditionName(c.condition);
  corpus["n_train"] = c.n_train;
  corpus["n_dev"] = c.n_dev;
  corpus["n_test"] = c.n_test;
  corpus["train_utts_per_speaker"] = c.train_utts_per_speaker;
  corpus["heldout_utts_per_speaker"] = c.heldout_utts_per_speaker;
  corpus["train_speakers"] = c.train_speakers;
  corpus["open_speakers"] = c.open_speakers;
  json profiles = json::array();
  std::vector<int> all(c.train_speakers);
  all.insert(all.end(), c.open_speakers.begin(), c.open_speakers.end());
  for (int s : all) {
    SpeakerProfile p = SampleSpeaker(c.corpus_seed, s);
    profiles.push_back({{"speaker_id", s},
                        {"f0", p.f0},
                        {"harmonic_weights", p.harmonic_weights},
                        {"spectral_tilt", p.spectral_tilt}});
  }
  corpus["speakers"] = profiles;
  json utts = json::object();
  for (const auto& [key, rec] : ds.utterances) {
    WriteWav(dir / "utterances" / (key + ".wav"), rec.wave);
    utts[key] = {{"speaker_id", rec.speaker_id},
                 {"tokens", rec.script.tokens},
                 {"gaps", rec.script.gaps}};
  }
  corpus["utterances"] = utts;
  WriteJson(dir / "corpus.json", corpus);

  for (const auto& split : ds.splits) {
    fs::create_directories(dir / split.name);
    json m;
    m["split"] = split.name;
    m["roster"] = split.roster;
    m["corpus_seed"] = c.corpus_seed;
    m["condition"] = ConditionName(c.condition);
    json ex = json::array();
    for (const auto& e : split.entries) {
      const MixtureExample& x = e.example;
      const std::string base = split.name + "/" + e.id;
      WriteWav(dir / (base + "_mix.wav"), x.mixture);
      WriteWav(dir / (base + "_target.wav"), x.target_clean);
      WriteWav(dir / (base + "_interf.wav"), x.interferer_scaled);
      json j;
      j["id"] = e.id;
      j["mixture"] = base + "_mix.wav";
      j["target"] = base + "_target.wav";
      j["interferer"] = base + "_interf.wav";
      if (x.noise_flag) {
        WriteWav(dir / (base + "_noise.wav"), x.noise);
        j["noise"] = base + "_noise.wav";
      } else {
        j["noise"] = nullptr;
      }
      j["target_utt"] = e.target_utt;
      j["interferer_utt"] = e.interferer_utt;
      j["enrollment_utt"] = e.enrollment_utt;
      j["enrollment"] = "utterances/" + e.enrollment_utt + ".wav";
      j["enrollment_candidates"] = e.enrollment_candidates;
      j["target_speaker_id"] = x.target_speaker_id;
      j["interferer_speaker_id"] = x.interferer_speaker_id;
      j["transcript"] = x.transcript.tokens;
      j["gaps"] = x.transcript.gaps;
      j["target_alignment"] = SpansToJson(x.target_alignment);
      j["interferer_alignment"] = SpansToJson(x.interferer_alignment);
      j["vad_labels"] = x.vad_labels;
      j["snr_db"] = x.snr_db;
      j["noise_flag"] = x.noise_flag;
      ex.push_back(std::move(j));
    }
    m["examples"] = std::move(ex);
    WriteJson(dir / (split.name + ".json"), m);
  }
}

Dataset LoadDataset(const fs::path& dir) {
  Dataset ds;
  const json corpus = ReadJson(dir / "corpus.json");
  try {
    DatasetConfig& c = ds.config;
    c.corpus_seed = corpus.at("corpus_seed").get<uint64_t>();
    c.condition = ParseCondition(corpus.at("condition").get<std::string>());
    c.n_train = corpus.at("n_train");
    c.n_dev = corpus.at("n_dev");
    c.n_test = corpus.at("n_test");
    c.train_utts_per_speaker = corpus.at("train_utts_per_speaker");
    c.heldout_utts_per_speaker = corpus.at("heldout_utts_per_speaker");
    c.train_speakers = corpus.at("train_speakers").get<std::vector<int>>();
    c.open_speakers = corpus.at("open_speakers").get<std::vector<int>>();
    c.n_train_speakers = static_cast<int>(c.train_speakers.size());
    c.n_open_speakers = static_cast<int>(c.open_speakers.size());
    for (const auto& [key, u] : corpus.at("utterances").items()) {
      UtteranceRecord rec;
      rec.speaker_id = u.at("speaker_id");
      rec.script.tokens = u.at("tokens").get<std::vector<int>>();
      rec.script.gaps = u.at("gaps").get<std::vector<int>>();
      ValidateScript(rec.script);
      rec.alignment = AlignmentFromScript(rec.script);
      rec.wave = ReadWav(dir / "utterances" / (key + ".wav"));
      ds.utterances.emplace(key, std::move(rec));
    }
    for (const char* name : kSplitNames) {
      const fs::path mpath = dir / (std::string(name) + ".json");
      if (!fs::exists(mpath)) continue;
      const json m = ReadJson(mpath);
      DatasetSplit split;
      split.name = name;
      split.roster = m.at("roster").get<std::vector<int>>();
      for (const auto& j : m.at("examples")) {
        MixtureEntry e;
        e.id = j.at("id");
        e.target_utt = j.at("target_utt");
        e.interferer_utt = j.at("interferer_utt");
        e.enrollment_utt = j.at("enrollment_utt");
        e.enrollment_candidates =
            j.at("enrollment_candidates").get<std::vector<std::string>>();
        MixtureExample& x = e.example;
        x.mixture = ReadWav(dir / j.at("mixture").get<std::string>());
        x.target_clean = ReadWav(dir / j.at("target").get<std::string>());
        x.interferer_scaled = ReadWav(dir / j.at("interferer").get<std::string>());
        if (j.at("noise").is_null()) {
          x.noise = {std::vector<double>(x.mixture.size(), 0.0), x.mixture.sample_rate};
        } else {
          x.noise = ReadWav(dir / j.at("noise").get<std::string>());
        }
        x.enrollment = ds.utterance(e.enrollment_utt).wave;
        x.target_speaker_id = j.at("target_speaker_id");
        x.interferer_speaker_id = j.at("interferer_speaker_id");
        x.transcript.tokens = j.at("transcript").get<std::vector<int>>();
        x.transcript.gaps = j.at("gaps").get<std::vector<int>>();
        x.target_alignment = SpansFromJson(j.at("target_alignment"));
        x.interferer_alignment = SpansFromJson(j.at("interferer_alignment"));
        x.vad_labels = j.at("vad_labels").get<std::vector<int>>();
        x.snr_db = j.at("snr_db");
        x.noise_flag = j.at("noise_flag");
        split.entries.push_back(std::move(e));
      }
      ds.splits.push_back(std::move(split));
    }
  } catch (const json::exception& e) {
    throw ContractError(dir.string() + ": malformed dataset: " + e.what());
  }
  return ds;
}

}  // namespace tslab
