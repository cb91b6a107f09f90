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

#include "tslab/synthcorpus/corpus.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tslab {

namespace {
constexpr double kMinF0 = 90.0;
constexpr double kMaxF0 = 300.0;
constexpr double kGoldenFraction = 0.6180339887498949;
constexpr int kMinEdgeSilence = 400;   // 50 ms
constexpr int kMaxEdgeSilence = 1200;  // 150 ms
}  // namespace

SpeakerProfile SampleSpeaker(uint64_t corpus_seed, int speaker_id) {
  TSLAB_REQUIRE(speaker_id >= 0, "sample_speaker: negative speaker id");
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  p.rng_seed = DeriveSeed(corpus_seed, 0x5350, static_cast<uint64_t>(speaker_id));
  Rng offset_rng(DeriveSeed(corpus_seed, 0x4630));
  const double offset = offset_rng.Uniform();
  double pos = offset + kGoldenFraction * speaker_id;
  pos -= std::floor(pos);
  p.f0 = kMinF0 + (kMaxF0 - kMinF0) * pos;

  Rng rng(p.rng_seed);
  double total = 0.0;
  for (double& w : p.harmonic_weights) total += (w = rng.Uniform(0.2, 1.0));
  for (double& w : p.harmonic_weights) w /= total;
  p.spectral_tilt = rng.Uniform(-12.0, 0.0);
  return p;
}

TokenScript SampleScript(Rng* rng) {
  TokenScript s;
  const int len = kMinScriptLength +
                  rng->UniformInt(kMaxScriptLength - kMinScriptLength + 1);
  s.gaps.push_back(kMinEdgeSilence +
                   rng->UniformInt(kMaxEdgeSilence - kMinEdgeSilence + 1));
  for (int i = 0; i < len; ++i) {
    s.tokens.push_back(rng->UniformInt(kVocabSize));
    if (i + 1 < len) s.gaps.push_back(rng->UniformInt(kMaxGapSamples + 1));
  }
  s.gaps.push_back(kMinEdgeSilence +
                   rng->UniformInt(kMaxEdgeSilence - kMinEdgeSilence + 1));
  return s;
}

void ValidateScript(const TokenScript& script) {
  TSLAB_REQUIRE(!script.tokens.empty(), "token script is empty");
  TSLAB_REQUIRE(script.gaps.size() == script.tokens.size() + 1,
                "token script: need tokens.size() + 1 gaps");
  for (int t : script.tokens) {
    TSLAB_REQUIRE(t >= 0 && t < kVocabSize,
                  "token script: token " + std::to_string(t) + " out of range");
  }
  for (int g : script.gaps) {
    TSLAB_REQUIRE(g >= 0, "token script: negative gap");
  }
}

const std::array<uint8_t, kVocabSize>& TokenHarmonicMasks() {
  // Ten weight-4 codewords of the extended [8,4,4] Hamming code: every pair of
  // tokens differs in at least four harmonics.
  static const std::array<uint8_t, kVocabSize> masks = {
      0b11100001, 0b11010010, 0b11001100, 0b10110100, 0b10101010,
      0b10011001, 0b10000111, 0b01111000, 0b01100110, 0b01010101};
  return masks;
}

UtteranceRecord RenderUtterance(const SpeakerProfile& profile,
                                const TokenScript& script, int sample_rate) {
  ValidateScript(script);
  TSLAB_REQUIRE(sample_rate > 0, "render_utterance: bad sample rate");
  UtteranceRecord rec;
  rec.script = script;
  rec.speaker_id = profile.speaker_id;

  int total = 0;
  for (int g : script.gaps) total += g;
  total += static_cast<int>(script.tokens.size()) * kTokenSamples;
  rec.wave.sample_rate = sample_rate;
  rec.wave.samples.assign(total, 0.0);

  Rng phase_rng(DeriveSeed(profile.rng_seed, 0x5048));
  std::array<double, kNumHarmonics> phase{}, tilt_gain{};
  for (int h = 0; h < kNumHarmonics; ++h) {
    phase[h] = 2.0 * std::numbers::pi * phase_rng.Uniform();
    tilt_gain[h] =
        std::pow(10.0, profile.spectral_tilt * std::log2(h + 1.0) / 20.0);
  }

  const auto& masks = TokenHarmonicMasks();
  int cursor = 0;
  for (size_t i = 0; i < script.tokens.size(); ++i) {
    cursor += script.gaps[i];
    TokenSpan span{cursor, cursor + kTokenSamples};
    rec.alignment.push_back(span);
    const uint8_t mask = masks[script.tokens[i]];
    for (int n = 0; n < kTokenSamples; ++n) {
      double env = 1.0;
      if (n < kRampSamples) {
        env = 0.5 * (1.0 - std::cos(std::numbers::pi * (n + 0.5) / kRampSamples));
      } else if (n >= kTokenSamples - kRampSamples) {
        int k = kTokenSamples - 1 - n;
        env = 0.5 * (1.0 - std::cos(std::numbers::pi * (k + 0.5) / kRampSamples));
      }
      const double t = static_cast<double>(n) / sample_rate;
      double v = 0.0;
      for (int h = 0; h < kNumHarmonics; ++h) {
        if (!(mask & (1u << (kNumHarmonics - 1 - h)))) continue;
        double freq = profile.f0 * (h + 1);
        if (freq >= 0.5 * sample_rate) continue;
        v += profile.harmonic_weights[h] * tilt_gain[h] *
             std::sin(2.0 * std::numbers::pi * freq * t + phase[h]);
      }
      rec.wave.samples[span.start + n] = env * v;
    }
    cursor = span.end;
  }

  double peak = 0.0;
  for (double v : rec.wave.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    for (double& v : rec.wave.samples) v *= 0.5 / peak;
  }
  return rec;
}

void QuantizePcm16(std::vector<double>* samples) {
  for (double& v : *samples) {
    double q = std::nearbyint(v * 32768.0);
    q = std::clamp(q, -32768.0, 32767.0);
    v = q / 32768.0;
  }
}

std::vector<int> DeriveVadLabels(int num_samples,
                                 const std::vector<TokenSpan>& target,
                                 const std::vector<TokenSpan>& interferer,
                                 int hop) {
  TSLAB_REQUIRE(hop > 0 && num_samples >= 0, "derive_vad_labels: bad sizes");
  const int frames = (num_samples + hop - 1) / hop;
  auto activity = [&](const std::vector<TokenSpan>& spans) {
    std::vector<uint8_t> a(num_samples, 0);
    for (const auto& s : spans) {
      TSLAB_REQUIRE(s.start >= 0 && s.start <= s.end,
                    "derive_vad_labels: malformed span");
      for (int n = s.start; n < std::min(s.end, num_samples); ++n) a[n] = 1;
    }
    return a;
  };
  const auto ta = activity(target);
  const auto ia = activity(interferer);
  std::vector<int> labels(frames);
  for (int f = 0; f < frames; ++f) {
    const int b = f * hop, e = std::min(num_samples, b + hop);
    int tn = 0, in = 0;
    for (int n = b; n < e; ++n) {
      tn += ta[n];
      in += ia[n];
    }
    const int len = e - b;
    if (2 * tn >= len) {
      labels[f] = static_cast<int>(VadClass::kTargetSpeech);
    } else if (2 * in >= len) {
      labels[f] = static_cast<int>(VadClass::kOtherSpeech);
    } else {
      labels[f] = static_cast<int>(VadClass::kNonSpeech);
    }
  }
  return labels;
}

namespace {

std::vector<uint8_t> ActiveMask(const std::vector<TokenSpan>& spans, size_t n) {
  std::vector<uint8_t> a(n, 0);
  for (const auto& s : spans) {
    for (int i = s.start; i < s.end && i < static_cast<int>(n); ++i) a[i] = 1;
  }
  return a;
}

// Mean power of each source over the samples where both are active; falls
// back to each source's own active region when they never overlap.
std::pair<double, double> OverlapPowers(const std::vector<double>& t,
                                        const std::vector<TokenSpan>& ts,
                                        const std::vector<double>& i,
                                        const std::vector<TokenSpan>& is) {
  const size_t n = t.size();
  auto ta = ActiveMask(ts, n), ia = ActiveMask(is, n);
  double pt = 0, pi = 0;
  size_t count = 0;
  for (size_t k = 0; k < n; ++k) {
    if (ta[k] && ia[k]) {
      pt += t[k] * t[k];
      pi += i[k] * i[k];
      ++count;
    }
  }
  if (count > 0) return {pt / count, pi / count};
  size_t ct = 0, ci = 0;
  pt = pi = 0;
  for (size_t k = 0; k < n; ++k) {
    if (ta[k]) pt += t[k] * t[k], ++ct;
    if (ia[k]) pi += i[k] * i[k], ++ci;
  }
  return {ct ? pt / ct : 0.0, ci ? pi / ci : 0.0};
}

}  // namespace

MixtureExample MakeMixture(const UtteranceRecord& target,
                           const UtteranceRecord& interferer,
                           const UtteranceRecord& enrollment, double snr_db,
                           bool noise_flag, uint64_t seed) {
  if (enrollment.speaker_id != target.speaker_id) {
    throw ContractError("make_mixture: enrollment speaker " +
                        std::to_string(enrollment.speaker_id) +
                        " differs from target speaker " +
                        std::to_string(target.speaker_id));
  }
  TSLAB_REQUIRE(interferer.speaker_id != target.speaker_id,
                "make_mixture: interferer must be a different speaker");
  TSLAB_REQUIRE(snr_db >= -5.0 && snr_db <= 5.0,
                "make_mixture: snr_db must lie in [-5, 5]");
  TSLAB_REQUIRE(target.wave.sample_rate == interferer.wave.sample_rate,
                "make_mixture: sample rate mismatch");

  MixtureExample ex;
  const size_t n = std::max(target.wave.size(), interferer.wave.size());
  std::vector<double> t(target.wave.samples), i(interferer.wave.samples);
  t.resize(n, 0.0);
  i.resize(n, 0.0);

  auto [pt, pi] = OverlapPowers(t, target.alignment, i, interferer.alignment);
  double gain = 0.0;
  if (pi > 0.0 && pt > 0.0) {
    gain = std::sqrt(pt / (pi * std::pow(10.0, snr_db / 10.0)));
  }
  for (double& v : i) v *= gain;

  std::vector<double> noise(n, 0.0);
  if (noise_flag) {
    double pm = 0.0;
    for (size_t k = 0; k < n; ++k) pm += (t[k] + i[k]) * (t[k] + i[k]);
    pm /= static_cast<double>(n);
    const double sigma = std::sqrt(pm / 10.0);
    Rng rng(DeriveSeed(seed, 0x4E4F));
    for (double& v : noise) v = sigma * rng.Normal();
  }

  double peak = 0.0;
  for (size_t k = 0; k < n; ++k) {
    peak = std::max(peak, std::fabs(t[k] + i[k] + noise[k]));
  }
  if (peak > 0.99) {
    const double g = 0.99 / peak;
    for (size_t k = 0; k < n; ++k) {
      t[k] *= g;
      i[k] *= g;
      noise[k] *= g;
    }
  }
  QuantizePcm16(&t);
  QuantizePcm16(&i);
  QuantizePcm16(&noise);

  const int sr = target.wave.sample_rate;
  ex.mixture.samples.resize(n);
  for (size_t k = 0; k < n; ++k) ex.mixture.samples[k] = t[k] + i[k] + noise[k];
  ex.mixture.sample_rate = sr;
  ex.target_clean = {std::move(t), sr};
  ex.interferer_scaled = {std::move(i), sr};
  ex.noise = {std::move(noise), sr};
  ex.enrollment = enrollment.wave;
  ex.target_speaker_id = target.speaker_id;
  ex.interferer_speaker_id = interferer.speaker_id;
  ex.transcript = target.script;
  ex.target_alignment = target.alignment;
  ex.interferer_alignment = interferer.alignment;
  ex.vad_labels = DeriveVadLabels(static_cast<int>(n), target.alignment,
                                  interferer.alignment);
  ex.snr_db = snr_db;
  ex.noise_flag = noise_flag;
  return ex;
}

double ActiveRegionSnrDb(const MixtureExample& ex) {
  auto [pt, pi] =
      OverlapPowers(ex.target_clean.samples, ex.target_alignment,
                    ex.interferer_scaled.samples, ex.interferer_alignment);
  return 10.0 * std::log10(pt / pi);
}

}  // namespace tslab
