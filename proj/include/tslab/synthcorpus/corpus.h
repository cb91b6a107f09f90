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

#ifndef TSLAB_SYNTHCORPUS_CORPUS_H_
#define TSLAB_SYNTHCORPUS_CORPUS_H_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tslab/common.h"

namespace tslab {

constexpr int kSampleRate = 8000;
constexpr int kNumHarmonics = 8;
// Token alphabet size V; CTC blank is index V.
constexpr int kVocabSize = 10;
constexpr int kTokenSamples = 960;      // 120 ms
constexpr int kMaxGapSamples = 320;     // 40 ms
constexpr int kRampSamples = 80;        // 10 ms raised-cosine on/offset
constexpr int kVadHop = 80;             // 10 ms label frames
constexpr int kMinScriptLength = 5;
constexpr int kMaxScriptLength = 15;

struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  size_t size() const { return samples.size(); }
};

struct SpeakerProfile {
  int speaker_id = 0;
  double f0 = 0.0;  // Hz, [90, 300]
  std::array<double, kNumHarmonics> harmonic_weights{};  // unit sum
  double spectral_tilt = 0.0;  // dB/octave, [-12, 0]
  uint64_t rng_seed = 0;
};

// Deterministic in (corpus_seed, speaker_id). f0 follows a golden-ratio
// sequence over [90, 300] Hz offset by the seed, so nearby ids are far apart.
SpeakerProfile SampleSpeaker(uint64_t corpus_seed, int speaker_id);

struct TokenScript {
  std::vector<int> tokens;
  // gaps[i] is the silence before token i (gaps[0] is the leading silence);
  // gaps.back() is the trailing silence, so gaps.size() == tokens.size() + 1.
  std::vector<int> gaps;
};

// Script with 5..15 tokens, 0..40 ms inter-token gaps and 50..150 ms of
// leading and trailing silence.
TokenScript SampleScript(Rng* rng);
void ValidateScript(const TokenScript& script);

// Binary harmonic mask of a token (bit h set = harmonic h+1 present).
const std::array<uint8_t, kVocabSize>& TokenHarmonicMasks();

struct TokenSpan {
  int start = 0;  // inclusive sample index
  int end = 0;    // exclusive
};

struct UtteranceRecord {
  Waveform wave;
  TokenScript script;
  std::vector<TokenSpan> alignment;
  int speaker_id = 0;
};

UtteranceRecord RenderUtterance(const SpeakerProfile& profile,
                                const TokenScript& script,
                                int sample_rate = kSampleRate);

// Rounds samples onto the PCM16 grid (k / 32768), clipping to [-1, 1).
void QuantizePcm16(std::vector<double>* samples);

enum class VadClass { kNonSpeech = 0, kTargetSpeech = 1, kOtherSpeech = 2 };
constexpr int kNumVadClasses = 3;

// Frame f covers samples [f*hop, (f+1)*hop). A speaker is active in a frame
// when at least half of its samples lie inside one of its spans; target
// activity wins over interferer activity.
std::vector<int> DeriveVadLabels(int num_samples,
                                 const std::vector<TokenSpan>& target,
                                 const std::vector<TokenSpan>& interferer,
                                 int hop = kVadHop);

struct MixtureExample {
  Waveform mixture;
  Waveform target_clean;
  Waveform interferer_scaled;
  Waveform noise;  // all zeros unless noise_flag
  Waveform enrollment;
  int target_speaker_id = 0;
  int interferer_speaker_id = 0;
  TokenScript transcript;
  std::vector<TokenSpan> target_alignment;
  std::vector<TokenSpan> interferer_alignment;
  std::vector<int> vad_labels;
  double snr_db = 0.0;
  bool noise_flag = false;
};

// Pads both sources to the longer length, scales the interferer so the
// target-to-interferer power ratio over the samples where both are active
// equals snr_db, optionally adds white noise 10 dB below the mixture power,
// and quantizes every component onto the PCM16 grid so that the stored
// components sum to the mixture exactly.
MixtureExample MakeMixture(const UtteranceRecord& target,
                           const UtteranceRecord& interferer,
                           const UtteranceRecord& enrollment, double snr_db,
                           bool noise_flag, uint64_t seed);

// 10*log10(P_target / P_interferer) over the region where both are active.
double ActiveRegionSnrDb(const MixtureExample& ex);

}  // namespace tslab

#endif  // TSLAB_SYNTHCORPUS_CORPUS_H_
