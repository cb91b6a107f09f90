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

#ifndef TSLAB_FRONTEND_FRONTEND_H_
#define TSLAB_FRONTEND_FRONTEND_H_

#include <complex>
#include <cstdint>
#include <vector>

#include "tslab/gradcore/tensor.h"
#include "tslab/synthcorpus/corpus.h"

namespace tslab {

constexpr int kWindowSamples = 200;  // 25 ms
constexpr int kHopSamples = 80;      // 10 ms
constexpr int kFftSize = 256;
constexpr int kNumBins = kFftSize / 2 + 1;
constexpr double kLogFloor = 1e-10;

// Periodic sqrt-Hann analysis/synthesis window.
const std::vector<double>& SqrtHannWindow();

// Number of full frames: 1 + floor((len - window) / hop).
int NumFrames(int num_samples);

struct Spectrogram {
  int num_frames = 0;
  int num_samples = 0;  // length of the analysed signal
  std::vector<std::complex<double>> bins;  // [num_frames x kNumBins]

  std::complex<double>& at(int t, int f) { return bins[t * kNumBins + f]; }
  const std::complex<double>& at(int t, int f) const {
    return bins[t * kNumBins + f];
  }
};

Spectrogram Stft(const Waveform& wave);

// Weighted overlap-add normalized by the summed squared window, so every
// sample covered by a window with non-negligible weight is reconstructed
// exactly. The output has spec.num_samples samples; samples beyond the last
// frame are zero.
Waveform Istft(const Spectrogram& spec, int sample_rate = kSampleRate);

struct FbankOptions {
  int num_mels = 24;
  double low_hz = 0.0;
  double high_hz = 4000.0;
};

// HTK-mel triangular filters over the one-sided power spectrum,
// [num_mels x kNumBins].
std::vector<double> MelFilterbank(const FbankOptions& opts, int sample_rate);

// Log-mel energies [T x num_mels], natural log with a 1e-10 floor.
Tensor Fbank(const Waveform& wave, const FbankOptions& opts = {});

// Fixed affine map applied to log-mel energies before any learned layer.
Tensor NormalizeFbank(const Tensor& fbank);

struct UpstreamConfig {
  int num_layers = 4;
  int dim = 32;
  int num_mels = 24;
  uint64_t seed = 0xC0FFEE;
};

struct LayerFeatureStack {
  std::vector<Tensor> layers;  // each [T x dim], constant
  // Column l holds layer l flattened row-major: [T*dim x num_layers].
  Tensor flat;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int num_frames() const { return layers.empty() ? 0 : layers[0].dim(0); }
  int dim() const { return layers.empty() ? 0 : layers[0].dim(1); }
};

LayerFeatureStack MakeStack(std::vector<Tensor> layers);

// Frozen random encoder standing in for a pre-trained model: L blocks of
// linear -> tanh -> depthwise conv (kernel 3, same padding).
class ToyUpstream {
 public:
  explicit ToyUpstream(const UpstreamConfig& config = {});

  LayerFeatureStack Forward(const Waveform& wave) const;
  // Same, starting from an already computed (unnormalized) FBANK.
  LayerFeatureStack ForwardFbank(const Tensor& fbank) const;

  const UpstreamConfig& config() const { return config_; }
  // Parameters never require gradients.
  std::vector<Tensor> parameters() const;

 private:
  UpstreamConfig config_;
  std::vector<Tensor> w_, b_, conv_;
};

// sum_l softmax(logits)_l * layer_l, [T x dim].
Tensor WeightedSum(const LayerFeatureStack& stack, const Tensor& logits);

}  // namespace tslab

#endif  // TSLAB_FRONTEND_FRONTEND_H_
