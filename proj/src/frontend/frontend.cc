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

#include "tslab/frontend/frontend.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "tslab/gradcore/ops.h"
#include "tslab/gradcore/optim.h"

namespace tslab {

namespace {

// FFTW plans are made with FFTW_ESTIMATE, which picks the algorithm without
// timing and therefore gives identical results on every run.
class RealFft {
 public:
  RealFft() {
    in_ = fftw_alloc_real(kFftSize);
    out_ = fftw_alloc_complex(kNumBins);
    fwd_ = fftw_plan_dft_r2c_1d(kFftSize, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(kFftSize, out_, in_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* in() { return in_; }
  fftw_complex* out() { return out_; }
  void Forward() { fftw_execute(fwd_); }
  // Unnormalized: returns kFftSize * x.
  void Inverse() { fftw_execute(inv_); }

 private:
  double* in_;
  fftw_complex* out_;
  fftw_plan fwd_, inv_;
};

RealFft& Fft() {
  static thread_local RealFft fft;
  return fft;
}

void CheckLength(int n, const char* op) {
  if (n < kWindowSamples) {
    throw ContractError(std::string(op) + ": input has " + std::to_string(n) +
                        " samples, need at least " +
                        std::to_string(kWindowSamples));
  }
}

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

const std::vector<double>& SqrtHannWindow() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kWindowSamples);
    for (int n = 0; n < kWindowSamples; ++n) {
      v[n] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n /
                                            kWindowSamples));
    }
    return v;
  }();
  return w;
}

int NumFrames(int num_samples) {
  if (num_samples < kWindowSamples) return 0;
  return 1 + (num_samples - kWindowSamples) / kHopSamples;
}

Spectrogram Stft(const Waveform& wave) {
  const int n = static_cast<int>(wave.size());
  CheckLength(n, "stft");
  Spectrogram spec;
  spec.num_samples = n;
  spec.num_frames = NumFrames(n);
  spec.bins.resize(static_cast<size_t>(spec.num_frames) * kNumBins);
  const auto& win = SqrtHannWindow();
  RealFft& fft = Fft();
  for (int t = 0; t < spec.num_frames; ++t) {
    const double* x = wave.samples.data() + t * kHopSamples;
    for (int k = 0; k < kWindowSamples; ++k) fft.in()[k] = x[k] * win[k];
    for (int k = kWindowSamples; k < kFftSize; ++k) fft.in()[k] = 0.0;
    fft.Forward();
    for (int f = 0; f < kNumBins; ++f) {
      spec.at(t, f) = {fft.out()[f][0], fft.out()[f][1]};
    }
  }
  return spec;
}

Waveform Istft(const Spectrogram& spec, int sample_rate) {
  TSLAB_REQUIRE(spec.num_frames >= 1, "istft: empty spectrogram");
  TSLAB_REQUIRE(spec.bins.size() == static_cast<size_t>(spec.num_frames) * kNumBins,
                "istft: bin count does not match frame count");
  const int covered = (spec.num_frames - 1) * kHopSamples + kWindowSamples;
  TSLAB_REQUIRE(spec.num_samples >= covered, "istft: num_samples shorter than frames");
  const auto& win = SqrtHannWindow();
  std::vector<double> acc(covered, 0.0), norm(covered, 0.0);
  RealFft& fft = Fft();
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int f = 0; f < kNumBins; ++f) {
      fft.out()[f][0] = spec.at(t, f).real();
      fft.out()[f][1] = spec.at(t, f).imag();
    }
    fft.Inverse();
    const int base = t * kHopSamples;
    for (int k = 0; k < kWindowSamples; ++k) {
      acc[base + k] += win[k] * fft.in()[k] / kFftSize;
      norm[base + k] += win[k] * win[k];
    }
  }
  Waveform out;
  out.sample_rate = sample_rate;
  out.samples.assign(spec.num_samples, 0.0);
  for (int n = 0; n < covered; ++n) {
    if (norm[n] > 1e-8) out.samples[n] = acc[n] / norm[n];
  }
  return out;
}

std::vector<double> MelFilterbank(const FbankOptions& opts, int sample_rate) {
  TSLAB_REQUIRE(opts.num_mels >= 1, "fbank: num_mels must be positive");
  TSLAB_REQUIRE(opts.low_hz >= 0 && opts.high_hz > opts.low_hz &&
                    opts.high_hz <= 0.5 * sample_rate,
                "fbank: bad frequency range");
  const int m = opts.num_mels;
  const double lo = HzToMel(opts.low_hz), hi = HzToMel(opts.high_hz);
  std::vector<double> edges(m + 2);
  for (int i = 0; i < m + 2; ++i) edges[i] = MelToHz(lo + (hi - lo) * i / (m + 1));
  std::vector<double> fb(static_cast<size_t>(m) * kNumBins, 0.0);
  for (int i = 0; i < m; ++i) {
    const double l = edges[i], c = edges[i + 1], r = edges[i + 2];
    for (int k = 0; k < kNumBins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / kFftSize;
      double w = 0.0;
      if (hz > l && hz <= c) {
        w = (hz - l) / (c - l);
      } else if (hz > c && hz < r) {
        w = (r - hz) / (r - c);
      }
      fb[i * kNumBins + k] = w;
    }
  }
  return fb;
}

Tensor Fbank(const Waveform& wave, const FbankOptions& opts) {
  const int n = static_cast<int>(wave.size());
  CheckLength(n, "fbank");
  const std::vector<double> fb = MelFilterbank(opts, wave.sample_rate);
  const Spectrogram spec = Stft(wave);
  const int m = opts.num_mels;
  std::vector<double> out(static_cast<size_t>(spec.num_frames) * m);
  std::vector<double> power(kNumBins);
  for (int t = 0; t < spec.num_frames; ++t) {
    for (int f = 0; f < kNumBins; ++f) power[f] = std::norm(spec.at(t, f));
    for (int i = 0; i < m; ++i) {
      double e = 0.0;
      for (int f = 0; f < kNumBins; ++f) e += fb[i * kNumBins + f] * power[f];
      out[t * m + i] = std::log(std::max(e, kLogFloor));
    }
  }
  return Tensor({spec.num_frames, m}, std::move(out));
}

Tensor NormalizeFbank(const Tensor& fbank) {
  std::vector<double> v(fbank.values().begin(), fbank.values().end());
  for (double& x : v) x = (x + 8.0) / 8.0;
  return Tensor(fbank.shape(), std::move(v));
}

LayerFeatureStack MakeStack(std::vector<Tensor> layers) {
  TSLAB_REQUIRE(!layers.empty(), "layer stack is empty");
  LayerFeatureStack s;
  const Shape shape = layers[0].shape();
  TSLAB_REQUIRE(shape.size() == 2, "layer features must be [T x D]");
  const int nl = static_cast<int>(layers.size());
  const size_t td = layers[0].size();
  std::vector<double> flat(td * nl);
  for (int l = 0; l < nl; ++l) {
    TSLAB_REQUIRE(layers[l].shape() == shape,
                  "layer " + std::to_string(l) + " has shape " +
                      ShapeString(layers[l].shape()) + ", expected " +
                      ShapeString(shape));
    for (size_t i = 0; i < td; ++i) flat[i * nl + l] = layers[l][i];
  }
  s.flat = Tensor({static_cast<int>(td), nl}, std::move(flat));
  s.layers = std::move(layers);
  return s;
}

ToyUpstream::ToyUpstream(const UpstreamConfig& config) : config_(config) {
  TSLAB_REQUIRE(config.num_layers >= 1 && config.dim >= 1 && config.num_mels >= 1,
                "toy_upstream: sizes must be positive");
  Rng rng(config.seed);
  int in = config.num_mels;
  for (int l = 0; l < config.num_layers; ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    w_.push_back(Tensor({in, config.dim}, RandomNormal(&rng, in * config.dim, scale)));
    b_.push_back(Tensor({config.dim}, RandomNormal(&rng, config.dim, 0.1)));
    // Smoothing kernel with random perturbation keeps every channel alive.
    std::vector<double> k = RandomNormal(&rng, 3 * config.dim, 0.2);
    for (int c = 0; c < config.dim; ++c) {
      k[3 * c] = RoundToFloat(k[3 * c] + 0.25);
      k[3 * c + 1] = RoundToFloat(k[3 * c + 1] + 0.5);
      k[3 * c + 2] = RoundToFloat(k[3 * c + 2] + 0.25);
    }
    conv_.push_back(Tensor({config.dim, 3}, std::move(k)));
    in = config.dim;
  }
}

LayerFeatureStack ToyUpstream::Forward(const Waveform& wave) const {
  return ForwardFbank(Fbank(wave, FbankOptions{config_.num_mels}));
}

LayerFeatureStack ToyUpstream::ForwardFbank(const Tensor& fbank) const {
  TSLAB_REQUIRE(fbank.rank() == 2 && fbank.dim(1) == config_.num_mels,
                "toy_upstream: expected [T x " + std::to_string(config_.num_mels) +
                    "] fbank, got " + ShapeString(fbank.shape()));
  NoGradScope no_grad;
  std::vector<Tensor> layers;
  Tensor h = NormalizeFbank(fbank);
  for (int l = 0; l < config_.num_layers; ++l) {
    h = ops::DepthwiseConv1d(ops::Tanh(ops::Add(ops::MatMul(h, w_[l]), b_[l])),
                             conv_[l]);
    layers.push_back(h.Detach());
  }
  return MakeStack(std::move(layers));
}

std::vector<Tensor> ToyUpstream::parameters() const {
  std::vector<Tensor> p;
  for (int l = 0; l < config_.num_layers; ++l) {
    p.push_back(w_[l]);
    p.push_back(b_[l]);
    p.push_back(conv_[l]);
  }
  return p;
}

Tensor WeightedSum(const LayerFeatureStack& stack, const Tensor& logits) {
  TSLAB_REQUIRE(stack.num_layers() >= 1, "weighted_sum: empty stack");
  if (logits.size() != static_cast<size_t>(stack.num_layers())) {
    throw ContractError("weighted_sum: " + std::to_string(logits.size()) +
                        " layer weights for " + std::to_string(stack.num_layers()) +
                        " layers");
  }
  Tensor w = ops::Reshape(ops::Softmax(ops::Reshape(logits, {stack.num_layers()})),
                          {stack.num_layers(), 1});
  return ops::Reshape(ops::MatMul(stack.flat, w),
                      {stack.num_frames(), stack.dim()});
}

}  // namespace tslab
