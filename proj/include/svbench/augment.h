// Copyright (c) 2026 The svbench Authors
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

#ifndef SVBENCH_AUGMENT_H_
#define SVBENCH_AUGMENT_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svbench/datamodel.h"
#include "svbench/losses.h"
#include "svbench/random.h"

namespace svbench {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class NoiseType { kBabble, kNoise, kMusic, kReverb };

const char* NoiseTypeName(NoiseType type);
NoiseType ParseNoiseType(const std::string& name);

struct AugmentPolicy {
  std::vector<double> speed_ratios{0.9, 1.0, 1.1};
  double noise_probability = 0.6;
  std::vector<NoiseType> noise_types{NoiseType::kBabble, NoiseType::kNoise,
                                     NoiseType::kMusic, NoiseType::kReverb};
  bool relabel_on_speed = true;
  // Source directories per noise type (WAV files). Only the CLI pipeline
  // reads these.
  std::map<NoiseType, std::string> noise_dirs;
  // SNR ranges in dB for additive types.
  std::map<NoiseType, std::pair<double, double>> snr_db{
      {NoiseType::kBabble, {13.0, 20.0}},
      {NoiseType::kNoise, {0.0, 15.0}},
      {NoiseType::kMusic, {5.0, 15.0}}};
};

// Throws ParamError unless 1.0 is among the speed ratios, the probability
// lies in [0, 1] and noise types are present when noise is possible.
void ValidatePolicy(const AugmentPolicy& policy);

// Keys: speed_ratios, noise_probability, noise_types, relabel_on_speed,
// noise_dir.<type>, snr.<type> (lo,hi).
AugmentPolicy ParsePolicy(const std::map<std::string, std::string>& kv);

struct AugmentDecision {
  double speed_ratio = 1.0;
  std::optional<NoiseType> noise;

  bool operator==(const AugmentDecision&) const = default;
};

AugmentDecision SampleAugmentation(const AugmentPolicy& policy, Rng& rng);

// Speaker label of a speed-perturbed copy: "<speaker>#sp<ratio>" for
// ratio != 1 when relabeling, else the speaker unchanged.
std::string PerturbedSpeakerId(const std::string& speaker, double ratio,
                               bool relabel);

// Bandlimited (Kaiser-windowed sinc) evaluation of the signal at fractional
// sample positions `start + i * step`, i in [0, count). The low-pass cutoff
// is min(1, 1 / step) of Nyquist.
std::vector<double> SincResample(const std::vector<double>& x, double step,
                                 size_t count);

// Resampling-style speed change: length round(n / ratio), every frequency
// multiplied by ratio, sample rate unchanged. ratio in [0.5, 2].
Waveform PerturbSpeedPitch(const Waveform& w, double ratio);

// WSOLA time-scale modification: length round(n / ratio), pitch kept.
// ratio 1 returns the input unchanged.
Waveform PerturbTempo(const Waveform& w, double ratio);

// Changes the sample rate, keeping duration and pitch.
Waveform Resample(const Waveform& w, int target_rate);

struct MixResult {
  Waveform mixed;
  double noise_gain = 0.0;  // factor applied to the looped noise
  size_t clipped = 0;       // samples clipped to [-1, 1]
};

// Loops or crops noise to the signal length and scales it so that the
// full-length power ratio is snr_db. Throws DegenerateSignalError for a
// silent signal, DegenerateNoiseError for silent noise and ParamError for a
// sample-rate mismatch.
MixResult MixNoise(const Waveform& w, const Waveform& noise, double snr_db);

// Noise looped/cropped to `length` samples.
std::vector<double> LoopToLength(const std::vector<double>& noise, size_t length);

// Full linear convolution truncated to len(x).
std::vector<double> ConvolveTruncated(const std::vector<double>& x,
                                      const std::vector<double>& h);

// Convolves with the room response, truncates to the input length and scales
// the result back to the input's peak level. Throws DegenerateNoiseError for
// an all-zero rir.
Waveform ApplyReverb(const Waveform& w, const Waveform& rir);

struct FbankConfig {
  int n_mels = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  int fft_size = 512;
  double preemphasis = 0.97;
  double low_freq_hz = 20.0;
  double high_freq_hz = 0.0;  // <= 0 means Nyquist
  double log_floor = 1e-10;
  bool mean_normalize = true;
};

double HzToMel(double hz);  // 1127 ln(1 + hz / 700)
double MelToHz(double mel);

// Center frequency (Hz) of every mel filter for the given config and rate.
std::vector<double> MelCenterFrequencies(const FbankConfig& config,
                                         int sample_rate);

// Log mel filterbank, n_mels x frames. Frames = floor((n - L) / S) + 1 for
// frame length L and shift S in samples. Throws InputTooShortError when the
// input is shorter than one frame.
Matrix Fbank(const Waveform& w, const FbankConfig& config);

// Groups utterances shorter than short_threshold_s by (speaker, genre) and
// concatenates each group greedily in manifest order until it reaches
// min_out_s. Composite rows take the "+"-joined utt ids and "|"-joined paths
// of their parts. A group's leftover is emitted as one final composite.
UtteranceManifest ConcatShortUtterances(const UtteranceManifest& manifest,
                                        double min_out_s = 5.0,
                                        double short_threshold_s = 2.0);

}  // namespace svbench

#endif  // SVBENCH_AUGMENT_H_
