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

#include "svbench/augment.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>

#include "svbench/error.h"

namespace svbench {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSincZeroCrossings = 32;
constexpr double kKaiserBeta = 8.6;

std::vector<std::string> SplitComma(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t b = item.find_first_not_of(" \t");
    size_t e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

bool ParseBool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw FormatError("expected a boolean, got '" + s + "'");
}

void CheckRatio(double ratio) {
  if (!(ratio >= 0.5 && ratio <= 2.0))
    throw ParamError("perturbation ratio " + FormatDouble(ratio) +
                     " outside [0.5, 2]");
}

double Power(const std::vector<double>& x) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return x.empty() ? 0.0 : ss / static_cast<double>(x.size());
}

// FFTW planning is not thread-safe; execution is.
std::mutex& FftwPlannerMutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_ = fftw_alloc_real(static_cast<size_t>(n));
    out_ = fftw_alloc_complex(static_cast<size_t>(n / 2 + 1));
    std::lock_guard<std::mutex> lock(FftwPlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lock(FftwPlannerMutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  // Power spectrum of the current input, bins 0..n/2.
  void PowerSpectrum(std::vector<double>& power) {
    fftw_execute(plan_);
    power.resize(static_cast<size_t>(n_ / 2 + 1));
    for (int k = 0; k <= n_ / 2; ++k)
      power[static_cast<size_t>(k)] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
  }

 private:
  int n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace

const char* NoiseTypeName(NoiseType type) {
  switch (type) {
    case NoiseType::kBabble: return "babble";
    case NoiseType::kNoise: return "noise";
    case NoiseType::kMusic: return "music";
    case NoiseType::kReverb: return "reverb";
  }
  return "?";
}

NoiseType ParseNoiseType(const std::string& name) {
  for (NoiseType t : {NoiseType::kBabble, NoiseType::kNoise, NoiseType::kMusic,
                      NoiseType::kReverb})
    if (name == NoiseTypeName(t)) return t;
  if (name == "reverberation") return NoiseType::kReverb;
  throw FormatError("unknown noise type '" + name + "'");
}

void ValidatePolicy(const AugmentPolicy& policy) {
  if (std::find(policy.speed_ratios.begin(), policy.speed_ratios.end(), 1.0) ==
      policy.speed_ratios.end())
    throw ParamError("speed ratios must include 1.0");
  for (double r : policy.speed_ratios) CheckRatio(r);
  if (!(policy.noise_probability >= 0.0 && policy.noise_probability <= 1.0))
    throw ParamError("noise probability must lie in [0, 1]");
  if (policy.noise_probability > 0.0 && policy.noise_types.empty())
    throw ParamError("noise probability is positive but no noise types given");
}

AugmentPolicy ParsePolicy(const std::map<std::string, std::string>& kv) {
  AugmentPolicy p;
  for (const auto& [key, value] : kv) {
    if (key == "speed_ratios") {
      p.speed_ratios.clear();
      for (const std::string& r : SplitComma(value))
        p.speed_ratios.push_back(ParseDouble(r));
    } else if (key == "noise_probability") {
      p.noise_probability = ParseDouble(value);
    } else if (key == "noise_types") {
      p.noise_types.clear();
      for (const std::string& t : SplitComma(value))
        p.noise_types.push_back(ParseNoiseType(t));
    } else if (key == "relabel_on_speed") {
      p.relabel_on_speed = ParseBool(value);
    } else if (key.rfind("noise_dir.", 0) == 0) {
      p.noise_dirs[ParseNoiseType(key.substr(10))] = value;
    } else if (key.rfind("snr.", 0) == 0) {
      const auto range = SplitComma(value);
      if (range.size() != 2) throw FormatError("snr range needs lo,hi");
      p.snr_db[ParseNoiseType(key.substr(4))] = {ParseDouble(range[0]),
                                                 ParseDouble(range[1])};
    } else {
      throw FormatError("unknown policy key '" + key + "'");
    }
  }
  ValidatePolicy(p);
  return p;
}

AugmentDecision SampleAugmentation(const AugmentPolicy& policy, Rng& rng) {
  AugmentDecision d;
  d.speed_ratio = policy.speed_ratios[UniformIndex(rng, policy.speed_ratios.size())];
  if (UniformUnit(rng) < policy.noise_probability)
    d.noise = policy.noise_types[UniformIndex(rng, policy.noise_types.size())];
  return d;
}

std::string PerturbedSpeakerId(const std::string& speaker, double ratio,
                               bool relabel) {
  if (!relabel || ratio == 1.0) return speaker;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", ratio);
  return speaker + "#sp" + buf;
}

std::vector<double> SincResample(const std::vector<double>& x, double step,
                                 size_t count) {
  const double cutoff = std::min(1.0, 1.0 / step);
  const int half = static_cast<int>(std::ceil(kSincZeroCrossings / cutoff));
  const double i0_beta = std::cyl_bessel_i(0.0, kKaiserBeta);
  const long n = static_cast<long>(x.size());
  std::vector<double> out(count, 0.0);
  for (size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) * step;
    const long base = static_cast<long>(std::floor(t));
    double acc = 0.0;
    for (long k = std::max(0L, base - half + 1); k <= std::min(n - 1, base + half); ++k) {
      const double u = t - static_cast<double>(k);
      const double r = u / half;
      if (std::abs(r) >= 1.0) continue;
      const double arg = kPi * cutoff * u;
      const double sinc = arg == 0.0 ? 1.0 : std::sin(arg) / arg;
      const double win =
          std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      acc += x[static_cast<size_t>(k)] * cutoff * sinc * win;
    }
    out[i] = acc;
  }
  return out;
}

Waveform PerturbSpeedPitch(const Waveform& w, double ratio) {
  CheckRatio(ratio);
  if (w.samples.empty()) throw InputTooShortError("empty waveform");
  const size_t count = std::max<size_t>(
      1, static_cast<size_t>(std::llround(static_cast<double>(w.samples.size()) / ratio)));
  return {SincResample(w.samples, ratio, count), w.sample_rate};
}

Waveform Resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ParamError("sample rate must be positive");
  if (target_rate == w.sample_rate) return w;
  const double step = static_cast<double>(w.sample_rate) / target_rate;
  const size_t count = std::max<size_t>(
      1, static_cast<size_t>(std::llround(static_cast<double>(w.samples.size()) / step)));
  return {SincResample(w.samples, step, count), target_rate};
}

Waveform PerturbTempo(const Waveform& w, double ratio) {
  CheckRatio(ratio);
  if (w.samples.empty()) throw InputTooShortError("empty waveform");
  if (ratio == 1.0) return w;

  const std::vector<double>& x = w.samples;
  const long n = static_cast<long>(x.size());
  const long frame = std::max<long>(4, 2 * std::lround(0.010 * w.sample_rate));
  const long hop_out = frame / 2;
  const double hop_in = hop_out * ratio;
  const long tolerance = hop_out / 2;
  const long out_len = std::max<long>(1, std::lround(static_cast<double>(n) / ratio));
  const long frames = out_len / hop_out + 2;

  auto at = [&](long i) { return i >= 0 && i < n ? x[static_cast<size_t>(i)] : 0.0; };
  std::vector<double> window(static_cast<size_t>(frame));
  for (long i = 0; i < frame; ++i)
    window[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / frame);

  const size_t buf_len = static_cast<size_t>(frames * hop_out + frame);
  std::vector<double> out(buf_len, 0.0), weight(buf_len, 0.0);
  long prev = 0;
  for (long m = 0; m < frames; ++m) {
    long pos = 0;
    if (m > 0) {
      // Pick the input offset near the nominal position whose segment best
      // continues the previously copied one.
      const long nominal = std::lround(m * hop_in);
      const long natural = prev + hop_out;
      double best = -std::numeric_limits<double>::infinity();
      pos = nominal;
      for (long d = -tolerance; d <= tolerance; ++d) {
        const long c = nominal + d;
        if (c < 0) continue;
        double corr = 0.0;
        for (long i = 0; i < frame; ++i) corr += at(natural + i) * at(c + i);
        if (corr > best) {
          best = corr;
          pos = c;
        }
      }
    }
    const long dst = m * hop_out;
    for (long i = 0; i < frame; ++i) {
      const double wv = window[static_cast<size_t>(i)];
      out[static_cast<size_t>(dst + i)] += wv * at(pos + i);
      weight[static_cast<size_t>(dst + i)] += wv;
    }
    prev = pos;
  }
  Waveform result{std::vector<double>(static_cast<size_t>(out_len)), w.sample_rate};
  for (long i = 0; i < out_len; ++i) {
    const double wt = weight[static_cast<size_t>(i)];
    result.samples[static_cast<size_t>(i)] = wt > 1e-9 ? out[static_cast<size_t>(i)] / wt : 0.0;
  }
  return result;
}

std::vector<double> LoopToLength(const std::vector<double>& noise, size_t length) {
  if (noise.empty()) throw DegenerateNoiseError("empty noise");
  std::vector<double> out(length);
  for (size_t i = 0; i < length; ++i) out[i] = noise[i % noise.size()];
  return out;
}

MixResult MixNoise(const Waveform& w, const Waveform& noise, double snr_db) {
  if (w.sample_rate != noise.sample_rate)
    throw ParamError("signal and noise sample rates differ");
  if (!std::isfinite(snr_db)) throw ParamError("snr must be finite");
  const double ps = Power(w.samples);
  if (!(ps > 0.0)) throw DegenerateSignalError("signal has zero power");
  const std::vector<double> looped = LoopToLength(noise.samples, w.samples.size());
  const double pn = Power(looped);
  if (!(pn > 0.0)) throw DegenerateNoiseError("noise has zero power");

  MixResult r;
  r.noise_gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  r.mixed.sample_rate = w.sample_rate;
  r.mixed.samples.resize(w.samples.size());
  for (size_t i = 0; i < w.samples.size(); ++i) {
    double v = w.samples[i] + r.noise_gain * looped[i];
    if (v > 1.0 || v < -1.0) {
      v = std::clamp(v, -1.0, 1.0);
      ++r.clipped;
    }
    r.mixed.samples[i] = v;
  }
  return r;
}

std::vector<double> ConvolveTruncated(const std::vector<double>& x,
                                      const std::vector<double>& h) {
  std::vector<double> y(x.size(), 0.0);
  for (size_t k = 0; k < h.size() && k < x.size(); ++k) {
    const double hk = h[k];
    if (hk == 0.0) continue;
    for (size_t i = k; i < x.size(); ++i) y[i] += hk * x[i - k];
  }
  return y;
}

Waveform ApplyReverb(const Waveform& w, const Waveform& rir) {
  if (w.sample_rate != rir.sample_rate)
    throw ParamError("signal and rir sample rates differ");
  if (rir.samples.empty() ||
      std::all_of(rir.samples.begin(), rir.samples.end(),
                  [](double v) { return v == 0.0; }))
    throw DegenerateNoiseError("room impulse response is all zero");
  Waveform out{ConvolveTruncated(w.samples, rir.samples), w.sample_rate};
  double peak_in = 0.0, peak_out = 0.0;
  for (double v : w.samples) peak_in = std::max(peak_in, std::abs(v));
  for (double v : out.samples) peak_out = std::max(peak_out, std::abs(v));
  if (peak_out > 0.0 && peak_in > 0.0) {
    const double g = peak_in / peak_out;
    for (double& v : out.samples) v *= g;
  }
  return out;
}

double HzToMel(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

namespace {

struct FbankGeometry {
  long frame_len;
  long frame_shift;
  double low_mel;
  double mel_step;
};

FbankGeometry Geometry(const FbankConfig& c, int sample_rate) {
  if (sample_rate <= 0) throw ParamError("sample rate must be positive");
  if (c.n_mels < 1 || c.n_mels > c.fft_size / 2)
    throw ParamError("n_mels must lie in [1, fft_size / 2]");
  FbankGeometry g;
  g.frame_len = std::lround(sample_rate * c.frame_length_ms / 1000.0);
  g.frame_shift = std::lround(sample_rate * c.frame_shift_ms / 1000.0);
  if (g.frame_len < 2 || g.frame_shift < 1)
    throw ParamError("frame length/shift too small");
  if (c.fft_size < g.frame_len)
    throw ParamError("fft_size shorter than the frame length");
  const double high = c.high_freq_hz > 0.0 ? c.high_freq_hz : sample_rate / 2.0;
  if (!(c.low_freq_hz >= 0.0 && c.low_freq_hz < high))
    throw ParamError("invalid mel frequency range");
  g.low_mel = HzToMel(c.low_freq_hz);
  g.mel_step = (HzToMel(high) - g.low_mel) / (c.n_mels + 1);
  return g;
}

}  // namespace

std::vector<double> MelCenterFrequencies(const FbankConfig& config,
                                         int sample_rate) {
  const FbankGeometry g = Geometry(config, sample_rate);
  std::vector<double> centers;
  for (int m = 0; m < config.n_mels; ++m)
    centers.push_back(MelToHz(g.low_mel + (m + 1) * g.mel_step));
  return centers;
}

Matrix Fbank(const Waveform& w, const FbankConfig& config) {
  const FbankGeometry g = Geometry(config, w.sample_rate);
  const long n = static_cast<long>(w.samples.size());
  if (n < g.frame_len)
    throw InputTooShortError("need at least " + std::to_string(g.frame_len) +
                             " samples, got " + std::to_string(n));
  const long frames = (n - g.frame_len) / g.frame_shift + 1;
  const int bins = config.fft_size / 2 + 1;

  // Triangular filters in the mel domain.
  Matrix filters = Matrix::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = g.low_mel + m * g.mel_step;
    const double center = left + g.mel_step;
    const double right = center + g.mel_step;
    for (int k = 0; k < bins; ++k) {
      const double mel =
          HzToMel(static_cast<double>(k) * w.sample_rate / config.fft_size);
      if (mel > left && mel <= center)
        filters(m, k) = (mel - left) / (center - left);
      else if (mel > center && mel < right)
        filters(m, k) = (right - mel) / (right - center);
    }
  }
  std::vector<double> hamming(static_cast<size_t>(g.frame_len));
  for (long i = 0; i < g.frame_len; ++i)
    hamming[static_cast<size_t>(i)] =
        0.54 - 0.46 * std::cos(2.0 * kPi * i / (g.frame_len - 1));

  RealFft fft(config.fft_size);
  std::vector<double> frame(static_cast<size_t>(g.frame_len));
  std::vector<double> power;
  Matrix feats(config.n_mels, frames);
  for (long t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * g.frame_shift;
    std::copy(src, src + g.frame_len, frame.begin());
    for (long i = g.frame_len - 1; i > 0; --i)
      frame[static_cast<size_t>(i)] -= config.preemphasis * frame[static_cast<size_t>(i - 1)];
    frame[0] -= config.preemphasis * frame[0];
    double* in = fft.input();
    for (long i = 0; i < config.fft_size; ++i)
      in[i] = i < g.frame_len ? frame[static_cast<size_t>(i)] * hamming[static_cast<size_t>(i)] : 0.0;
    fft.PowerSpectrum(power);
    const Eigen::Map<const Eigen::VectorXd> p(power.data(), bins);
    const Eigen::VectorXd energies = filters * p;
    for (int m = 0; m < config.n_mels; ++m)
      feats(m, t) = std::log(std::max(energies(m), config.log_floor));
  }
  if (config.mean_normalize)
    for (int m = 0; m < config.n_mels; ++m) {
      const double mean = feats.row(m).mean();
      feats.row(m).array() -= mean;
    }
  return feats;
}

UtteranceManifest ConcatShortUtterances(const UtteranceManifest& manifest,
                                        double min_out_s,
                                        double short_threshold_s) {
  if (!(min_out_s > 0.0) || !(short_threshold_s > 0.0))
    throw ParamError("concatenation thresholds must be positive");
  struct Group {
    std::vector<const Utterance*> parts;
    double duration = 0.0;
  };
  auto composite = [](const Group& g) {
    Utterance u;
    u.speaker_id = g.parts.front()->speaker_id;
    u.genre = g.parts.front()->genre;
    u.duration_s = g.duration;
    for (size_t i = 0; i < g.parts.size(); ++i) {
      u.utt_id += (i ? "+" : "") + g.parts[i]->utt_id;
      u.path += (i ? "|" : "") + g.parts[i]->path;
    }
    return u;
  };

  UtteranceManifest out;
  std::map<std::pair<std::string, std::string>, Group> open;
  std::vector<std::pair<std::string, std::string>> first_seen;
  for (const Utterance& u : manifest) {
    if (u.duration_s >= short_threshold_s) {
      out.push_back(u);
      continue;
    }
    const auto key = std::make_pair(u.speaker_id, u.genre);
    auto [it, inserted] = open.try_emplace(key);
    if (inserted) first_seen.push_back(key);
    Group& g = it->second;
    g.parts.push_back(&u);
    g.duration += u.duration_s;
    if (g.duration >= min_out_s) {
      out.push_back(composite(g));
      g = Group{};
    }
  }
  for (const auto& key : first_seen) {
    const Group& g = open.at(key);
    if (!g.parts.empty()) out.push_back(composite(g));
  }
  return out;
}

}  // namespace svbench
