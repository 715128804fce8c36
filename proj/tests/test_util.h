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

#ifndef SVBENCH_TESTS_TEST_UTIL_H_
#define SVBENCH_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "svbench/augment.h"
#include "svbench/datamodel.h"
#include "svbench/losses.h"
#include "svbench/metrics.h"
#include "svbench/random.h"

namespace svbench::testing {

inline double Inf() { return std::numeric_limits<double>::infinity(); }

// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double RelativeError(const Matrix& a, const Matrix& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom == 0.0) return 0.0;
  return (a - b).norm() / denom;
}

// Central differences of f around x, step h.
inline Matrix NumericGradient(const std::function<double(const Matrix&)>& f,
                              const Matrix& x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = x(i, j);
      probe(i, j) = v + h;
      const double up = f(probe);
      probe(i, j) = v - h;
      const double down = f(probe);
      probe(i, j) = v;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Exhaustive O(n^2) sweep: every score plus both sentinels, counted directly.
struct BruteRoc {
  std::vector<double> thresholds, p_miss, p_fa;
};

inline BruteRoc BruteForceRoc(const LabeledScores& s) {
  std::vector<double> cand{-Inf(), Inf()};
  for (double v : s.target) cand.push_back(v);
  for (double v : s.nontarget) cand.push_back(v);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  BruteRoc roc;
  for (double t : cand) {
    size_t miss = 0, fa = 0;
    for (double v : s.target) miss += v < t;
    for (double v : s.nontarget) fa += v >= t;
    roc.thresholds.push_back(t);
    roc.p_miss.push_back(static_cast<double>(miss) / s.target.size());
    roc.p_fa.push_back(static_cast<double>(fa) / s.nontarget.size());
  }
  return roc;
}

inline double BruteForceEer(const LabeledScores& s) {
  const BruteRoc r = BruteForceRoc(s);
  for (size_t i = 0; i < r.thresholds.size(); ++i) {
    const double d = r.p_miss[i] - r.p_fa[i];
    if (d == 0.0) return r.p_miss[i];
    if (d > 0.0) {
      const double da = r.p_miss[i - 1] - r.p_fa[i - 1];
      const double alpha = -da / (d - da);
      return r.p_miss[i - 1] + alpha * (r.p_miss[i] - r.p_miss[i - 1]);
    }
  }
  return 1.0;
}

inline MinDcfResult BruteForceMinDcf(const LabeledScores& s, const DcfParams& p) {
  const BruteRoc r = BruteForceRoc(s);
  const double norm = std::min(p.c_miss * p.p_target, p.c_fa * (1 - p.p_target));
  MinDcfResult best{Inf(), Inf()};
  for (size_t i = 0; i < r.thresholds.size(); ++i) {
    const double c =
        (p.c_miss * r.p_miss[i] * p.p_target + p.c_fa * r.p_fa[i] * (1 - p.p_target)) /
        norm;
    if (c < best.min_dcf) best = {c, r.thresholds[i]};
  }
  return best;
}

// Scores drawn on a coarse lattice so that ties are common.
inline LabeledScores RandomLabeledScores(Rng& rng, size_t max_per_class) {
  LabeledScores s;
  const size_t nt = 1 + UniformIndex(rng, max_per_class);
  const size_t nn = 1 + UniformIndex(rng, max_per_class);
  const bool lattice = UniformUnit(rng) < 0.5;
  auto draw = [&](double shift) {
    const double v = StandardNormal(rng) + shift;
    return lattice ? std::round(v * 4.0) / 4.0 : v;
  };
  for (size_t i = 0; i < nt; ++i) s.target.push_back(draw(1.0));
  for (size_t i = 0; i < nn; ++i) s.nontarget.push_back(draw(0.0));
  return s;
}

// True when any selection in the loss (top-k membership, HEM trigger,
// sub-center argmax, target clamp) lies within tol of switching. `cosines`
// is the un-reduced B x (N * K) matrix.
inline bool NearSelectionBoundary(LossKind kind, const Matrix& cosines,
                                  const std::vector<int>& labels,
                                  const LossParams& p, double tol = 1e-4) {
  const int k = SubCentersFor(kind, p);
  const Eigen::Index n = cosines.cols() / k;
  for (Eigen::Index r = 0; r < cosines.rows(); ++r) {
    std::vector<double> c(static_cast<size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      std::vector<double> sub;
      for (int s = 0; s < k; ++s) sub.push_back(cosines(r, j * k + s));
      std::sort(sub.rbegin(), sub.rend());
      if (k > 1 && sub[0] - sub[1] < tol) return true;
      c[static_cast<size_t>(j)] = sub[0];
    }
    const size_t y = static_cast<size_t>(labels[static_cast<size_t>(r)]);
    if (std::abs(c[y]) > 1.0 - 1e-6) return true;
    std::vector<double> others;
    for (size_t j = 0; j < c.size(); ++j)
      if (j != y) others.push_back(c[j]);
    // Non-targets that receive an angular margin sit near the arccos
    // singularity when |cos| approaches 1.
    if (kind == LossKind::kInterTopK && p.topk_k < static_cast<int>(c.size())) {
      std::sort(others.rbegin(), others.rend());
      const size_t kk = static_cast<size_t>(p.topk_k);
      if (kk < others.size() && others[kk - 1] - others[kk] < tol) return true;
      for (size_t j = 0; j < kk && j < others.size(); ++j)
        if (std::abs(others[j]) > 1.0 - tol) return true;
    }
    if (kind == LossKind::kHem) {
      const double theta = std::acos(std::clamp(c[y], -kCosineClamp, kCosineClamp));
      const double trigger = std::cos(theta + p.margin);
      for (double o : others) {
        if (std::abs(o - trigger) < tol) return true;
        if (o > trigger && std::abs(o) > 1.0 - tol) return true;
      }
    }
  }
  return false;
}

inline Matrix RandomCosines(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = UniformReal(rng, -1.0, 1.0);
  return m;
}

inline std::vector<int> RandomLabels(Rng& rng, size_t rows, size_t classes) {
  std::vector<int> y(rows);
  for (int& v : y) v = static_cast<int>(UniformIndex(rng, classes));
  return y;
}

inline Matrix RandomMatrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = StandardNormal(rng);
  return m;
}

inline Matrix NormalizedCosines(const Matrix& e, const Matrix& c) {
  Matrix en = e, cn = c;
  for (Eigen::Index i = 0; i < en.rows(); ++i) en.row(i).normalize();
  for (Eigen::Index i = 0; i < cn.rows(); ++i) cn.row(i).normalize();
  return en * cn.transpose();
}

// Gradient-check outcome for one kind on cosine kernels.
struct GradCheck {
  double rel_error = 0.0;
  bool skipped = false;
};

inline GradCheck CheckCosineGradient(LossKind kind, const Matrix& cosines,
                                     const std::vector<int>& labels, const LossParams& p) {
  if (NearSelectionBoundary(kind, cosines, labels, p)) return {0.0, true};
  // Stay inside [-1, 1] for the probe.
  if ((cosines.array().abs() > 1.0 - 2e-6).any()) return {0.0, true};
  const int k = SubCentersFor(kind, p);
  auto eval = [&](const Matrix& c) -> std::pair<double, Matrix> {
    if (k == 1) {
      LossOutput o = ComputeLoss(kind, {c, labels}, p);
      return {o.loss, o.grad};
    }
    SubCenterReduction red = SubCenterReduce({c, labels, k});
    LossOutput o = ComputeLoss(kind, red.batch, p);
    return {o.loss, SubCenterExpandGrad(o.grad, red.argmax, k)};
  };
  const Matrix analytic = eval(cosines).second;
  const Matrix numeric =
      NumericGradient([&](const Matrix& c) { return eval(c).first; }, cosines);
  return {RelativeError(analytic, numeric), false};
}

inline std::pair<double, double> CheckEmbeddingGradient(LossKind kind, const Matrix& e,
                                                        const Matrix& centers,
                                                        const std::vector<int>& labels,
                                                        const LossParams& p, bool* skipped) {
  *skipped = NearSelectionBoundary(kind, NormalizedCosines(e, centers), labels, p);
  if (*skipped) return {0.0, 0.0};
  const EmbeddingLossOutput o = LossFromEmbeddings(e, centers, labels, p, kind);
  const Matrix ge = NumericGradient(
      [&](const Matrix& x) { return LossFromEmbeddings(x, centers, labels, p, kind).loss; }, e);
  const Matrix gc = NumericGradient(
      [&](const Matrix& x) { return LossFromEmbeddings(e, x, labels, p, kind).loss; }, centers);
  return {RelativeError(o.embedding_grad, ge), RelativeError(o.center_grad, gc)};
}

inline Waveform Tone(double hz, double seconds, int rate = 16000, double amp = 0.5) {
  Waveform w;
  w.sample_rate = rate;
  const size_t n = static_cast<size_t>(std::llround(seconds * rate));
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i)
    w.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * i / rate);
  return w;
}

// Direct DFT over bins up to max_hz; returns the frequency of the peak bin
// and the bin width.
inline std::pair<double, double> DominantFrequency(const Waveform& w,
                                                   double max_hz = 4000.0) {
  const size_t n = w.samples.size();
  const double bin = static_cast<double>(w.sample_rate) / n;
  const size_t kmax = std::min(n / 2, static_cast<size_t>(max_hz / bin));
  double best = -1.0;
  size_t arg = 0;
  for (size_t k = 1; k <= kmax; ++k) {
    // Recurrence for exp(-i 2 pi k t / n).
    const std::complex<double> step = std::polar(1.0, -2.0 * std::numbers::pi * k / n);
    std::complex<double> rot = 1.0, acc = 0.0;
    for (size_t t = 0; t < n; ++t) {
      acc += w.samples[t] * rot;
      rot *= step;
      if ((t & 1023) == 1023) rot /= std::abs(rot);
    }
    if (std::norm(acc) > best) {
      best = std::norm(acc);
      arg = k;
    }
  }
  return {arg * bin, bin};
}

inline double Power(const std::vector<double>& x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p / x.size();
}

// Small labeled scoring fixture written to disk: utterance embeddings,
// a separate training pool for the cohort, trials and durations.
struct PipelineFixture {
  EmbeddingStore store{16};
  EmbeddingStore train{16};
  std::vector<std::pair<std::string, std::string>> train_utt2spk;
  std::vector<Trial> trials;
  std::map<std::string, double> durations;
};

inline PipelineFixture MakePipelineFixture(uint64_t seed, size_t n_trials = 1000) {
  PipelineFixture f;
  Rng rng(seed);
  const size_t dim = f.store.dimension();
  auto center = [&] {
    std::vector<double> c(dim);
    for (double& v : c) v = StandardNormal(rng);
    return c;
  };
  std::vector<std::string> utts;
  std::vector<int> spk_of;
  for (int s = 0; s < 20; ++s) {
    const auto c = center();
    for (int u = 0; u < 5; ++u) {
      const double d = UniformReal(rng, 2.0, 20.0);
      std::vector<double> v = c;
      for (double& x : v) x += StandardNormal(rng) * 3.0 / std::sqrt(d);
      const std::string id = "spk" + std::to_string(s) + "-u" + std::to_string(u);
      f.store.Add({id, v});
      f.durations[id] = d;
      utts.push_back(id);
      spk_of.push_back(s);
    }
  }
  for (int s = 0; s < 30; ++s) {
    const auto c = center();
    for (int u = 0; u < 3; ++u) {
      std::vector<double> v = c;
      for (double& x : v) x += 0.5 * StandardNormal(rng);
      const std::string id = "trn" + std::to_string(s) + "-u" + std::to_string(u);
      f.train.Add({id, v});
      f.train_utt2spk.push_back({id, "trn" + std::to_string(s)});
    }
  }
  std::set<std::pair<size_t, size_t>> used;
  while (f.trials.size() < n_trials) {
    const size_t a = UniformIndex(rng, utts.size());
    // Half targets: pick a partner from the same speaker.
    size_t b = UniformUnit(rng) < 0.5 ? (a / 5) * 5 + UniformIndex(rng, 5)
                                      : UniformIndex(rng, utts.size());
    if (a == b || !used.insert({a, b}).second) continue;
    f.trials.push_back({utts[a], utts[b],
                        spk_of[a] == spk_of[b] ? Label::kTarget : Label::kNontarget});
  }
  return f;
}

inline void WriteDurations(const std::map<std::string, double>& d, const std::string& path) {
  std::ofstream os(path);
  for (const auto& [id, v] : d) os << id << ' ' << FormatDouble(v) << '\n';
}

inline void WritePairs(const std::vector<std::pair<std::string, std::string>>& p,
                       const std::string& path) {
  std::ofstream os(path);
  for (const auto& [a, b] : p) os << a << ' ' << b << '\n';
}

inline std::string Slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("svbench-" + tag + "-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace svbench::testing

#endif  // SVBENCH_TESTS_TEST_UTIL_H_
