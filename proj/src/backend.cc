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

#include "svbench/backend.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>

#include "parallel.h"
#include "svbench/error.h"
#include "svbench/random.h"

namespace svbench {

namespace {

using internal::ParallelFor;

struct PairHash {
  size_t operator()(const std::pair<std::string, std::string>& k) const {
    return std::hash<std::string>()(k.first) * 1000003u ^
           std::hash<std::string>()(k.second);
  }
};

using KeyIndex =
    std::unordered_map<std::pair<std::string, std::string>, size_t, PairHash>;

KeyIndex IndexScores(const std::vector<ScoreRecord>& scores) {
  KeyIndex index;
  index.reserve(scores.size());
  for (size_t i = 0; i < scores.size(); ++i)
    if (!index.emplace(std::make_pair(scores[i].enroll_id, scores[i].test_id), i)
             .second)
      throw TrialMismatchError("duplicate trial " + scores[i].enroll_id + " " +
                               scores[i].test_id);
  return index;
}

double Softplus(double a) {
  return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
}

double Sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

// Running mean keeps the mean of identical vectors exactly equal to them.
void AccumulateMean(std::vector<double>& mean, std::span<const double> v,
                    size_t count_before) {
  const double k = static_cast<double>(count_before + 1);
  for (size_t d = 0; d < mean.size(); ++d) mean[d] += (v[d] - mean[d]) / k;
}

std::vector<double> ZNormalize(const std::vector<ScoreRecord>& set) {
  const double n = static_cast<double>(set.size());
  double mean = 0.0;
  for (const ScoreRecord& s : set) mean += s.score;
  mean /= n;
  double var = 0.0;
  for (const ScoreRecord& s : set) var += (s.score - mean) * (s.score - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> z(set.size(), 0.0);
  if (sd > 0.0)
    for (size_t i = 0; i < set.size(); ++i) z[i] = (set[i].score - mean) / sd;
  return z;
}

// Score sets aligned to the key order of the first set, z-normalized.
std::vector<std::vector<double>> AlignedZScores(
    const std::vector<std::vector<ScoreRecord>>& score_sets) {
  if (score_sets.empty()) throw ParamError("no score sets to fuse");
  const auto& first = score_sets[0];
  if (first.empty()) throw TrialMismatchError("empty score set");
  IndexScores(first);  // rejects duplicate keys
  std::vector<std::vector<double>> aligned;
  aligned.push_back(ZNormalize(first));
  for (size_t s = 1; s < score_sets.size(); ++s) {
    const auto& set = score_sets[s];
    if (set.size() != first.size())
      throw TrialMismatchError("score set " + std::to_string(s) + " has " +
                               std::to_string(set.size()) + " trials, expected " +
                               std::to_string(first.size()));
    KeyIndex index = IndexScores(set);
    std::vector<double> z = ZNormalize(set);
    std::vector<double> ordered(first.size());
    for (size_t i = 0; i < first.size(); ++i) {
      auto it = index.find({first[i].enroll_id, first[i].test_id});
      if (it == index.end())
        throw TrialMismatchError("trial " + first[i].enroll_id + " " +
                                 first[i].test_id + " missing from score set " +
                                 std::to_string(s));
      ordered[i] = z[it->second];
    }
    aligned.push_back(std::move(ordered));
  }
  return aligned;
}

void CheckWeights(std::span<const double> weights, size_t n_sets) {
  if (weights.size() != n_sets)
    throw WeightError("got " + std::to_string(weights.size()) +
                      " weights for " + std::to_string(n_sets) + " systems");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw WeightError("weights must be finite and nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw WeightError("weights sum to " + FormatDouble(sum) + ", expected 1");
}

// Calls visit(units) for every composition of `total` into `parts`
// nonnegative integers, in lexicographic order.
void ForEachComposition(size_t parts, size_t total,
                        const std::function<void(const std::vector<size_t>&)>& visit) {
  std::vector<size_t> units(parts, 0);
  std::function<void(size_t, size_t)> rec = [&](size_t i, size_t left) {
    if (i + 1 == parts) {
      units[i] = left;
      visit(units);
      return;
    }
    for (size_t k = left + 1; k-- > 0;) {
      units[i] = k;
      rec(i + 1, left - k);
    }
  };
  rec(0, total);
}

}  // namespace

double Norm(std::span<const double> v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss);
}

double CosineScore(std::span<const double> enroll, std::span<const double> test) {
  if (enroll.size() != test.size())
    throw DimensionError("cannot score vectors of dimension " +
                         std::to_string(enroll.size()) + " and " +
                         std::to_string(test.size()));
  double dot = 0.0, ee = 0.0, tt = 0.0;
  for (size_t i = 0; i < enroll.size(); ++i) {
    dot += enroll[i] * test[i];
    ee += enroll[i] * enroll[i];
    tt += test[i] * test[i];
  }
  if (ee == 0.0 || tt == 0.0 || !std::isfinite(ee) || !std::isfinite(tt)) {
    // Squares under- or overflowed; retry on copies scaled to unit max.
    auto max_abs = [](std::span<const double> v) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    };
    const double me = max_abs(enroll), mt = max_abs(test);
    if (me == 0.0 || mt == 0.0)
      throw DegenerateEmbeddingError("zero-norm embedding in cosine score");
    if (me == 1.0 && mt == 1.0)
      throw DegenerateEmbeddingError("embedding norm not representable");
    std::vector<double> e(enroll.begin(), enroll.end()), t(test.begin(), test.end());
    for (double& x : e) x /= me;
    for (double& x : t) x /= mt;
    return CosineScore(e, t);
  }
  const double c = dot / (std::sqrt(ee) * std::sqrt(tt));
  return std::clamp(c, -1.0, 1.0);
}

Cohort BuildCohort(const EmbeddingStore& store,
                   const std::vector<std::pair<std::string, std::string>>& utt2spk,
                   size_t size, uint64_t seed) {
  if (size == 0) throw ParamError("cohort size must be positive");
  struct Acc {
    std::vector<double> mean;
    size_t count = 0;
  };
  std::map<std::string, Acc> speakers;
  for (const auto& [utt, spk] : utt2spk) {
    const Embedding& e = store.Get(utt);
    Acc& acc = speakers[spk];
    if (acc.mean.empty()) acc.mean.assign(store.dimension(), 0.0);
    AccumulateMean(acc.mean, e.vector, acc.count++);
  }
  std::vector<const std::string*> ids;
  for (const auto& [spk, acc] : speakers) ids.push_back(&spk);

  std::vector<bool> keep(ids.size(), true);
  if (ids.size() > size) {
    // Partial Fisher-Yates over indices; the first `size` are retained.
    std::vector<size_t> order(ids.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (size_t i = 0; i < size; ++i) {
      const size_t j = i + UniformIndex(rng, order.size() - i);
      std::swap(order[i], order[j]);
    }
    keep.assign(ids.size(), false);
    for (size_t i = 0; i < size; ++i) keep[order[i]] = true;
  }

  Cohort cohort{EmbeddingStore(store.dimension())};
  for (size_t i = 0; i < ids.size(); ++i)
    if (keep[i]) cohort.means.Add({*ids[i], speakers[*ids[i]].mean});
  return cohort;
}

CohortStats TopCohortStats(std::span<const double> v, const Cohort& cohort,
                           const AsNormParams& params) {
  if (cohort.size() == 0) throw DegenerateCohortError("empty cohort");
  if (params.top_n == 0 || params.top_n > cohort.size())
    throw ParamError("top_n " + std::to_string(params.top_n) +
                     " outside [1, cohort size " +
                     std::to_string(cohort.size()) + "]");
  std::vector<double> scores;
  scores.reserve(cohort.size());
  for (const Embedding& c : cohort.means.records())
    scores.push_back(CosineScore(v, c.vector));
  const auto top = scores.begin() + static_cast<std::ptrdiff_t>(params.top_n);
  std::partial_sort(scores.begin(), top, scores.end(), std::greater<double>());
  const double n = static_cast<double>(params.top_n);
  double sum = 0.0;
  for (auto it = scores.begin(); it != top; ++it) sum += *it;
  const double mean = sum / n;
  double var = 0.0;
  for (auto it = scores.begin(); it != top; ++it) var += (*it - mean) * (*it - mean);
  return {mean, std::sqrt(var / n)};
}

double AsNormFromStats(double raw, const CohortStats& enroll,
                       const CohortStats& test) {
  if (!(enroll.stddev > 0.0) || !(test.stddev > 0.0))
    throw DegenerateCohortError("zero standard deviation in cohort scores");
  return 0.5 * ((raw - enroll.mean) / enroll.stddev +
                (raw - test.mean) / test.stddev);
}

double AsNorm(double raw, const Embedding& enroll, const Embedding& test,
              const Cohort& cohort, const AsNormParams& params) {
  return AsNormFromStats(raw, TopCohortStats(enroll.vector, cohort, params),
                         TopCohortStats(test.vector, cohort, params));
}

const std::array<const char*, kNumQmfFeatures> kQmfFeatureNames = {
    "raw_score",          "enroll_magnitude",  "test_magnitude",
    "log_enroll_duration", "log_test_duration", "enroll_cohort_mean",
    "test_cohort_mean"};

std::array<double, kNumQmfFeatures> QmfFeatureVector(const QmfFeatures& f) {
  return {f.raw_score,
          f.enroll_magnitude,
          f.test_magnitude,
          std::log(f.enroll_duration_s),
          std::log(f.test_duration_s),
          f.enroll_cohort_mean,
          f.test_cohort_mean};
}

size_t QmfFeatureIndex(const std::string& name) {
  for (size_t i = 0; i < kNumQmfFeatures; ++i)
    if (name == kQmfFeatureNames[i]) return i;
  throw FormatError("unknown QMF feature '" + name + "'");
}

QmfFeatures QmfExtract(const Trial& trial, double raw,
                       const EmbeddingStore& store,
                       const std::map<std::string, double>& durations,
                       const Cohort& cohort, const AsNormParams& params) {
  const Embedding& e = store.Get(trial.enroll_id);
  const Embedding& t = store.Get(trial.test_id);
  auto duration = [&](const std::string& id) {
    auto it = durations.find(id);
    if (it == durations.end())
      throw MissingIdError("no duration for '" + id + "'");
    return it->second;
  };
  QmfFeatures f;
  f.raw_score = raw;
  f.enroll_magnitude = Norm(e.vector);
  f.test_magnitude = Norm(t.vector);
  f.enroll_duration_s = duration(trial.enroll_id);
  f.test_duration_s = duration(trial.test_id);
  const CohortStats es = TopCohortStats(e.vector, cohort, params);
  const CohortStats ts = TopCohortStats(t.vector, cohort, params);
  if (!(es.stddev > 0.0) || !(ts.stddev > 0.0))
    throw DegenerateCohortError("zero standard deviation in cohort scores");
  f.enroll_cohort_mean = es.mean;
  f.test_cohort_mean = ts.mean;
  return f;
}

CalibrationModel FitCalibration(std::span<const QmfFeatures> features,
                                std::span<const Label> labels,
                                const CalibrationOptions& options) {
  if (features.size() != labels.size())
    throw ParamError("feature and label counts differ");
  size_t n_target = 0;
  for (Label l : labels) n_target += l == Label::kTarget;
  if (n_target == 0 || n_target == labels.size())
    throw SingleClassError("calibration needs both target and nontarget trials");

  std::vector<size_t> cols;
  for (const std::string& name : options.features)
    cols.push_back(QmfFeatureIndex(name));
  const Eigen::Index n = static_cast<Eigen::Index>(features.size());
  const Eigen::Index f = static_cast<Eigen::Index>(cols.size());

  // Design matrix in standardized coordinates plus a bias column.
  Eigen::MatrixXd a(n, f + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto x = QmfFeatureVector(features[static_cast<size_t>(i)]);
    for (Eigen::Index j = 0; j < f; ++j) {
      const double v = x[cols[static_cast<size_t>(j)]];
      if (!std::isfinite(v))
        throw FormatError("non-finite calibration feature " +
                          options.features[static_cast<size_t>(j)]);
      a(i, j) = v;
    }
    a(i, f) = 1.0;
    y(i) = labels[static_cast<size_t>(i)] == Label::kTarget ? 1.0 : 0.0;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(f);
  Eigen::VectorXd sd = Eigen::VectorXd::Zero(f);
  for (Eigen::Index j = 0; j < f; ++j) {
    mean(j) = a.col(j).mean();
    sd(j) = std::sqrt((a.col(j).array() - mean(j)).square().mean());
    if (sd(j) > 0.0)
      a.col(j) = (a.col(j).array() - mean(j)) / sd(j);
    else
      a.col(j).setZero();
  }

  const double lambda = options.l2;
  const double inv_n = 1.0 / static_cast<double>(n);
  auto objective = [&](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd act = a * theta;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) sum += Softplus(act(i)) - y(i) * act(i);
    return sum * inv_n + lambda * theta.head(f).squaredNorm();
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(f + 1);
  const double prior = static_cast<double>(n_target) * inv_n;
  theta(f) = std::log(prior / (1.0 - prior));
  double value = objective(theta);
  bool converged = false;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Eigen::VectorXd act = a * theta;
    Eigen::VectorXd resid(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = Sigmoid(act(i));
      resid(i) = p - y(i);
      curv(i) = p * (1.0 - p);
    }
    Eigen::VectorXd grad = a.transpose() * resid * inv_n;
    grad.head(f) += 2.0 * lambda * theta.head(f);
    const double gnorm = grad.norm();
    if (gnorm <= options.gradient_tolerance) {
      converged = true;
      break;
    }
    Eigen::MatrixXd hess = a.transpose() * curv.asDiagonal() * a * inv_n;
    hess.diagonal().head(f).array() += 2.0 * lambda;

    Eigen::VectorXd step;
    double damping = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt) {
      Eigen::MatrixXd h = hess;
      h.diagonal().array() += damping;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        step = ldlt.solve(-grad);
        if (step.allFinite() && grad.dot(step) < 0.0) break;
      }
      damping = damping == 0.0 ? 1e-12 * (1.0 + hess.diagonal().maxCoeff())
                               : damping * 10.0;
      step.resize(0);
    }
    if (step.size() == 0) step = -grad;

    // Backtracking line search. Close to the optimum the objective is
    // flat to rounding, so a full Newton step is taken once the gradient is
    // small.
    const double slope = grad.dot(step);
    double t = 1.0;
    Eigen::VectorXd next = theta + step;
    double next_value = objective(next);
    while (next_value > value + 1e-4 * t * slope && t > 1e-10 && gnorm > 1e-6) {
      t *= 0.5;
      next = theta + t * step;
      next_value = objective(next);
    }
    theta = next;
    value = next_value;
  }
  if (!converged)
    throw ConvergenceError("calibration did not reach gradient norm " +
                           FormatDouble(options.gradient_tolerance));

  CalibrationModel model;
  model.feature_names = options.features;
  model.bias = theta(f);
  for (Eigen::Index j = 0; j < f; ++j) {
    const double w = sd(j) > 0.0 ? theta(j) / sd(j) : 0.0;
    model.weights.push_back(w);
    model.bias -= w * mean(j);
  }
  return model;
}

double ApplyCalibration(const CalibrationModel& model,
                        const QmfFeatures& features) {
  if (model.weights.size() != model.feature_names.size())
    throw FormatError("calibration model has mismatched names and weights");
  const auto x = QmfFeatureVector(features);
  double llr = model.bias;
  for (size_t j = 0; j < model.weights.size(); ++j)
    llr += model.weights[j] * x[QmfFeatureIndex(model.feature_names[j])];
  return llr;
}

double MeanLogisticLoss(const CalibrationModel& model,
                        std::span<const QmfFeatures> features,
                        std::span<const Label> labels) {
  if (features.size() != labels.size() || features.empty())
    throw ParamError("feature and label counts differ or are empty");
  double sum = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    const double llr = ApplyCalibration(model, features[i]);
    sum += Softplus(labels[i] == Label::kTarget ? -llr : llr);
  }
  return sum / static_cast<double>(features.size());
}

void WriteCalibrationModel(const CalibrationModel& model, std::ostream& os) {
  for (size_t j = 0; j < model.feature_names.size(); ++j)
    os << (j ? "," : "") << model.feature_names[j];
  os << '\n' << FormatDouble(model.bias) << '\n';
  for (size_t j = 0; j < model.weights.size(); ++j)
    os << (j ? "," : "") << FormatDouble(model.weights[j]);
  os << '\n';
}

void SaveCalibrationModel(const CalibrationModel& model, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  WriteCalibrationModel(model, os);
  os.flush();
  if (!os) throw IoError("write failed on '" + path + "'");
}

CalibrationModel ReadCalibrationModel(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
  };
  std::string names, bias, weights;
  if (!std::getline(is, names) || !std::getline(is, bias) ||
      !std::getline(is, weights))
    throw FormatError("calibration model needs three lines");
  CalibrationModel model;
  model.feature_names = split(names);
  for (const std::string& name : model.feature_names) QmfFeatureIndex(name);
  model.bias = ParseDouble(bias, 2);
  for (const std::string& w : split(weights))
    model.weights.push_back(ParseDouble(w, 3));
  if (model.weights.size() != model.feature_names.size())
    throw FormatError("weight count does not match feature count", 3);
  return model;
}

CalibrationModel LoadCalibrationModel(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return ReadCalibrationModel(is);
}

std::vector<ScoreRecord> Fuse(
    const std::vector<std::vector<ScoreRecord>>& score_sets,
    std::span<const double> weights) {
  CheckWeights(weights, score_sets.size());
  const auto z = AlignedZScores(score_sets);
  std::vector<ScoreRecord> fused;
  fused.reserve(score_sets[0].size());
  for (size_t i = 0; i < score_sets[0].size(); ++i) {
    double s = 0.0;
    for (size_t k = 0; k < z.size(); ++k) s += weights[k] * z[k][i];
    fused.push_back({score_sets[0][i].enroll_id, score_sets[0][i].test_id, s});
  }
  return fused;
}

LabeledScores JoinLabels(const std::vector<ScoreRecord>& scores,
                         const std::vector<Trial>& labeled_trials) {
  std::unordered_map<std::pair<std::string, std::string>, Label, PairHash> labels;
  for (const Trial& t : labeled_trials) {
    if (!t.label)
      throw TrialMismatchError("trial " + t.enroll_id + " " + t.test_id +
                               " has no label");
    labels[{t.enroll_id, t.test_id}] = *t.label;
  }
  LabeledScores out;
  for (const ScoreRecord& s : scores) {
    auto it = labels.find({s.enroll_id, s.test_id});
    if (it == labels.end())
      throw TrialMismatchError("no label for trial " + s.enroll_id + " " +
                               s.test_id);
    (it->second == Label::kTarget ? out.target : out.nontarget).push_back(s.score);
  }
  return out;
}

std::vector<double> SearchFusionWeights(
    const std::vector<std::vector<ScoreRecord>>& score_sets,
    const std::vector<Trial>& labeled_trials, const DcfParams& params,
    double grid_step) {
  if (!(grid_step > 0.0 && grid_step <= 1.0))
    throw ParamError("grid_step must lie in (0, 1]");
  ValidateDcfParams(params);
  const auto z = AlignedZScores(score_sets);
  const size_t systems = z.size();
  if (systems == 1) return {1.0};

  // Labels in the first set's order.
  std::vector<ScoreRecord> probe = score_sets[0];
  for (ScoreRecord& r : probe) r.score = 0.0;
  std::unordered_map<std::pair<std::string, std::string>, Label, PairHash> labels;
  for (const Trial& t : labeled_trials) {
    if (!t.label)
      throw TrialMismatchError("trial " + t.enroll_id + " " + t.test_id +
                               " has no label");
    labels[{t.enroll_id, t.test_id}] = *t.label;
  }
  std::vector<bool> is_target(probe.size());
  for (size_t i = 0; i < probe.size(); ++i) {
    auto it = labels.find({probe[i].enroll_id, probe[i].test_id});
    if (it == labels.end())
      throw TrialMismatchError("no label for trial " + probe[i].enroll_id +
                               " " + probe[i].test_id);
    is_target[i] = it->second == Label::kTarget;
  }

  const size_t units = std::max<size_t>(
      1, static_cast<size_t>(std::floor(1.0 / grid_step + 1e-9)));
  const double uniform = 1.0 / static_cast<double>(systems);
  std::vector<double> best;
  double best_dcf = std::numeric_limits<double>::infinity();
  double best_dist = std::numeric_limits<double>::infinity();
  ForEachComposition(systems, units, [&](const std::vector<size_t>& comp) {
    std::vector<double> w(systems);
    double dist = 0.0;
    for (size_t k = 0; k < systems; ++k) {
      w[k] = static_cast<double>(comp[k]) / static_cast<double>(units);
      dist += (w[k] - uniform) * (w[k] - uniform);
    }
    LabeledScores ls;
    for (size_t i = 0; i < probe.size(); ++i) {
      double s = 0.0;
      for (size_t k = 0; k < systems; ++k) s += w[k] * z[k][i];
      (is_target[i] ? ls.target : ls.nontarget).push_back(s);
    }
    const double dcf = MinDcf(ls, params).min_dcf;
    if (best.empty() || dcf < best_dcf - 1e-12 ||
        (std::abs(dcf - best_dcf) <= 1e-12 && dist < best_dist - 1e-15)) {
      best = w;
      best_dcf = dcf;
      best_dist = dist;
    }
  });
  return best;
}

EmbeddingStore AverageEnrollment(
    const EmbeddingStore& store,
    const std::vector<std::pair<std::string, std::vector<std::string>>>&
        enroll_map) {
  EmbeddingStore out(store.dimension());
  for (const auto& [speaker, utts] : enroll_map) {
    if (utts.empty())
      throw EmptyEnrollmentError("speaker '" + speaker + "' has no utterances");
    std::vector<double> mean(store.dimension(), 0.0);
    for (size_t i = 0; i < utts.size(); ++i)
      AccumulateMean(mean, store.Get(utts[i]).vector, i);
    out.Add({speaker, std::move(mean)});
  }
  return out;
}

std::vector<Trial> BuildCalibrationTrials(const UtteranceManifest& manifest,
                                          size_t n_pairs,
                                          double target_fraction,
                                          uint64_t seed) {
  if (n_pairs == 0) throw ParamError("n_pairs must be positive");
  if (!(target_fraction > 0.0 && target_fraction < 1.0))
    throw ParamError("target_fraction must lie in (0, 1)");
  const size_t n = manifest.size();
  std::map<std::string, std::vector<size_t>> by_speaker;
  for (size_t i = 0; i < n; ++i) by_speaker[manifest[i].speaker_id].push_back(i);
  if (by_speaker.size() < 2)
    throw InfeasibleSamplingError("need at least two speakers");
  std::vector<size_t> speaker_of(n);
  {
    size_t s = 0;
    for (const auto& [spk, utts] : by_speaker) {
      for (size_t u : utts) speaker_of[u] = s;
      ++s;
    }
  }
  std::vector<std::vector<size_t>> speaker_utts;
  for (const auto& [spk, utts] : by_speaker) speaker_utts.push_back(utts);

  // Duration quartile of every utterance (stable on ties by manifest order).
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return manifest[a].duration_s < manifest[b].duration_s;
  });
  std::vector<int> quartile(n);
  for (size_t r = 0; r < n; ++r) quartile[order[r]] = static_cast<int>(4 * r / n);

  const size_t n_target =
      static_cast<size_t>(std::llround(target_fraction * static_cast<double>(n_pairs)));
  const size_t n_nontarget = n_pairs - n_target;

  double target_capacity = 0.0;
  for (const auto& utts : speaker_utts) {
    const double k = static_cast<double>(utts.size());
    target_capacity += k * (k - 1.0) / 2.0;
  }
  const double nn = static_cast<double>(n);
  const double nontarget_capacity = nn * (nn - 1.0) / 2.0 - target_capacity;
  if (static_cast<double>(n_target) > target_capacity ||
      static_cast<double>(n_nontarget) > nontarget_capacity)
    throw InfeasibleSamplingError(
        "requested " + std::to_string(n_target) + " target / " +
        std::to_string(n_nontarget) + " nontarget pairs, capacity is " +
        FormatDouble(target_capacity) + " / " + FormatDouble(nontarget_capacity));

  Rng rng(seed);
  std::set<std::pair<size_t, size_t>> used;  // unordered pair identity
  std::vector<Trial> trials;
  trials.reserve(n_pairs);
  auto emit = [&](size_t enroll, size_t test, Label label) {
    trials.push_back({manifest[enroll].utt_id, manifest[test].utt_id, label});
  };

  auto sample = [&](bool target, size_t count, double capacity) {
    if (count == 0) return;
    if (capacity <= 4.0 * static_cast<double>(count) && capacity <= 2e7) {
      // Dense regime: enumerate every candidate pair, bucket by the enroll
      // side's quartile, shuffle, then take round-robin across buckets.
      std::array<std::vector<std::pair<size_t, size_t>>, 4> buckets;
      auto add = [&](size_t i, size_t j) {
        auto [e, t] = UniformIndex(rng, 2) ? std::pair{j, i} : std::pair{i, j};
        buckets[static_cast<size_t>(quartile[e])].push_back({e, t});
      };
      if (target) {
        for (const auto& utts : speaker_utts)
          for (size_t a = 0; a < utts.size(); ++a)
            for (size_t b = a + 1; b < utts.size(); ++b) add(utts[a], utts[b]);
      } else {
        for (size_t i = 0; i < n; ++i)
          for (size_t j = i + 1; j < n; ++j)
            if (speaker_of[i] != speaker_of[j]) add(i, j);
      }
      for (auto& b : buckets)
        for (size_t i = b.size(); i > 1; --i)
          std::swap(b[i - 1], b[UniformIndex(rng, i)]);
      std::array<size_t, 4> pos{};
      size_t taken = 0;
      while (taken < count) {
        for (size_t q = 0; q < 4 && taken < count; ++q) {
          if (pos[q] >= buckets[q].size()) continue;
          auto [e, t] = buckets[q][pos[q]++];
          used.insert({std::min(e, t), std::max(e, t)});
          emit(e, t, target ? Label::kTarget : Label::kNontarget);
          ++taken;
        }
      }
      return;
    }
    // Sparse regime: rejection sampling with round-robin enroll quartiles.
    std::array<std::vector<size_t>, 4> enroll_pool;
    for (size_t i = 0; i < n; ++i)
      if (!target || speaker_utts[speaker_of[i]].size() >= 2)
        enroll_pool[static_cast<size_t>(quartile[i])].push_back(i);
    size_t taken = 0, q = 0;
    const size_t max_attempts = 200 * count + 10000;
    for (size_t attempt = 0; taken < count; ++attempt) {
      if (attempt >= max_attempts)
        throw InfeasibleSamplingError("could not draw enough distinct pairs");
      while (enroll_pool[q % 4].empty()) ++q;
      const auto& pool = enroll_pool[q % 4];
      const size_t e = pool[UniformIndex(rng, pool.size())];
      size_t t;
      if (target) {
        const auto& mates = speaker_utts[speaker_of[e]];
        t = mates[UniformIndex(rng, mates.size())];
        if (t == e) continue;
      } else {
        t = UniformIndex(rng, n);
        if (speaker_of[t] == speaker_of[e]) continue;
      }
      if (!used.insert({std::min(e, t), std::max(e, t)}).second) continue;
      emit(e, t, target ? Label::kTarget : Label::kNontarget);
      ++taken;
      ++q;
    }
  };
  sample(true, n_target, target_capacity);
  sample(false, n_nontarget, nontarget_capacity);
  return trials;
}

int ThreadCount() {
  if (const char* env = std::getenv("SVBENCH_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<ScoreRecord> ScoreTrials(const EmbeddingStore& store,
                                     const std::vector<Trial>& trials,
                                     int threads) {
  // Resolve ids up front so a missing id fails before any work is done.
  for (const Trial& t : trials) {
    store.Get(t.enroll_id);
    store.Get(t.test_id);
  }
  std::vector<ScoreRecord> out(trials.size());
  ParallelFor(trials.size(), threads, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const Trial& t = trials[i];
      out[i] = {t.enroll_id, t.test_id,
                CosineScore(store.Get(t.enroll_id).vector,
                            store.Get(t.test_id).vector)};
    }
  });
  return out;
}

std::map<std::string, CohortStats> CohortStatsFor(
    const EmbeddingStore& store, const std::vector<ScoreRecord>& scores,
    const Cohort& cohort, const AsNormParams& params, int threads) {
  std::set<std::string> ids;
  for (const ScoreRecord& s : scores) {
    ids.insert(s.enroll_id);
    ids.insert(s.test_id);
  }
  std::vector<std::string> id_list(ids.begin(), ids.end());
  std::vector<const Embedding*> embs;
  for (const std::string& id : id_list) embs.push_back(&store.Get(id));
  std::vector<CohortStats> stats(id_list.size());
  ParallelFor(id_list.size(), threads, [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i)
      stats[i] = TopCohortStats(embs[i]->vector, cohort, params);
  });
  std::map<std::string, CohortStats> out;
  for (size_t i = 0; i < id_list.size(); ++i) out.emplace(id_list[i], stats[i]);
  return out;
}

std::vector<ScoreRecord> AsNormScores(const EmbeddingStore& store,
                                      const std::vector<ScoreRecord>& raw,
                                      const Cohort& cohort,
                                      const AsNormParams& params, int threads) {
  const auto stats = CohortStatsFor(store, raw, cohort, params, threads);
  std::vector<ScoreRecord> out;
  out.reserve(raw.size());
  for (const ScoreRecord& r : raw)
    out.push_back({r.enroll_id, r.test_id,
                   AsNormFromStats(r.score, stats.at(r.enroll_id),
                                   stats.at(r.test_id))});
  return out;
}

std::vector<QmfFeatures> QmfExtractAll(
    const EmbeddingStore& store, const std::vector<ScoreRecord>& scores,
    const std::map<std::string, double>& durations, const Cohort& cohort,
    const AsNormParams& params, int threads) {
  const auto stats = CohortStatsFor(store, scores, cohort, params, threads);
  std::vector<QmfFeatures> out;
  out.reserve(scores.size());
  for (const ScoreRecord& s : scores) {
    auto duration = [&](const std::string& id) {
      auto it = durations.find(id);
      if (it == durations.end())
        throw MissingIdError("no duration for '" + id + "'");
      return it->second;
    };
    const CohortStats& es = stats.at(s.enroll_id);
    const CohortStats& ts = stats.at(s.test_id);
    if (!(es.stddev > 0.0) || !(ts.stddev > 0.0))
      throw DegenerateCohortError("zero standard deviation in cohort scores");
    QmfFeatures f;
    f.raw_score = s.score;
    f.enroll_magnitude = Norm(store.Get(s.enroll_id).vector);
    f.test_magnitude = Norm(store.Get(s.test_id).vector);
    f.enroll_duration_s = duration(s.enroll_id);
    f.test_duration_s = duration(s.test_id);
    f.enroll_cohort_mean = es.mean;
    f.test_cohort_mean = ts.mean;
    out.push_back(f);
  }
  return out;
}

}  // namespace svbench
