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

#ifndef SVBENCH_BACKEND_H_
#define SVBENCH_BACKEND_H_

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svbench/datamodel.h"
#include "svbench/metrics.h"

namespace svbench {

// dot(a, b) / (|a| |b|). Throws DimensionError on a size mismatch and
// DegenerateEmbeddingError if either vector has zero norm.
double CosineScore(std::span<const double> enroll, std::span<const double> test);

double Norm(std::span<const double> v);

// Imposter cohort: one mean embedding per training speaker, keyed by speaker
// id. Saved with the embedding file format.
struct Cohort {
  EmbeddingStore means{1};

  size_t size() const { return means.size(); }
};

// Averages each speaker's utterance embeddings. When more than `size`
// speakers exist, keeps a uniformly random subset of `size` of them drawn
// from `seed`. Speakers are ordered by id in the result.
Cohort BuildCohort(const EmbeddingStore& store,
                   const std::vector<std::pair<std::string, std::string>>& utt2spk,
                   size_t size, uint64_t seed);

struct AsNormParams {
  size_t top_n = 600;
};

struct CohortStats {
  double mean = 0.0;
  double stddev = 0.0;  // population (1/n) standard deviation
};

// Mean and population std of the top_n largest cosine scores between `v`
// and the cohort. Summation runs over the sorted top-n values so the result
// does not depend on cohort order. Throws ParamError if top_n is 0 or
// exceeds the cohort size.
CohortStats TopCohortStats(std::span<const double> v, const Cohort& cohort,
                           const AsNormParams& params);

// 0.5 * ((raw - mu_e) / sd_e + (raw - mu_t) / sd_t). Throws
// DegenerateCohortError if either std is zero.
double AsNormFromStats(double raw, const CohortStats& enroll,
                       const CohortStats& test);

double AsNorm(double raw, const Embedding& enroll, const Embedding& test,
              const Cohort& cohort, const AsNormParams& params);

// Quality measures attached to one trial score.
struct QmfFeatures {
  double raw_score = 0.0;
  double enroll_magnitude = 0.0;
  double test_magnitude = 0.0;
  double enroll_duration_s = 1.0;
  double test_duration_s = 1.0;
  double enroll_cohort_mean = 0.0;
  double test_cohort_mean = 0.0;
};

// Model-side feature order. Durations enter as natural logs.
//
//   index  name                 value
//   0      raw_score            raw_score
//   1      enroll_magnitude     enroll_magnitude
//   2      test_magnitude       test_magnitude
//   3      log_enroll_duration  log(enroll_duration_s)
//   4      log_test_duration    log(test_duration_s)
//   5      enroll_cohort_mean   enroll_cohort_mean
//   6      test_cohort_mean     test_cohort_mean
inline constexpr size_t kNumQmfFeatures = 7;
extern const std::array<const char*, kNumQmfFeatures> kQmfFeatureNames;

std::array<double, kNumQmfFeatures> QmfFeatureVector(const QmfFeatures& f);
// Throws FormatError for unknown names.
size_t QmfFeatureIndex(const std::string& name);

// Magnitudes come from the stored (possibly enrollment-averaged) vectors;
// cohort means are the top-n means used by as-norm. Throws MissingIdError
// for unknown embedding or duration ids.
QmfFeatures QmfExtract(const Trial& trial, double raw,
                       const EmbeddingStore& store,
                       const std::map<std::string, double>& durations,
                       const Cohort& cohort, const AsNormParams& params);

// Linear calibration llr = w . x + b over a named subset of the QMF features.
struct CalibrationModel {
  std::vector<std::string> feature_names;
  double bias = 0.0;
  std::vector<double> weights;

  bool operator==(const CalibrationModel&) const = default;
};

struct CalibrationOptions {
  std::vector<std::string> features{kQmfFeatureNames.begin(),
                                    kQmfFeatureNames.end()};
  double l2 = 1e-6;  // penalty on weights only, in standardized space
  double gradient_tolerance = 1e-8;
  int max_iterations = 500;
};

// Penalized logistic regression (target -> 1) solved by damped Newton on
// z-scored features, with weights mapped back to raw feature space.
// Throws SingleClassError, FormatError (non-finite input) or
// ConvergenceError if the gradient tolerance is not met.
CalibrationModel FitCalibration(std::span<const QmfFeatures> features,
                                std::span<const Label> labels,
                                const CalibrationOptions& options = {});

double ApplyCalibration(const CalibrationModel& model,
                        const QmfFeatures& features);

// Mean logistic loss of the model's llr against the labels.
double MeanLogisticLoss(const CalibrationModel& model,
                        std::span<const QmfFeatures> features,
                        std::span<const Label> labels);

// Text form: feature names (comma separated), bias, weights (comma
// separated), each value at 17 significant digits.
void WriteCalibrationModel(const CalibrationModel& model, std::ostream& os);
void SaveCalibrationModel(const CalibrationModel& model, const std::string& path);
CalibrationModel ReadCalibrationModel(std::istream& is);
CalibrationModel LoadCalibrationModel(const std::string& path);

// Z-normalizes every score set (population std; a constant set maps to 0)
// and returns sum_i w_i z_i per trial, in the order of the first set.
// Throws TrialMismatchError if the sets do not cover the same keys and
// WeightError unless the weights are nonnegative and sum to 1 within 1e-9.
std::vector<ScoreRecord> Fuse(
    const std::vector<std::vector<ScoreRecord>>& score_sets,
    std::span<const double> weights);

// Exhaustive simplex grid search (weights are multiples of 1/round(1/step))
// minimizing the fused minDCF on the labeled trials. Ties go to the weight
// vector closest to uniform.
std::vector<double> SearchFusionWeights(
    const std::vector<std::vector<ScoreRecord>>& score_sets,
    const std::vector<Trial>& labeled_trials, const DcfParams& params,
    double grid_step);

// Matches scores to trial labels by (enroll, test) key. Throws
// TrialMismatchError for unlabeled or unknown keys.
LabeledScores JoinLabels(const std::vector<ScoreRecord>& scores,
                         const std::vector<Trial>& labeled_trials);

// One embedding per enrollment speaker, the plain arithmetic mean of its
// utterances (no length normalization).
EmbeddingStore AverageEnrollment(
    const EmbeddingStore& store,
    const std::vector<std::pair<std::string, std::vector<std::string>>>&
        enroll_map);

// Samples n_pairs distinct trials from the manifest, round(fraction * n)
// same-speaker. Enroll utterances are drawn round-robin over the manifest's
// duration quartiles. Deterministic for a fixed seed.
std::vector<Trial> BuildCalibrationTrials(const UtteranceManifest& manifest,
                                          size_t n_pairs,
                                          double target_fraction,
                                          uint64_t seed);

// Worker count from SVBENCH_THREADS (default: hardware concurrency).
int ThreadCount();

// Cosine scores for every trial, in trial order.
std::vector<ScoreRecord> ScoreTrials(const EmbeddingStore& store,
                                     const std::vector<Trial>& trials,
                                     int threads = 1);

// Cohort statistics for every id referenced by the scores.
std::map<std::string, CohortStats> CohortStatsFor(
    const EmbeddingStore& store, const std::vector<ScoreRecord>& scores,
    const Cohort& cohort, const AsNormParams& params, int threads = 1);

std::vector<ScoreRecord> AsNormScores(const EmbeddingStore& store,
                                      const std::vector<ScoreRecord>& raw,
                                      const Cohort& cohort,
                                      const AsNormParams& params,
                                      int threads = 1);

// QMF features for every score, in order.
std::vector<QmfFeatures> QmfExtractAll(
    const EmbeddingStore& store, const std::vector<ScoreRecord>& scores,
    const std::map<std::string, double>& durations, const Cohort& cohort,
    const AsNormParams& params, int threads = 1);

}  // namespace svbench

#endif  // SVBENCH_BACKEND_H_
