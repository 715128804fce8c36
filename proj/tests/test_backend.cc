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

#include <cmath>
#include <set>
#include <sstream>

#include "doctest.h"
#include "svbench/backend.h"
#include "svbench/error.h"
#include "test_util.h"

namespace svbench {
namespace {

using doctest::Approx;

std::vector<double> UnitWith(double a, double b) {
  return {a, b, std::sqrt(1.0 - a * a - b * b)};
}

// Enroll [1,0,0] sees cohort scores {0.4, 0.2}; test [0,1,0] sees {0.1, -0.1}.
Cohort ExampleCohort() {
  Cohort c{EmbeddingStore(3)};
  c.means.Add({"c1", UnitWith(0.4, 0.1)});
  c.means.Add({"c2", UnitWith(0.2, -0.1)});
  return c;
}

TEST_CASE("cosine score") {
  CHECK(CosineScore(std::vector<double>{1, 0}, std::vector<double>{1, 0}) == 1.0);
  CHECK(CosineScore(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(CosineScore(std::vector<double>{3, 4}, std::vector<double>{4, 3}) ==
        Approx(0.96).epsilon(1e-15));
  CHECK(CosineScore(std::vector<double>{1e-300, 1e-300}, std::vector<double>{1, 1}) ==
        Approx(1.0));
  CHECK_THROWS_AS(CosineScore(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
                  DegenerateEmbeddingError);
  CHECK_THROWS_AS(CosineScore(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
                  DimensionError);
  CHECK(CosineScore(std::vector<double>{1e300, 1e300}, std::vector<double>{-1, -1}) ==
        Approx(-1.0));
  const double c = CosineScore(std::vector<double>{0.1, 0.2, 0.3},
                               std::vector<double>{0.1, 0.2, 0.3});
  CHECK(c <= 1.0);
}

TEST_CASE("build cohort") {
  EmbeddingStore store(2);
  store.Add({"a1", {1, 0}});
  store.Add({"a2", {0, 1}});
  store.Add({"b1", {2, 2}});
  store.Add({"c1", {-1, 3}});
  const std::vector<std::pair<std::string, std::string>> map{
      {"a1", "A"}, {"a2", "A"}, {"b1", "B"}, {"c1", "C"}};
  const Cohort c = BuildCohort(store, map, 3, 99);
  REQUIRE(c.size() == 3);
  CHECK(c.means.Get("A").vector == std::vector<double>{0.5, 0.5});
  CHECK(BuildCohort(store, map, 3, 1).means == c.means);
  CHECK_THROWS_AS(BuildCohort(store, {{"zz", "A"}}, 3, 0), MissingIdError);
}

TEST_CASE("cohort subsampling is deterministic") {
  EmbeddingStore store(2);
  std::vector<std::pair<std::string, std::string>> map;
  for (int i = 0; i < 700; ++i) {
    store.Add({"u" + std::to_string(i), {1.0 + i, 1.0}});
    map.push_back({"u" + std::to_string(i), "spk" + std::to_string(i)});
  }
  const Cohort a = BuildCohort(store, map, 600, 42);
  const Cohort b = BuildCohort(store, map, 600, 42);
  CHECK(a.size() == 600);
  CHECK(a.means == b.means);
  CHECK_FALSE(BuildCohort(store, map, 600, 43).means == a.means);
}

TEST_CASE("as-norm example") {
  const Cohort cohort = ExampleCohort();
  const Embedding e{"e", {1, 0, 0}};
  const Embedding t{"t", {0, 1, 0}};
  const CohortStats es = TopCohortStats(e.vector, cohort, {2});
  const CohortStats ts = TopCohortStats(t.vector, cohort, {2});
  CHECK(es.mean == Approx(0.3));
  CHECK(es.stddev == Approx(0.1));
  CHECK(ts.mean == Approx(0.0));
  CHECK(ts.stddev == Approx(0.1));
  CHECK(AsNorm(0.5, e, t, cohort, {2}) == Approx(3.5).epsilon(1e-12));
  CHECK(AsNormFromStats(0.5, {0.3, 0.1}, {0.0, 0.1}) == Approx(3.5).epsilon(1e-15));
  // top-1 leaves a single score, so sigma is 0.
  CHECK_THROWS_AS(AsNorm(0.5, e, t, cohort, {1}), DegenerateCohortError);
  CHECK_THROWS_AS(TopCohortStats(e.vector, cohort, {3}), ParamError);
  CHECK_THROWS_AS(TopCohortStats(e.vector, cohort, {0}), ParamError);
}

TEST_CASE("as-norm reduces to s-norm with equal sides") {
  Rng rng(1);
  Cohort cohort{EmbeddingStore(4)};
  for (int i = 0; i < 20; ++i) {
    std::vector<double> v(4);
    for (double& x : v) x = StandardNormal(rng);
    cohort.means.Add({"c" + std::to_string(i), v});
  }
  const Embedding e{"e", {1, 2, 3, 4}};
  const CohortStats s = TopCohortStats(e.vector, cohort, {20});
  CHECK(AsNorm(0.7, e, e, cohort, {20}) == Approx((0.7 - s.mean) / s.stddev));
}

TEST_CASE("qmf extraction") {
  const Cohort cohort = ExampleCohort();
  EmbeddingStore store(3);
  store.Add({"e", {3, 4, 0}});
  store.Add({"t", {0, 1, 0}});
  const std::map<std::string, double> dur{{"e", 4.0}, {"t", 8.0}};
  const QmfFeatures f = QmfExtract({"e", "t", std::nullopt}, 0.5, store, dur, cohort, {2});
  CHECK(f.raw_score == 0.5);
  CHECK(f.enroll_magnitude == 5.0);
  CHECK(f.test_magnitude == 1.0);
  CHECK(f.test_cohort_mean == Approx(0.0));
  const auto v = QmfFeatureVector(f);
  CHECK(v[QmfFeatureIndex("log_enroll_duration")] == Approx(std::log(4.0)));
  CHECK(v[QmfFeatureIndex("log_test_duration")] == Approx(std::log(8.0)));
  CHECK_THROWS_AS(QmfFeatureIndex("nope"), FormatError);
  CHECK_THROWS_AS(QmfExtract({"e", "t", std::nullopt}, 0.5, store, {{"e", 4.0}}, cohort, {2}),
                  MissingIdError);

  // Unit enroll vector reproduces the as-norm example's cohort mean.
  EmbeddingStore unit(3);
  unit.Add({"e", {1, 0, 0}});
  unit.Add({"t", {0, 1, 0}});
  const QmfFeatures g = QmfExtract({"e", "t", std::nullopt}, 0.5, unit, dur, cohort, {2});
  CHECK(g.enroll_cohort_mean == Approx(0.3));
}

TEST_CASE("calibration on separable data gives a positive weight") {
  std::vector<QmfFeatures> x;
  std::vector<Label> y;
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    QmfFeatures f;
    const bool tgt = i % 2 == 0;
    f.raw_score = (tgt ? 1.0 : -1.0) + 0.8 * StandardNormal(rng);
    x.push_back(f);
    y.push_back(tgt ? Label::kTarget : Label::kNontarget);
  }
  CalibrationOptions opt;
  opt.features = {"raw_score"};
  const CalibrationModel m = FitCalibration(x, y, opt);
  REQUIRE(m.weights.size() == 1);
  CHECK(m.weights[0] > 0.0);
  CHECK(m.feature_names == std::vector<std::string>{"raw_score"});
}

TEST_CASE("calibration with uninformative features") {
  std::vector<QmfFeatures> x(100);
  std::vector<Label> y;
  for (int i = 0; i < 100; ++i) y.push_back(i % 2 ? Label::kTarget : Label::kNontarget);
  const CalibrationModel m = FitCalibration(x, y);
  CHECK(std::abs(m.bias) < 1e-9);
  for (double w : m.weights) CHECK(std::abs(w) < 1e-9);
  CHECK_THROWS_AS(FitCalibration(x, std::vector<Label>(100, Label::kTarget)),
                  SingleClassError);
}

TEST_CASE("calibration recovers a known generator") {
  const double w_raw = 4.0, w_mag = -1.5, w_dur = 0.8, b = -0.5;
  Rng rng(77);
  std::vector<QmfFeatures> x;
  std::vector<Label> y;
  for (int i = 0; i < 100000; ++i) {
    QmfFeatures f;
    f.raw_score = UniformReal(rng, -1.0, 1.0);
    f.enroll_magnitude = UniformReal(rng, 0.5, 2.0);
    f.enroll_duration_s = UniformReal(rng, 2.0, 20.0);
    const double llr =
        w_raw * f.raw_score + w_mag * f.enroll_magnitude + w_dur * std::log(f.enroll_duration_s) + b;
    y.push_back(UniformUnit(rng) < 1.0 / (1.0 + std::exp(-llr)) ? Label::kTarget
                                                                 : Label::kNontarget);
    x.push_back(f);
  }
  CalibrationOptions opt;
  opt.features = {"raw_score", "enroll_magnitude", "log_enroll_duration"};
  const CalibrationModel m = FitCalibration(x, y, opt);
  CHECK(std::abs(m.weights[0] / w_raw - 1.0) < 0.05);
  CHECK(std::abs(m.weights[1] / w_mag - 1.0) < 0.05);
  CHECK(std::abs(m.weights[2] / w_dur - 1.0) < 0.05);

  const CalibrationModel truth{opt.features, b, {w_raw, w_mag, w_dur}};
  CHECK(MeanLogisticLoss(m, x, y) <= MeanLogisticLoss(truth, x, y) + 1e-3);
}

TEST_CASE("apply calibration") {
  QmfFeatures f;
  f.raw_score = 0.37;
  f.enroll_magnitude = 9.0;
  const CalibrationModel zero{{"raw_score", "enroll_magnitude"}, 0.0, {0.0, 0.0}};
  CHECK(ApplyCalibration(zero, f) == 0.0);
  const CalibrationModel identity{{"raw_score"}, 0.0, {1.0}};
  CHECK(ApplyCalibration(identity, f) == 0.37);
}

TEST_CASE("calibration model roundtrip") {
  const CalibrationModel m{{"raw_score", "log_test_duration"}, -0.1234567890123, {1.0 / 3.0, -2e-17}};
  std::stringstream ss;
  WriteCalibrationModel(m, ss);
  const std::string text = ss.str();
  const CalibrationModel back = ReadCalibrationModel(ss);
  CHECK(back == m);
  std::stringstream again;
  WriteCalibrationModel(back, again);
  CHECK(again.str() == text);
}

std::vector<ScoreRecord> Set(std::initializer_list<double> v) {
  std::vector<ScoreRecord> out;
  int i = 0;
  for (double s : v) out.push_back({"a", "t" + std::to_string(i++), s});
  return out;
}

TEST_CASE("fuse") {
  const auto a = Set({1.0, -1.0});
  const auto b = Set({0.0, 2.0});
  const std::vector<double> half{0.5, 0.5};
  const auto fused = Fuse({a, b}, half);
  REQUIRE(fused.size() == 2);
  CHECK(fused[0].score == 0.0);
  CHECK(fused[1].score == 0.0);

  const auto one = Fuse({b}, std::vector<double>{1.0});
  CHECK(one[0].score == -1.0);
  CHECK(one[1].score == 1.0);

  const auto c = Set({0.3, 0.9, -0.4});
  const auto same = Fuse({c, c}, half);
  const auto single = Fuse({c}, std::vector<double>{1.0});
  for (size_t i = 0; i < 3; ++i) CHECK(same[i].score == Approx(single[i].score));

  // A constant set normalizes to zero.
  const auto flat = Fuse({Set({2.0, 2.0})}, std::vector<double>{1.0});
  CHECK(flat[0].score == 0.0);

  CHECK_THROWS_AS(Fuse({a, b}, std::vector<double>{0.5, 0.6}), WeightError);
  CHECK_THROWS_AS(Fuse({a, b}, std::vector<double>{1.0}), WeightError);
  CHECK_THROWS_AS(Fuse({a, Set({1.0})}, half), TrialMismatchError);
  auto renamed = b;
  renamed[1].test_id = "zz";
  CHECK_THROWS_AS(Fuse({a, renamed}, half), TrialMismatchError);

  // Key order of later sets does not matter.
  auto reversed = b;
  std::swap(reversed[0], reversed[1]);
  const auto f2 = Fuse({a, reversed}, half);
  CHECK(f2[0].score == fused[0].score);
  CHECK(f2[1].score == fused[1].score);
}

std::vector<Trial> Labels(const std::vector<ScoreRecord>& s, const std::vector<bool>& tgt) {
  std::vector<Trial> t;
  for (size_t i = 0; i < s.size(); ++i)
    t.push_back({s[i].enroll_id, s[i].test_id, tgt[i] ? Label::kTarget : Label::kNontarget});
  return t;
}

TEST_CASE("search fusion weights") {
  const auto a = Set({0.9, 0.8, 0.1, 0.2, 0.7, 0.05});
  const std::vector<bool> tgt{true, true, false, false, true, false};
  const auto trials = Labels(a, tgt);
  CHECK(SearchFusionWeights({a}, trials, {}, 0.1) == std::vector<double>{1.0});
  const auto w = SearchFusionWeights({a, a}, trials, {}, 0.1);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == Approx(0.5));
  CHECK(w[1] == Approx(0.5));
  CHECK_THROWS_AS(SearchFusionWeights({a}, trials, {}, 0.0), ParamError);
}

TEST_CASE("join labels") {
  const auto a = Set({0.9, 0.1});
  const LabeledScores ls = JoinLabels(a, Labels(a, {true, false}));
  CHECK(ls.target == std::vector<double>{0.9});
  CHECK(ls.nontarget == std::vector<double>{0.1});
  CHECK_THROWS_AS(JoinLabels(a, Labels(Set({0.0}), {true})), TrialMismatchError);
}

TEST_CASE("average enrollment") {
  EmbeddingStore store(2);
  store.Add({"u1", {2, 0}});
  store.Add({"u2", {0, 2}});
  store.Add({"v1", {0.1, 0.7}});
  const auto avg = AverageEnrollment(store, {{"A", {"u1", "u2"}}, {"B", {"v1"}},
                                             {"C", {"v1", "v1", "v1"}}});
  CHECK(avg.Get("A").vector == std::vector<double>{1, 1});
  CHECK(avg.Get("B").vector == store.Get("v1").vector);
  CHECK(avg.Get("C").vector == store.Get("v1").vector);
  CHECK_THROWS_AS(AverageEnrollment(store, {{"A", {}}}), EmptyEnrollmentError);
  CHECK_THROWS_AS(AverageEnrollment(store, {{"A", {"nope"}}}), MissingIdError);
}

UtteranceManifest SyntheticManifest(int speakers, int per_speaker, uint64_t seed) {
  Rng rng(seed);
  UtteranceManifest m;
  for (int s = 0; s < speakers; ++s)
    for (int u = 0; u < per_speaker; ++u) {
      const std::string id = "s" + std::to_string(s) + "_u" + std::to_string(u);
      m.push_back({id, "s" + std::to_string(s), "speech", UniformReal(rng, 1.0, 20.0),
                   "/x/" + id + ".wav"});
    }
  return m;
}

TEST_CASE("calibration trials") {
  const auto tiny = SyntheticManifest(2, 2, 1);
  const auto t = BuildCalibrationTrials(tiny, 2, 0.5, 3);
  REQUIRE(t.size() == 2);
  int targets = 0;
  for (const Trial& x : t) targets += *x.label == Label::kTarget;
  CHECK(targets == 1);
  CHECK(BuildCalibrationTrials(tiny, 2, 0.5, 3) == t);
  CHECK_THROWS_AS(BuildCalibrationTrials(tiny, 20, 0.5, 3), InfeasibleSamplingError);

  const auto big = SyntheticManifest(200, 20, 2);
  const auto trials = BuildCalibrationTrials(big, 30000, 0.5, 5);
  REQUIRE(trials.size() == 30000);
  std::map<std::string, std::string> spk;
  for (const Utterance& u : big) spk[u.utt_id] = u.speaker_id;
  std::set<std::pair<std::string, std::string>> seen;
  int n_target = 0;
  for (const Trial& x : trials) {
    CHECK(x.enroll_id != x.test_id);
    const bool same = spk.at(x.enroll_id) == spk.at(x.test_id);
    CHECK(same == (*x.label == Label::kTarget));
    n_target += same;
    auto key = std::minmax(x.enroll_id, x.test_id);
    CHECK(seen.insert({key.first, key.second}).second);
  }
  CHECK(n_target == 15000);
}

TEST_CASE("parallel scoring matches serial scoring") {
  Rng rng(8);
  EmbeddingStore store(8);
  for (int i = 0; i < 40; ++i) {
    std::vector<double> v(8);
    for (double& x : v) x = StandardNormal(rng);
    store.Add({"u" + std::to_string(i), v});
  }
  std::vector<Trial> trials;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; j += 3)
      trials.push_back({"u" + std::to_string(i), "u" + std::to_string(j), std::nullopt});
  const auto serial = ScoreTrials(store, trials, 1);
  CHECK(ScoreTrials(store, trials, 4) == serial);
  Cohort cohort{EmbeddingStore(8)};
  for (int i = 0; i < 10; ++i) cohort.means.Add({"c" + std::to_string(i), store.records()[i].vector});
  CHECK(AsNormScores(store, serial, cohort, {5}, 1) == AsNormScores(store, serial, cohort, {5}, 3));
  for (size_t i = 0; i < trials.size(); ++i) CHECK(serial[i].enroll_id == trials[i].enroll_id);
}

}  // namespace
}  // namespace svbench
