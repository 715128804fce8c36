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

#include "svbench/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "svbench/error.h"

namespace svbench {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void Validate(const LabeledScores& scores) {
  if (scores.target.empty()) throw EmptyClassError("no target scores");
  if (scores.nontarget.empty()) throw EmptyClassError("no nontarget scores");
  for (const auto* v : {&scores.target, &scores.nontarget})
    for (double s : *v)
      if (!std::isfinite(s)) throw FormatError("non-finite score");
}

double DcfNormalizer(const DcfParams& p) {
  return std::min(p.c_miss * p.p_target, p.c_fa * (1.0 - p.p_target));
}

double Cost(const DcfParams& p, double p_miss, double p_fa) {
  return (p.c_miss * p_miss * p.p_target + p.c_fa * p_fa * (1.0 - p.p_target)) /
         DcfNormalizer(p);
}

}  // namespace

void ValidateDcfParams(const DcfParams& params) {
  if (!(params.p_target > 0.0 && params.p_target < 1.0))
    throw ParamError("p_target must lie in (0, 1)");
  if (!(params.c_miss > 0.0) || !(params.c_fa > 0.0))
    throw ParamError("detection costs must be positive");
}

std::vector<RocPoint> RocPoints(const LabeledScores& scores) {
  Validate(scores);
  std::vector<double> tar = scores.target;
  std::vector<double> non = scores.nontarget;
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());

  std::vector<RocPoint> roc;
  roc.reserve(tar.size() + non.size() + 2);
  roc.push_back({-kInf, 0.0, 1.0});
  // Sweep distinct thresholds upward. misses = #target < t,
  // accepted = #nontarget >= t.
  size_t ti = 0, ni = 0;
  while (ti < tar.size() || ni < non.size()) {
    double t;
    if (ni == non.size() || (ti < tar.size() && tar[ti] <= non[ni]))
      t = tar[ti];
    else
      t = non[ni];
    roc.push_back({t, static_cast<double>(ti) / nt,
                   static_cast<double>(non.size() - ni) / nn});
    while (ti < tar.size() && tar[ti] == t) ++ti;
    while (ni < non.size() && non[ni] == t) ++ni;
  }
  roc.push_back({kInf, 1.0, 0.0});
  return roc;
}

double EerFromRoc(const std::vector<RocPoint>& roc) {
  for (size_t i = 0; i < roc.size(); ++i) {
    const double d = roc[i].p_miss - roc[i].p_fa;
    if (d == 0.0) return roc[i].p_miss;
    if (d > 0.0) {
      // roc[0] has d = -1, so i >= 1 here.
      const RocPoint& a = roc[i - 1];
      const RocPoint& b = roc[i];
      const double da = a.p_miss - a.p_fa;
      const double alpha = -da / (d - da);
      return a.p_miss + alpha * (b.p_miss - a.p_miss);
    }
  }
  return 1.0;  // unreachable for a well-formed ROC
}

double Eer(const LabeledScores& scores) { return EerFromRoc(RocPoints(scores)); }

MinDcfResult MinDcfFromRoc(const std::vector<RocPoint>& roc,
                           const DcfParams& params) {
  ValidateDcfParams(params);
  MinDcfResult best{kInf, kInf};
  for (const RocPoint& p : roc) {
    const double c = Cost(params, p.p_miss, p.p_fa);
    if (c < best.min_dcf) best = {c, p.threshold};
  }
  return best;
}

MinDcfResult MinDcf(const LabeledScores& scores, const DcfParams& params) {
  return MinDcfFromRoc(RocPoints(scores), params);
}

double ActualDcf(const LabeledScores& scores, const DcfParams& params,
                 double threshold) {
  Validate(scores);
  ValidateDcfParams(params);
  if (std::isnan(threshold)) throw ParamError("threshold is NaN");
  size_t misses = 0, false_accepts = 0;
  for (double s : scores.target) misses += s < threshold;
  for (double s : scores.nontarget) false_accepts += s >= threshold;
  return Cost(params,
              static_cast<double>(misses) / static_cast<double>(scores.target.size()),
              static_cast<double>(false_accepts) /
                  static_cast<double>(scores.nontarget.size()));
}

double BayesThreshold(const DcfParams& params) {
  ValidateDcfParams(params);
  return std::log(params.c_fa * (1.0 - params.p_target) /
                  (params.c_miss * params.p_target));
}

}  // namespace svbench
