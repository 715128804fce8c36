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

#ifndef SVBENCH_METRICS_H_
#define SVBENCH_METRICS_H_

#include <vector>

namespace svbench {

struct LabeledScores {
  std::vector<double> target;
  std::vector<double> nontarget;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

struct RocPoint {
  double threshold;
  double p_miss;  // fraction of targets scoring < threshold
  double p_fa;    // fraction of nontargets scoring >= threshold
};

// Operating points at -inf, every distinct score (ascending) and +inf.
// Throws EmptyClassError if either class is empty, FormatError on NaN/inf.
std::vector<RocPoint> RocPoints(const LabeledScores& scores);

// Equal error rate in [0, 1]. When p_miss == p_fa is not realized at any
// threshold, linearly interpolates between the two bracketing ROC points.
double Eer(const LabeledScores& scores);
double EerFromRoc(const std::vector<RocPoint>& roc);

struct MinDcfResult {
  double min_dcf;
  double threshold;  // smallest minimizing threshold; may be -inf
};

// Cost normalized by min(c_miss * p_target, c_fa * (1 - p_target)).
MinDcfResult MinDcf(const LabeledScores& scores, const DcfParams& params);
MinDcfResult MinDcfFromRoc(const std::vector<RocPoint>& roc,
                           const DcfParams& params);

double ActualDcf(const LabeledScores& scores, const DcfParams& params,
                 double threshold);

// log(c_fa (1 - p_target) / (c_miss p_target)): the decision threshold for
// scores that are calibrated log-likelihood ratios.
double BayesThreshold(const DcfParams& params);

// Throws ParamError unless p_target in (0, 1) and both costs positive.
void ValidateDcfParams(const DcfParams& params);

}  // namespace svbench

#endif  // SVBENCH_METRICS_H_
