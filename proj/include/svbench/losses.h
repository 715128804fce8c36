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

#ifndef SVBENCH_LOSSES_H_
#define SVBENCH_LOSSES_H_

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace svbench {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// B x N cosines between embeddings and class centers, one label per row.
struct CosineLogitBatch {
  Matrix cosines;
  std::vector<int> labels;
};

// B x (N * K) cosines; column n * K + k holds sub-center k of class n.
struct SubCenterLogitBatch {
  Matrix cosines;
  std::vector<int> labels;
  int subcenters = 1;
};

struct LossParams {
  double scale = 32.0;
  double margin = 0.2;       // AM / AAM target margin
  double hem_margin = 0.1;   // extra angular margin on hard non-targets
  int topk_k = 5;
  double topk_margin = 0.06;
  int subcenters = 3;        // used by LossKind::kSubCenterAam
};

// Mean cross-entropy over the batch and its gradient with respect to every
// input cosine.
struct LossOutput {
  double loss = 0.0;
  Matrix grad;
};

// Angles are taken as acos(x) with x clamped to this magnitude; derivatives
// of margin terms are evaluated at the clamped point.
inline constexpr double kCosineClamp = 1.0 - 1e-12;

// Target logit s (cos - m), non-targets s cos.
LossOutput AmLoss(const CosineLogitBatch& batch, const LossParams& params);

// Target logit s cos(theta + m), non-targets s cos.
LossOutput AamLoss(const CosineLogitBatch& batch, const LossParams& params);

// AAM, plus the topk_k largest non-target cosines of each row (ties to the
// lower class index) become s cos(theta - topk_margin). Throws ParamError
// unless topk_k < N.
LossOutput InterTopKLoss(const CosineLogitBatch& batch, const LossParams& params);

// Hard-example-mining loss. Target logit s cos(theta_y + m); a non-target
// whose cosine exceeds cos(theta_y + m) becomes s cos(theta_j - m'),
// otherwise stays s cos(theta_j). The selection is held fixed when
// differentiating.
LossOutput HemLoss(const CosineLogitBatch& batch, const LossParams& params);

struct SubCenterReduction {
  CosineLogitBatch batch;
  std::vector<int> argmax;  // B * N, selected sub-center (first on ties)
};

SubCenterReduction SubCenterReduce(const SubCenterLogitBatch& batch);

// Routes a B x N gradient back to B x (N * K); unselected sub-centers get 0.
Matrix SubCenterExpandGrad(const Matrix& grad, const std::vector<int>& argmax,
                           int subcenters);

enum class LossKind { kAm, kAam, kSubCenterAam, kInterTopK, kHem };

const char* LossKindName(LossKind kind);
// Accepts the names LossKindName produces; throws ParamError otherwise.
LossKind ParseLossKind(const std::string& name);

// Sub-centers per class implied by the kind (params.subcenters for
// kSubCenterAam, else 1).
int SubCentersFor(LossKind kind, const LossParams& params);

// Dispatch on kind over a plain batch. kSubCenterAam is treated as AAM here;
// sub-center reduction happens in LossFromEmbeddings.
LossOutput ComputeLoss(LossKind kind, const CosineLogitBatch& batch,
                       const LossParams& params);

struct EmbeddingLossOutput {
  double loss = 0.0;
  Matrix embedding_grad;  // B x D
  Matrix center_grad;     // (N * K) x D
};

// Row-normalizes embeddings and centers, forms cosines, applies the loss and
// chains the gradient back through the normalization. `centers` has N * K
// rows with K = SubCentersFor(kind, params). Throws
// DegenerateEmbeddingError on a zero-norm row.
EmbeddingLossOutput LossFromEmbeddings(const Matrix& embeddings,
                                       const Matrix& centers,
                                       std::span<const int> labels,
                                       const LossParams& params, LossKind kind);

}  // namespace svbench

#endif  // SVBENCH_LOSSES_H_
