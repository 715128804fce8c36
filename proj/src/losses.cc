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

#include "svbench/losses.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svbench/error.h"

namespace svbench {

namespace {

// A logit that depends only on its own cosine: value and d value / d cos,
// both before scaling by s.
struct Logit {
  double value;
  double slope;
};

// cos(acos(c) + m) = c cos m - sin(theta) sin m.
Logit AddAngle(double c, double m) {
  const double cc = std::clamp(c, -kCosineClamp, kCosineClamp);
  const double sin_theta = std::sqrt(1.0 - cc * cc);
  return {c * std::cos(m) - sin_theta * std::sin(m),
          std::cos(m) + std::sin(m) * cc / sin_theta};
}

// cos(acos(c) - m) = c cos m + sin(theta) sin m.
Logit SubtractAngle(double c, double m) {
  const double cc = std::clamp(c, -kCosineClamp, kCosineClamp);
  const double sin_theta = std::sqrt(1.0 - cc * cc);
  return {c * std::cos(m) + sin_theta * std::sin(m),
          std::cos(m) - std::sin(m) * cc / sin_theta};
}

void ValidateBatch(const CosineLogitBatch& batch, const LossParams& params) {
  const Eigen::Index b = batch.cosines.rows();
  const Eigen::Index n = batch.cosines.cols();
  if (b < 1 || n < 1) throw ParamError("empty cosine batch");
  if (static_cast<Eigen::Index>(batch.labels.size()) != b)
    throw ParamError("label count does not match batch rows");
  for (int y : batch.labels)
    if (y < 0 || y >= n) throw ParamError("label out of range");
  for (Eigen::Index i = 0; i < batch.cosines.size(); ++i) {
    const double c = batch.cosines.data()[i];
    if (!std::isfinite(c) || std::abs(c) > 1.0 + 1e-9)
      throw ParamError("cosine outside [-1, 1]");
  }
  if (!(params.scale > 0.0)) throw ParamError("scale must be positive");
  if (params.margin < 0.0 || params.hem_margin < 0.0 || params.topk_margin < 0.0)
    throw ParamError("margins must be nonnegative");
}

// Mean softmax cross-entropy where fill(row, logits) writes the unscaled
// per-class logits for one row.
template <typename Fill>
LossOutput CrossEntropy(const CosineLogitBatch& batch, double scale, Fill&& fill) {
  const Eigen::Index rows = batch.cosines.rows();
  const Eigen::Index n = batch.cosines.cols();
  LossOutput out;
  out.grad.resize(rows, n);
  std::vector<Logit> logits(static_cast<size_t>(n));
  std::vector<double> z(static_cast<size_t>(n));
  const double inv_b = 1.0 / static_cast<double>(rows);
  double total = 0.0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    fill(r, logits);
    const size_t y = static_cast<size_t>(batch.labels[static_cast<size_t>(r)]);
    double zmax = -std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < z.size(); ++j) {
      z[j] = scale * logits[j].value;
      zmax = std::max(zmax, z[j]);
    }
    double sum = 0.0;
    for (size_t j = 0; j < z.size(); ++j) sum += std::exp(z[j] - zmax);
    // (zmax - z_y) and log(sum) are both >= 0, so the row loss is too.
    total += (zmax - z[y]) + std::log(sum);
    for (size_t j = 0; j < z.size(); ++j) {
      const double p = std::exp(z[j] - zmax) / sum;
      const double dz = p - (j == y ? 1.0 : 0.0);
      out.grad(r, static_cast<Eigen::Index>(j)) =
          dz * scale * logits[j].slope * inv_b;
    }
  }
  out.loss = total * inv_b;
  return out;
}

}  // namespace

LossOutput AmLoss(const CosineLogitBatch& batch, const LossParams& params) {
  ValidateBatch(batch, params);
  return CrossEntropy(batch, params.scale, [&](Eigen::Index r, std::vector<Logit>& l) {
    const int y = batch.labels[static_cast<size_t>(r)];
    for (Eigen::Index j = 0; j < batch.cosines.cols(); ++j) {
      const double c = batch.cosines(r, j);
      l[static_cast<size_t>(j)] = {j == y ? c - params.margin : c, 1.0};
    }
  });
}

LossOutput AamLoss(const CosineLogitBatch& batch, const LossParams& params) {
  ValidateBatch(batch, params);
  return CrossEntropy(batch, params.scale, [&](Eigen::Index r, std::vector<Logit>& l) {
    const int y = batch.labels[static_cast<size_t>(r)];
    for (Eigen::Index j = 0; j < batch.cosines.cols(); ++j) {
      const double c = batch.cosines(r, j);
      l[static_cast<size_t>(j)] = j == y ? AddAngle(c, params.margin) : Logit{c, 1.0};
    }
  });
}

LossOutput InterTopKLoss(const CosineLogitBatch& batch, const LossParams& params) {
  ValidateBatch(batch, params);
  const Eigen::Index n = batch.cosines.cols();
  if (params.topk_k < 1 || params.topk_k >= n)
    throw ParamError("Inter-TopK needs 1 <= k < number of classes");
  std::vector<Eigen::Index> order;
  return CrossEntropy(batch, params.scale, [&](Eigen::Index r, std::vector<Logit>& l) {
    const int y = batch.labels[static_cast<size_t>(r)];
    order.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != y) order.push_back(j);
      l[static_cast<size_t>(j)] = {batch.cosines(r, j), 1.0};
    }
    const auto kth = order.begin() + params.topk_k;
    std::partial_sort(order.begin(), kth, order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        const double ca = batch.cosines(r, a);
                        const double cb = batch.cosines(r, b);
                        return ca > cb || (ca == cb && a < b);
                      });
    for (auto it = order.begin(); it != kth; ++it)
      l[static_cast<size_t>(*it)] =
          SubtractAngle(batch.cosines(r, *it), params.topk_margin);
    l[static_cast<size_t>(y)] = AddAngle(batch.cosines(r, y), params.margin);
  });
}

LossOutput HemLoss(const CosineLogitBatch& batch, const LossParams& params) {
  ValidateBatch(batch, params);
  return CrossEntropy(batch, params.scale, [&](Eigen::Index r, std::vector<Logit>& l) {
    const int y = batch.labels[static_cast<size_t>(r)];
    const Logit target = AddAngle(batch.cosines(r, y), params.margin);
    for (Eigen::Index j = 0; j < batch.cosines.cols(); ++j) {
      const double c = batch.cosines(r, j);
      if (j == y)
        l[static_cast<size_t>(j)] = target;
      else if (c > target.value)
        l[static_cast<size_t>(j)] = SubtractAngle(c, params.hem_margin);
      else
        l[static_cast<size_t>(j)] = {c, 1.0};
    }
  });
}

SubCenterReduction SubCenterReduce(const SubCenterLogitBatch& batch) {
  const int k = batch.subcenters;
  if (k < 1) throw ParamError("sub-center count must be positive");
  if (batch.cosines.cols() % k != 0)
    throw ParamError("column count is not a multiple of the sub-center count");
  const Eigen::Index rows = batch.cosines.rows();
  const Eigen::Index n = batch.cosines.cols() / k;
  SubCenterReduction out;
  out.batch.labels = batch.labels;
  out.batch.cosines.resize(rows, n);
  out.argmax.assign(static_cast<size_t>(rows * n), 0);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < n; ++c) {
      int best = 0;
      double v = batch.cosines(r, c * k);
      for (int s = 1; s < k; ++s)
        if (batch.cosines(r, c * k + s) > v) {
          v = batch.cosines(r, c * k + s);
          best = s;
        }
      out.batch.cosines(r, c) = v;
      out.argmax[static_cast<size_t>(r * n + c)] = best;
    }
  return out;
}

Matrix SubCenterExpandGrad(const Matrix& grad, const std::vector<int>& argmax,
                           int subcenters) {
  const Eigen::Index rows = grad.rows();
  const Eigen::Index n = grad.cols();
  Matrix out = Matrix::Zero(rows, n * subcenters);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      out(r, c * subcenters + argmax[static_cast<size_t>(r * n + c)]) = grad(r, c);
  return out;
}

const char* LossKindName(LossKind kind) {
  switch (kind) {
    case LossKind::kAm: return "am";
    case LossKind::kAam: return "aam";
    case LossKind::kSubCenterAam: return "subcenter-aam";
    case LossKind::kInterTopK: return "intertopk";
    case LossKind::kHem: return "hem";
  }
  return "?";
}

LossKind ParseLossKind(const std::string& name) {
  for (LossKind k : {LossKind::kAm, LossKind::kAam, LossKind::kSubCenterAam,
                     LossKind::kInterTopK, LossKind::kHem})
    if (name == LossKindName(k)) return k;
  throw ParamError("unknown loss kind '" + name + "'");
}

int SubCentersFor(LossKind kind, const LossParams& params) {
  return kind == LossKind::kSubCenterAam ? params.subcenters : 1;
}

LossOutput ComputeLoss(LossKind kind, const CosineLogitBatch& batch,
                       const LossParams& params) {
  switch (kind) {
    case LossKind::kAm: return AmLoss(batch, params);
    case LossKind::kAam:
    case LossKind::kSubCenterAam: return AamLoss(batch, params);
    case LossKind::kInterTopK: return InterTopKLoss(batch, params);
    case LossKind::kHem: return HemLoss(batch, params);
  }
  throw ParamError("unknown loss kind");
}

EmbeddingLossOutput LossFromEmbeddings(const Matrix& embeddings,
                                       const Matrix& centers,
                                       std::span<const int> labels,
                                       const LossParams& params, LossKind kind) {
  const int k = SubCentersFor(kind, params);
  if (embeddings.cols() != centers.cols())
    throw DimensionError("embedding and center dimensions differ");
  if (k < 1 || centers.rows() % k != 0)
    throw ParamError("center rows must be a multiple of the sub-center count");

  auto normalize = [](const Matrix& m, Eigen::VectorXd& norms) {
    norms = m.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
      if (!(norms(i) > 0.0))
        throw DegenerateEmbeddingError("zero-norm row " + std::to_string(i));
    return Matrix(norms.cwiseInverse().asDiagonal() * m);
  };
  Eigen::VectorXd e_norm, c_norm;
  const Matrix e_hat = normalize(embeddings, e_norm);
  const Matrix c_hat = normalize(centers, c_norm);
  Matrix cosines = (e_hat * c_hat.transpose()).cwiseMax(-1.0).cwiseMin(1.0);

  std::vector<int> label_vec(labels.begin(), labels.end());
  Matrix grad_cos;
  double loss;
  if (k > 1) {
    SubCenterReduction red = SubCenterReduce({std::move(cosines), label_vec, k});
    LossOutput lo = ComputeLoss(kind, red.batch, params);
    loss = lo.loss;
    grad_cos = SubCenterExpandGrad(lo.grad, red.argmax, k);
  } else {
    LossOutput lo = ComputeLoss(kind, {std::move(cosines), label_vec}, params);
    loss = lo.loss;
    grad_cos = std::move(lo.grad);
  }

  // d/dx of x/|x| applied to g: (g - x_hat (x_hat . g)) / |x|.
  auto through_norm = [](const Matrix& g, const Matrix& x_hat,
                         const Eigen::VectorXd& norms) {
    const Eigen::VectorXd radial = (g.cwiseProduct(x_hat)).rowwise().sum();
    Matrix out = g - radial.asDiagonal() * x_hat;
    return Matrix(norms.cwiseInverse().asDiagonal() * out);
  };
  EmbeddingLossOutput out;
  out.loss = loss;
  out.embedding_grad = through_norm(grad_cos * c_hat, e_hat, e_norm);
  out.center_grad = through_norm(grad_cos.transpose() * e_hat, c_hat, c_norm);
  return out;
}

}  // namespace svbench
