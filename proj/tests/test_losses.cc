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

#include "doctest.h"
#include "svbench/error.h"
#include "svbench/losses.h"
#include "test_util.h"

namespace svbench {
namespace {

using doctest::Approx;
using testing::RandomCosines;
using testing::RandomLabels;

CosineLogitBatch Batch(std::initializer_list<std::initializer_list<double>> rows,
                       std::vector<int> labels) {
  CosineLogitBatch b;
  b.cosines.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) b.cosines(r, c++) = v;
    ++r;
  }
  b.labels = std::move(labels);
  return b;
}

LossParams Plain(double s = 1.0) {
  LossParams p;
  p.scale = s;
  p.margin = 0.0;
  p.hem_margin = 0.0;
  p.topk_margin = 0.0;
  return p;
}

double SoftmaxCe(const Matrix& logits, const std::vector<int>& y) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) sum += std::exp(logits(r, j));
    total += std::log(sum) - logits(r, y[static_cast<size_t>(r)]);
  }
  return total / logits.rows();
}

TEST_CASE("am loss hand example") {
  const auto b = Batch({{1.0, -1.0}}, {0});
  CHECK(AmLoss(b, Plain()).loss == Approx(std::log1p(std::exp(-2.0))).epsilon(1e-14));
}

TEST_CASE("zero margins reduce to softmax cross-entropy") {
  Rng rng(3);
  const auto b = CosineLogitBatch{RandomCosines(rng, 6, 9), RandomLabels(rng, 6, 9)};
  const LossParams p = Plain(32.0);
  const double ce = SoftmaxCe(32.0 * b.cosines, b.labels);
  CHECK(AmLoss(b, p).loss == Approx(ce).epsilon(1e-12));
  const LossOutput aam = AamLoss(b, p);
  CHECK(aam.loss == AmLoss(b, p).loss);
  CHECK(aam.grad == AmLoss(b, p).grad);
  LossParams k = p;
  k.topk_k = 3;
  CHECK(InterTopKLoss(b, k).loss == aam.loss);
  CHECK(HemLoss(b, p).loss == aam.loss);
}

TEST_CASE("am loss is monotone in margin") {
  Rng rng(4);
  const auto b = CosineLogitBatch{RandomCosines(rng, 4, 8), RandomLabels(rng, 4, 8)};
  LossParams p;
  double prev = -1.0;
  for (double m : {0.0, 0.05, 0.1, 0.2, 0.35, 0.5}) {
    p.margin = m;
    const double l = AmLoss(b, p).loss;
    CHECK(l >= prev);
    prev = l;
  }
}

TEST_CASE("single class gives exactly zero") {
  const auto b = Batch({{0.3}, {-0.9}, {1.0}}, {0, 0, 0});
  const LossParams p;
  CHECK(AmLoss(b, p).loss == 0.0);
  CHECK(AamLoss(b, p).loss == 0.0);
  CHECK(HemLoss(b, p).loss == 0.0);
  CHECK(AamLoss(b, p).grad.isZero(0.0));
}

TEST_CASE("hem scalar example") {
  const auto b = Batch({{0.5, 0.9}}, {0});
  LossParams p;
  p.scale = 32.0;
  p.margin = 0.2;
  p.hem_margin = 0.1;
  const double ty = std::acos(0.5), tj = std::acos(0.9);
  REQUIRE(0.9 > std::cos(ty + 0.2));
  const double expect = std::log1p(std::exp(32.0 * (std::cos(tj - 0.1) - std::cos(ty + 0.2))));
  CHECK(HemLoss(b, p).loss == Approx(expect).epsilon(1e-12));
}

TEST_CASE("hem equals aam when the trigger never fires") {
  // Every non-target below cos(theta_y + m).
  const auto b = Batch({{0.9, 0.1, -0.3, 0.5}, {-0.2, 0.95, -0.8, -0.5}}, {0, 1});
  const LossParams p;
  const LossOutput h = HemLoss(b, p), a = AamLoss(b, p);
  CHECK(h.loss == a.loss);
  CHECK(h.grad == a.grad);
}

TEST_CASE("hem can fall below aam for non-targets within m'/2 of zero angle") {
  // cos(theta_j - m') < cos(theta_j) once theta_j < m'/2.
  const auto b = Batch({{0.99, 0.9999}}, {0});
  const LossParams p;
  CHECK(HemLoss(b, p).loss < AamLoss(b, p).loss);
}

TEST_CASE("inter-topk") {
  const auto b = Batch({{0.2, 0.5, 0.5, 0.1, -0.2}}, {0});
  LossParams p;
  p.topk_k = 1;
  // Tie at rank 1 goes to the lower index (class 1).
  LossParams q = p;
  q.topk_margin = 0.0;
  const LossOutput o = InterTopKLoss(b, p);
  CHECK(o.loss > InterTopKLoss(b, q).loss);
  // Only class 1 changes its slope relative to AAM.
  const LossOutput a = AamLoss(b, p);
  CHECK(o.grad(0, 1) != Approx(a.grad(0, 1)));
  p.topk_k = 2;
  CHECK_THROWS_AS(InterTopKLoss(Batch({{0.1, 0.2}}, {0}), p), ParamError);
  p.topk_k = 0;
  CHECK_THROWS_AS(InterTopKLoss(b, p), ParamError);
}

TEST_CASE("sub-center reduction") {
  SubCenterLogitBatch sb;
  sb.cosines.resize(1, 6);
  sb.cosines << 0.2, 0.9, -0.5, 0.3, 0.3, 0.1;
  sb.labels = {0};
  sb.subcenters = 3;
  const SubCenterReduction r = SubCenterReduce(sb);
  CHECK(r.batch.cosines(0, 0) == 0.9);
  CHECK(r.argmax[0] == 1);
  CHECK(r.batch.cosines(0, 1) == 0.3);
  CHECK(r.argmax[1] == 0);  // first index on ties

  Rng rng(6);
  SubCenterLogitBatch one{RandomCosines(rng, 3, 4), {0, 1, 2}, 1};
  CHECK(SubCenterReduce(one).batch.cosines == one.cosines);

  const LossOutput lo = AamLoss(r.batch, LossParams{});
  const Matrix g = SubCenterExpandGrad(lo.grad, r.argmax, 3);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 2) == 0.0);
  CHECK(g(0, 1) == lo.grad(0, 0));
  CHECK(g(0, 4) == 0.0);
  CHECK(g(0, 5) == 0.0);
}

TEST_CASE("cosine-kernel gradients match finite differences") {
  Rng rng(10);
  const LossKind kinds[] = {LossKind::kAm, LossKind::kAam, LossKind::kSubCenterAam,
                            LossKind::kInterTopK, LossKind::kHem};
  for (LossKind kind : kinds) {
    LossParams p;
    const int k = SubCentersFor(kind, p);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix c = RandomCosines(rng, 4, 8 * k);
      const auto y = RandomLabels(rng, 4, 8);
      const testing::GradCheck g = testing::CheckCosineGradient(kind, c, y, p);
      if (g.skipped) continue;
      ++checked;
      CHECK_MESSAGE(g.rel_error <= 1e-5, LossKindName(kind));
    }
    CHECK(checked >= 10);
  }
}

TEST_CASE("loss from embeddings hand example") {
  Matrix e(1, 2), c(2, 2);
  e << 1, 0;
  c << 1, 0, 0, 1;
  const std::vector<int> y{0};
  const auto o = LossFromEmbeddings(e, c, y, Plain(1.0), LossKind::kAam);
  CHECK(o.loss == Approx(std::log1p(std::exp(-1.0))).epsilon(1e-12));
  Matrix zero = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(LossFromEmbeddings(zero, c, y, Plain(), LossKind::kAam),
                  DegenerateEmbeddingError);
}

TEST_CASE("loss from embeddings is scale invariant") {
  Rng rng(12);
  const Matrix e = testing::RandomMatrix(rng, 3, 5);
  const Matrix c = testing::RandomMatrix(rng, 4, 5);
  const std::vector<int> y{0, 3, 1};
  Matrix scaled = e;
  scaled.row(1) *= 7.5;
  const LossParams p;
  CHECK(LossFromEmbeddings(scaled, c, y, p, LossKind::kAam).loss ==
        Approx(LossFromEmbeddings(e, c, y, p, LossKind::kAam).loss).epsilon(1e-12));
}

TEST_CASE("loss from embeddings gradients") {
  Rng rng(13);
  const LossKind kinds[] = {LossKind::kAm, LossKind::kAam, LossKind::kSubCenterAam,
                            LossKind::kInterTopK, LossKind::kHem};
  for (LossKind kind : kinds) {
    LossParams p;
    p.topk_k = 2;
    const int k = SubCentersFor(kind, p);
    int checked = 0;
    for (int trial = 0; trial < 10 && checked < 3; ++trial) {
      const Matrix e = testing::RandomMatrix(rng, 3, 5);
      const Matrix c = testing::RandomMatrix(rng, 4 * k, 5);
      const auto y = RandomLabels(rng, 3, 4);
      bool skipped = false;
      const auto [re, rc] = testing::CheckEmbeddingGradient(kind, e, c, y, p, &skipped);
      if (skipped) continue;
      ++checked;
      CHECK_MESSAGE(re <= 1e-5, LossKindName(kind));
      CHECK_MESSAGE(rc <= 1e-5, LossKindName(kind));
    }
    CHECK(checked >= 1);
  }
}

TEST_CASE("permuting classes permutes the gradient") {
  Rng rng(14);
  const Matrix c = RandomCosines(rng, 3, 6);
  const std::vector<int> y{0, 2, 5};
  const std::vector<int> perm{3, 1, 4, 0, 5, 2};  // new column j holds old perm[j]
  Matrix pc(3, 6);
  for (int j = 0; j < 6; ++j) pc.col(j) = c.col(perm[j]);
  std::vector<int> py;
  for (int v : y) py.push_back(static_cast<int>(std::find(perm.begin(), perm.end(), v) - perm.begin()));
  LossParams p;
  p.topk_k = 2;
  for (LossKind kind : {LossKind::kAm, LossKind::kAam, LossKind::kInterTopK, LossKind::kHem}) {
    const LossOutput a = ComputeLoss(kind, {c, y}, p);
    const LossOutput b = ComputeLoss(kind, {pc, py}, p);
    CHECK(b.loss == Approx(a.loss).epsilon(1e-13));
    for (int j = 0; j < 6; ++j)
      for (int r = 0; r < 3; ++r) CHECK(b.grad(r, j) == Approx(a.grad(r, perm[j])).epsilon(1e-12));
  }
}

TEST_CASE("losses are nonnegative and vanish with large separation") {
  Rng rng(15);
  for (int i = 0; i < 50; ++i) {
    const auto b = CosineLogitBatch{RandomCosines(rng, 4, 8), RandomLabels(rng, 4, 8)};
    LossParams p;
    for (LossKind kind : {LossKind::kAm, LossKind::kAam, LossKind::kInterTopK, LossKind::kHem})
      CHECK(ComputeLoss(kind, b, p).loss >= 0.0);
  }
  const auto b = Batch({{1.0, -1.0, -1.0}}, {0});
  LossParams p;
  p.scale = 200.0;
  CHECK(AamLoss(b, p).loss < 1e-100);
}

TEST_CASE("loss kind names") {
  for (LossKind k : {LossKind::kAm, LossKind::kAam, LossKind::kSubCenterAam,
                     LossKind::kInterTopK, LossKind::kHem})
    CHECK(ParseLossKind(LossKindName(k)) == k);
  CHECK_THROWS_AS(ParseLossKind("softmax"), ParamError);
}

}  // namespace
}  // namespace svbench
