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

#include "svbench/schedule.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "svbench/datamodel.h"
#include "svbench/error.h"
#include "svbench/random.h"

namespace svbench {

StageConfig DefaultStage1() { return StageConfig{}; }

StageConfig DefaultStage2() {
  StageConfig c;
  c.segment_s = 6.0;
  c.margin = 0.5;
  c.scale = 32.0;
  c.epochs = 5;
  c.lr_start = 1e-4;
  c.lr_end = 2.5e-5;
  c.use_speed_perturb = false;
  c.use_intertopk = false;
  return c;
}

void ValidateStage(const StageConfig& c) {
  if (!(c.segment_s > 0.0)) throw ParamError("segment_s must be positive");
  if (!(c.margin >= 0.0)) throw ParamError("margin must be nonnegative");
  if (!(c.scale > 0.0)) throw ParamError("scale must be positive");
  if (c.epochs < 0) throw ParamError("epochs must be nonnegative");
  if (!(c.lr_start > 0.0) || !(c.lr_end > 0.0))
    throw ParamError("learning rates must be positive");
  if (c.lr_end > c.lr_start) throw ParamError("lr_end exceeds lr_start");
  if (c.subcenters < 1) throw ParamError("subcenters must be positive");
}

double LrAt(const StageConfig& config, long step, long total_steps) {
  if (total_steps < 1 || step < 0 || step > total_steps)
    throw ParamError("step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + "]");
  if (step == 0) return config.lr_start;
  if (step == total_steps) return config.lr_end;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return config.lr_start * std::pow(config.lr_end / config.lr_start, frac);
}

LossKind EffectiveLossKind(const StageConfig& config) {
  if (config.use_intertopk &&
      (config.loss_kind == LossKind::kAam || config.loss_kind == LossKind::kSubCenterAam))
    return LossKind::kInterTopK;
  return config.loss_kind;
}

LossParams StageLossParams(const StageConfig& config) {
  LossParams p;
  p.scale = config.scale;
  p.margin = config.margin;
  p.hem_margin = config.hem_margin;
  p.topk_k = config.topk_k;
  p.topk_margin = config.topk_margin;
  p.subcenters = config.subcenters;
  return p;
}

long SegmentFrames(const StageConfig& config, double frame_shift_ms) {
  return std::lround(config.segment_s * 1000.0 / frame_shift_ms);
}

StageConfig ParseStageConfig(const std::map<std::string, std::string>& kv,
                             const std::string& prefix, StageConfig c) {
  auto boolean = [](const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw FormatError("expected a boolean, got '" + v + "'");
  };
  auto integer = [](const std::string& v) {
    const double d = ParseDouble(v);
    if (d != std::floor(d)) throw FormatError("expected an integer, got '" + v + "'");
    return static_cast<int>(d);
  };
  for (const auto& [key, value] : kv) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string k = key.substr(prefix.size());
    if (k == "segment_s") c.segment_s = ParseDouble(value);
    else if (k == "margin") c.margin = ParseDouble(value);
    else if (k == "scale") c.scale = ParseDouble(value);
    else if (k == "epochs") c.epochs = integer(value);
    else if (k == "lr_start") c.lr_start = ParseDouble(value);
    else if (k == "lr_end") c.lr_end = ParseDouble(value);
    else if (k == "use_speed_perturb") c.use_speed_perturb = boolean(value);
    else if (k == "use_intertopk") c.use_intertopk = boolean(value);
    else if (k == "loss_kind") c.loss_kind = ParseLossKind(value);
    else if (k == "topk_k") c.topk_k = integer(value);
    else if (k == "topk_margin") c.topk_margin = ParseDouble(value);
    else if (k == "hem_margin") c.hem_margin = ParseDouble(value);
    else if (k == "subcenters") c.subcenters = integer(value);
    else throw FormatError("unknown stage key '" + key + "'");
  }
  ValidateStage(c);
  return c;
}

void WriteStageConfig(const StageConfig& c, const std::string& prefix,
                      std::ostream& os) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << prefix << "segment_s=" << FormatDouble(c.segment_s) << '\n'
     << prefix << "margin=" << FormatDouble(c.margin) << '\n'
     << prefix << "scale=" << FormatDouble(c.scale) << '\n'
     << prefix << "epochs=" << c.epochs << '\n'
     << prefix << "lr_start=" << FormatDouble(c.lr_start) << '\n'
     << prefix << "lr_end=" << FormatDouble(c.lr_end) << '\n'
     << prefix << "use_speed_perturb=" << b(c.use_speed_perturb) << '\n'
     << prefix << "use_intertopk=" << b(c.use_intertopk) << '\n'
     << prefix << "loss_kind=" << LossKindName(c.loss_kind) << '\n'
     << prefix << "topk_k=" << c.topk_k << '\n'
     << prefix << "topk_margin=" << FormatDouble(c.topk_margin) << '\n'
     << prefix << "hem_margin=" << FormatDouble(c.hem_margin) << '\n'
     << prefix << "subcenters=" << c.subcenters << '\n';
}

namespace {

struct ToyData {
  Matrix features;          // samples x dim
  std::vector<int> labels;  // class index, perturbed copies after originals
  size_t original_count = 0;
  int original_classes = 0;
  int total_classes = 0;
};

ToyData MakeToyData(const ToyDatasetSpec& spec, bool speed_perturb,
                    const ToyTrainerOptions& options) {
  if (spec.n_classes < 2 || spec.dim < 1 || spec.samples_per_class < 1 ||
      !(spec.within_class_std > 0.0))
    throw ParamError("invalid toy dataset spec");
  Rng rng(spec.seed);
  Matrix means(spec.n_classes, spec.dim);
  for (Eigen::Index i = 0; i < means.size(); ++i) means.data()[i] = StandardNormal(rng);

  std::vector<double> extra_ratios;
  if (speed_perturb)
    for (double r : options.speed_ratios)
      if (r != 1.0) extra_ratios.push_back(r);
  std::vector<Eigen::RowVectorXd> offsets;
  for (size_t k = 0; k < extra_ratios.size(); ++k) {
    Eigen::RowVectorXd v(spec.dim);
    for (Eigen::Index d = 0; d < spec.dim; ++d) v(d) = StandardNormal(rng);
    offsets.push_back(v.normalized() * options.perturb_offset);
  }

  ToyData data;
  data.original_classes = spec.n_classes;
  data.total_classes = spec.n_classes * static_cast<int>(1 + extra_ratios.size());
  const size_t base = static_cast<size_t>(spec.n_classes) * spec.samples_per_class;
  data.original_count = base;
  data.features.resize(static_cast<Eigen::Index>(base * (1 + extra_ratios.size())), spec.dim);
  data.labels.resize(static_cast<size_t>(data.features.rows()));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.n_classes; ++c)
    for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
      for (Eigen::Index d = 0; d < spec.dim; ++d)
        data.features(row, d) = means(c, d) + spec.within_class_std * StandardNormal(rng);
      data.labels[static_cast<size_t>(row)] = c;
    }
  for (size_t k = 0; k < extra_ratios.size(); ++k)
    for (size_t i = 0; i < base; ++i, ++row) {
      data.features.row(row) = data.features.row(static_cast<Eigen::Index>(i)) + offsets[k];
      data.labels[static_cast<size_t>(row)] =
          data.labels[i] + spec.n_classes * static_cast<int>(k + 1);
    }
  return data;
}

// Mean of cos(target) - max cos(non-target) over the original samples and
// classes, with the per-class cosine taken as the max over sub-centers.
double MarginStat(const ToyData& data, const Matrix& projection,
                  const Matrix& centers, int subcenters) {
  const Eigen::Index n = data.original_classes;
  const Matrix x = data.features.topRows(static_cast<Eigen::Index>(data.original_count));
  Matrix emb = x * projection.transpose();
  emb = emb.rowwise().normalized();
  Matrix c = centers.topRows(n * subcenters).rowwise().normalized();
  const Matrix cos = emb * c.transpose();
  double sum = 0.0;
  for (Eigen::Index r = 0; r < cos.rows(); ++r) {
    const int y = data.labels[static_cast<size_t>(r)];
    double target = -2.0, other = -2.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = cos.row(r).segment(j * subcenters, subcenters).maxCoeff();
      if (j == y)
        target = v;
      else
        other = std::max(other, v);
    }
    sum += target - other;
  }
  return sum / static_cast<double>(cos.rows());
}

}  // namespace

TrainingReport TrainToy(const ToyDatasetSpec& spec, const StageConfig& stage1,
                        const StageConfig& stage2, uint64_t seed,
                        const ToyTrainerOptions& options) {
  ValidateStage(stage1);
  ValidateStage(stage2);
  if (options.embedding_dim < 1 || options.batch_size < 0)
    throw ParamError("invalid toy trainer options");
  const ToyData data = MakeToyData(spec, stage1.use_speed_perturb, options);
  // Sub-center count is fixed by stage 1, which owns the center matrix.
  const int subcenters = SubCentersFor(EffectiveLossKind(stage1), StageLossParams(stage1));

  Rng rng(seed);
  TrainingReport report;
  report.projection.resize(options.embedding_dim, spec.dim);
  const double init_scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
  for (Eigen::Index i = 0; i < report.projection.size(); ++i)
    report.projection.data()[i] = init_scale * StandardNormal(rng);
  report.centers.resize(data.total_classes * subcenters, options.embedding_dim);
  for (Eigen::Index i = 0; i < report.centers.size(); ++i)
    report.centers.data()[i] = StandardNormal(rng);

  report.initial_margin = MarginStat(data, report.projection, report.centers, subcenters);
  report.stage1_margin = report.initial_margin;
  report.stage2_margin = report.initial_margin;

  int global_epoch = 0;
  auto run_stage = [&](int stage, const StageConfig& cfg) {
    LossKind kind = EffectiveLossKind(cfg);
    // The center layout is fixed; a stage asking for a different sub-center
    // count keeps stage 1's.
    if (SubCentersFor(kind, StageLossParams(cfg)) != subcenters)
      kind = subcenters > 1 ? LossKind::kSubCenterAam : LossKind::kAam;
    LossParams params = StageLossParams(cfg);
    params.subcenters = subcenters;
    const bool all_classes = cfg.use_speed_perturb && stage1.use_speed_perturb;
    const Eigen::Index rows = all_classes ? data.features.rows()
                                          : static_cast<Eigen::Index>(data.original_count);
    const Eigen::Index classes = all_classes ? data.total_classes : data.original_classes;
    const Eigen::Index center_rows = classes * subcenters;
    const size_t batch = options.batch_size == 0 ? static_cast<size_t>(rows)
                                                 : static_cast<size_t>(options.batch_size);
    std::vector<size_t> order(static_cast<size_t>(rows));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int e = 0; e < cfg.epochs; ++e) {
      const double lr = LrAt(cfg, e, std::max(1, cfg.epochs - 1));
      if (batch < order.size())
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[UniformIndex(rng, i)]);
      double loss_sum = 0.0;
      size_t batches = 0;
      for (size_t start = 0; start < order.size(); start += batch) {
        const size_t end = std::min(order.size(), start + batch);
        Matrix x(static_cast<Eigen::Index>(end - start), spec.dim);
        std::vector<int> labels(end - start);
        for (size_t i = start; i < end; ++i) {
          x.row(static_cast<Eigen::Index>(i - start)) =
              data.features.row(static_cast<Eigen::Index>(order[i]));
          labels[i - start] = data.labels[order[i]];
        }
        const Matrix emb = x * report.projection.transpose();
        const Matrix centers = report.centers.topRows(center_rows);
        const EmbeddingLossOutput out =
            LossFromEmbeddings(emb, centers, labels, params, kind);
        if (!std::isfinite(out.loss))
          throw DivergenceError("non-finite loss in stage " + std::to_string(stage) +
                                ", epoch " + std::to_string(e + 1));
        const Matrix grad_w = out.embedding_grad.transpose() * x;
        report.projection -= lr * (grad_w + options.weight_decay * report.projection);
        report.centers.topRows(center_rows) -= lr * out.center_grad;
        loss_sum += out.loss;
        ++batches;
      }
      EpochRecord rec;
      rec.stage = stage;
      rec.epoch = ++global_epoch;
      rec.loss = loss_sum / static_cast<double>(batches);
      rec.lr = lr;
      rec.margin_stat = MarginStat(data, report.projection, report.centers, subcenters);
      if (!std::isfinite(rec.margin_stat))
        throw DivergenceError("non-finite parameters after epoch " +
                              std::to_string(rec.epoch));
      report.epochs.push_back(rec);
    }
  };

  run_stage(1, stage1);
  report.stage1_margin = MarginStat(data, report.projection, report.centers, subcenters);
  run_stage(2, stage2);
  report.stage2_margin = MarginStat(data, report.projection, report.centers, subcenters);
  return report;
}

void WriteTrainingCsv(const TrainingReport& report, std::ostream& os) {
  os << "epoch,loss,lr,margin_stat\n";
  for (const EpochRecord& r : report.epochs)
    os << r.epoch << ',' << FormatDouble(r.loss) << ',' << FormatDouble(r.lr)
       << ',' << FormatDouble(r.margin_stat) << '\n';
}

void WriteTrainingTable(const TrainingReport& report, std::ostream& os) {
  char line[128];
  os << "stage  epoch        loss          lr   margin\n";
  for (const EpochRecord& r : report.epochs) {
    std::snprintf(line, sizeof(line), "%5d  %5d  %10.6f  %10.3e  %7.4f\n",
                  r.stage, r.epoch, r.loss, r.lr, r.margin_stat);
    os << line;
  }
  std::snprintf(line, sizeof(line),
                "margin: initial %.6f  after stage 1 %.6f  after stage 2 %.6f\n",
                report.initial_margin, report.stage1_margin, report.stage2_margin);
  os << line;
}

}  // namespace svbench
