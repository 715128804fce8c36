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

#ifndef SVBENCH_SCHEDULE_H_
#define SVBENCH_SCHEDULE_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "svbench/losses.h"

namespace svbench {

struct StageConfig {
  double segment_s = 2.0;
  double margin = 0.2;
  double scale = 32.0;
  int epochs = 150;
  double lr_start = 0.1;
  double lr_end = 1e-5;
  bool use_speed_perturb = true;
  bool use_intertopk = true;
  LossKind loss_kind = LossKind::kAam;
  int topk_k = 5;
  double topk_margin = 0.06;
  double hem_margin = 0.1;
  int subcenters = 3;

  bool operator==(const StageConfig&) const = default;
};

// Initial training: 2 s segments, AAM m 0.2 s 32, Inter-TopK (m 0.06, k 5),
// 150 epochs, lr 0.1 -> 1e-5, speed perturbation on.
StageConfig DefaultStage1();
// Large-margin fine-tuning: 6 s segments, m 0.5, 5 epochs, lr 1e-4 ->
// 2.5e-5, speed perturbation and Inter-TopK off.
StageConfig DefaultStage2();

// Throws ParamError on nonsensical values (e.g. lr_end > lr_start).
void ValidateStage(const StageConfig& config);

// lr_start * (lr_end / lr_start)^(step / total_steps); both endpoints are
// returned exactly. Throws ParamError unless 0 <= step <= total_steps and
// total_steps >= 1.
double LrAt(const StageConfig& config, long step, long total_steps);

// Inter-TopK replaces the AAM head when enabled.
LossKind EffectiveLossKind(const StageConfig& config);
LossParams StageLossParams(const StageConfig& config);

// Frames kept per training segment at the given frame shift.
long SegmentFrames(const StageConfig& config, double frame_shift_ms = 10.0);

// Reads "<prefix><key>=value" entries over `defaults`.
StageConfig ParseStageConfig(const std::map<std::string, std::string>& kv,
                             const std::string& prefix, StageConfig defaults);
void WriteStageConfig(const StageConfig& config, const std::string& prefix,
                      std::ostream& os);

struct ToyDatasetSpec {
  int n_classes = 10;
  int dim = 32;
  int samples_per_class = 20;
  double within_class_std = 0.3;
  uint64_t seed = 0;
};

struct ToyTrainerOptions {
  int embedding_dim = 16;
  int batch_size = 0;  // 0 = full batch
  double weight_decay = 0.0;
  // Offset magnitude separating a speed-perturbed copy from its source.
  double perturb_offset = 1.0;
  std::vector<double> speed_ratios{0.9, 1.0, 1.1};
};

struct EpochRecord {
  int stage = 1;
  int epoch = 0;  // 1-based, counted across both stages
  double loss = 0.0;
  double lr = 0.0;
  double margin_stat = 0.0;
};

struct TrainingReport {
  std::vector<EpochRecord> epochs;
  // Mean over the original samples of cos(target) - max cos(non-target),
  // original classes only.
  double initial_margin = 0.0;
  double stage1_margin = 0.0;
  double stage2_margin = 0.0;
  Matrix projection;  // embedding_dim x dim
  Matrix centers;     // (classes * subcenters) x embedding_dim
};

// Trains a linear embedding head plus class centers on synthetic Gaussian
// classes with plain gradient descent, stage 1 then stage 2. Speed
// perturbation adds one offset copy of every class per non-unit ratio;
// those classes are dropped (and their centers frozen) in a stage that
// disables it. Deterministic for fixed inputs. Throws DivergenceError on a
// non-finite loss.
TrainingReport TrainToy(const ToyDatasetSpec& data, const StageConfig& stage1,
                        const StageConfig& stage2, uint64_t seed,
                        const ToyTrainerOptions& options = {});

// "epoch,loss,lr,margin_stat" header plus one line per epoch.
void WriteTrainingCsv(const TrainingReport& report, std::ostream& os);
void WriteTrainingTable(const TrainingReport& report, std::ostream& os);

}  // namespace svbench

#endif  // SVBENCH_SCHEDULE_H_
