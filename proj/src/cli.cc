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

#include "svbench/cli.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "svbench/augment.h"
#include "svbench/backend.h"
#include "svbench/datamodel.h"
#include "svbench/error.h"
#include "svbench/metrics.h"
#include "svbench/random.h"
#include "svbench/schedule.h"
#include "svbench/wav.h"

namespace svbench {

namespace {

namespace fs = std::filesystem;

struct Flags {
  std::string emb, trials, cohort, durations, model, policy, out, spk_map,
      enroll_map, manifest, out_dir, wav, config, weights;
  std::vector<std::string> scores;
  std::vector<std::string> features;
  size_t top_n = 600;
  size_t size = 600;
  size_t n_pairs = 30000;
  double target_fraction = 0.5;
  double p_target = 0.01, c_miss = 1.0, c_fa = 1.0;
  double grid_step = 0.1;
  double min_out = 5.0, short_threshold = 2.0;
  int n_mels = 80;
  bool no_cmn = false;
  bool cnsrc = false;
  uint64_t seed = 0;
};

std::vector<Trial> LoadTrialsAuto(const std::string& path) {
  return ParseTrials(path, DetectLabeledTrials(path));
}

std::vector<Trial> LoadLabeledTrials(const std::string& path) {
  return ParseTrials(path, true);
}

DcfParams Dcf(const Flags& f) { return {f.p_target, f.c_miss, f.c_fa}; }

std::vector<double> ParseWeights(const std::string& spec) {
  std::string text = spec;
  if (fs::is_regular_file(spec)) {
    std::ifstream is(spec);
    std::getline(is, text);
  }
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) w.push_back(ParseDouble(item));
  if (w.empty()) throw WeightError("no weights given");
  return w;
}

std::string JoinWeights(const std::vector<double>& w) {
  std::string s;
  for (size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + FormatDouble(w[i]);
  return s;
}

// Enrollment-averaged speaker vectors merged with the utterance store, so
// trials may reference either.
EmbeddingStore WithEnrollment(const EmbeddingStore& store, const std::string& map_path) {
  EmbeddingStore merged = AverageEnrollment(store, ReadListMap(map_path));
  for (const Embedding& e : store.records()) merged.Add(e);
  return merged;
}

std::vector<fs::path> WavFiles(const std::string& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw IoError("'" + dir + "' is not a directory");
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav files in '" + dir + "'");
  return files;
}

void RunAugment(const Flags& f, std::ostream& out) {
  const AugmentPolicy policy = ParsePolicy(ReadKeyValues(f.policy));
  const UtteranceManifest manifest = ReadManifest(f.manifest);
  fs::create_directories(f.out_dir);
  std::map<NoiseType, std::vector<fs::path>> sources;
  auto source = [&](NoiseType t) -> const std::vector<fs::path>& {
    auto it = sources.find(t);
    if (it != sources.end()) return it->second;
    auto dir = policy.noise_dirs.find(t);
    if (dir == policy.noise_dirs.end())
      throw ParamError(std::string("no noise_dir configured for ") + NoiseTypeName(t));
    return sources[t] = WavFiles(dir->second);
  };

  UtteranceManifest result;
  size_t clipped = 0;
  for (const Utterance& u : manifest) {
    Rng rng(StableHash(u.utt_id, f.seed));
    const AugmentDecision d = SampleAugmentation(policy, rng);
    Waveform w = ReadWav(u.path);
    if (d.speed_ratio != 1.0) w = PerturbSpeedPitch(w, d.speed_ratio);
    if (d.noise) {
      const auto& files = source(*d.noise);
      if (*d.noise == NoiseType::kReverb) {
        w = ApplyReverb(w, ReadWav(files[UniformIndex(rng, files.size())].string()));
      } else {
        Waveform noise;
        if (*d.noise == NoiseType::kBabble) {
          // Babble: sum of 3 to 7 speech recordings.
          const size_t talkers = 3 + UniformIndex(rng, 5);
          noise = {std::vector<double>(w.samples.size(), 0.0), w.sample_rate};
          for (size_t k = 0; k < talkers; ++k) {
            Waveform s = Resample(ReadWav(files[UniformIndex(rng, files.size())].string()),
                                  w.sample_rate);
            const auto looped = LoopToLength(s.samples, w.samples.size());
            for (size_t i = 0; i < looped.size(); ++i) noise.samples[i] += looped[i];
          }
        } else {
          noise = Resample(ReadWav(files[UniformIndex(rng, files.size())].string()),
                           w.sample_rate);
        }
        const auto range = policy.snr_db.at(*d.noise);
        MixResult mix = MixNoise(w, noise, UniformReal(rng, range.first, range.second));
        clipped += mix.clipped;
        w = std::move(mix.mixed);
      }
    }
    Utterance o = u;
    o.speaker_id = PerturbedSpeakerId(u.speaker_id, d.speed_ratio, policy.relabel_on_speed);
    if (d.speed_ratio != 1.0) o.utt_id = PerturbedSpeakerId(u.utt_id, d.speed_ratio, true);
    o.path = (fs::path(f.out_dir) / (o.utt_id + ".wav")).string();
    o.duration_s = w.duration_s();
    WriteWav(w, o.path);
    result.push_back(std::move(o));
  }
  WriteManifest(result, f.out);
  out << "augmented " << result.size() << " utterances, " << clipped
      << " samples clipped\n";
}

void RunTrainToy(const Flags& f, std::ostream& out) {
  std::map<std::string, std::string> kv;
  if (!f.config.empty()) kv = ReadKeyValues(f.config);
  const StageConfig s1 = ParseStageConfig(kv, "stage1.", DefaultStage1());
  const StageConfig s2 = ParseStageConfig(kv, "stage2.", DefaultStage2());
  ToyDatasetSpec spec;
  ToyTrainerOptions options;
  for (const auto& [key, value] : kv) {
    if (key.rfind("toy.", 0) != 0) continue;
    const std::string k = key.substr(4);
    const double v = ParseDouble(value);
    if (k == "n_classes") spec.n_classes = static_cast<int>(v);
    else if (k == "dim") spec.dim = static_cast<int>(v);
    else if (k == "samples_per_class") spec.samples_per_class = static_cast<int>(v);
    else if (k == "within_class_std") spec.within_class_std = v;
    else if (k == "data_seed") spec.seed = static_cast<uint64_t>(v);
    else if (k == "embedding_dim") options.embedding_dim = static_cast<int>(v);
    else if (k == "batch_size") options.batch_size = static_cast<int>(v);
    else if (k == "weight_decay") options.weight_decay = v;
    else throw FormatError("unknown toy key '" + key + "'");
  }
  const TrainingReport report = TrainToy(spec, s1, s2, f.seed, options);
  WriteTrainingTable(report, out);
  if (!f.out.empty()) {
    std::ofstream os(f.out);
    if (!os) throw IoError("cannot open '" + f.out + "' for writing");
    WriteTrainingCsv(report, os);
  }
}

void WriteFbank(const Matrix& feats, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  for (Eigen::Index t = 0; t < feats.cols(); ++t) {
    for (Eigen::Index m = 0; m < feats.rows(); ++m)
      os << (m ? " " : "") << FormatDouble(feats(m, t));
    os << '\n';
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  CLI::App app{"Speaker-verification back-end toolkit", "svbench"};
  app.require_subcommand(1);
  Flags f;
  std::function<void()> action;

  auto add = [&](const std::string& name, const std::string& help,
                 std::function<void()> fn) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->callback([&action, fn] { action = fn; });
    return sub;
  };
  auto dcf_flags = [&](CLI::App* sub) {
    sub->add_option("--p-target", f.p_target, "Target prior for DCF")->capture_default_str();
    sub->add_option("--c-miss", f.c_miss, "Miss cost")->capture_default_str();
    sub->add_option("--c-fa", f.c_fa, "False-accept cost")->capture_default_str();
  };
  auto cohort_flags = [&](CLI::App* sub) {
    sub->add_option("--emb", f.emb, "Embedding file")->required();
    sub->add_option("--cohort", f.cohort, "Cohort file (speaker means)")->required();
    sub->add_option("--top-n", f.top_n, "Adaptive cohort subset size")->capture_default_str();
  };

  {
    auto* sub = add("score", "Cosine-score a trial list", [&] {
      EmbeddingStore store = LoadEmbeddings(f.emb);
      if (f.cnsrc && f.enroll_map.empty())
        throw ParamError("--cnsrc needs --enroll-map");
      if (!f.enroll_map.empty()) store = WithEnrollment(store, f.enroll_map);
      WriteScores(ScoreTrials(store, LoadTrialsAuto(f.trials), ThreadCount()), f.out);
    });
    sub->add_option("--emb", f.emb, "Embedding file")->required();
    sub->add_option("--trials", f.trials, "Trial list")->required();
    sub->add_option("--enroll-map", f.enroll_map, "speaker -> utterances, averaged before scoring");
    sub->add_flag("--cnsrc", f.cnsrc, "Multi-utterance enrollment preset (needs --enroll-map)");
    sub->add_option("--out", f.out, "Score file")->required();
  }
  {
    auto* sub = add("norm", "Adaptive score normalization", [&] {
      const EmbeddingStore store = LoadEmbeddings(f.emb);
      const Cohort cohort{LoadEmbeddings(f.cohort)};
      WriteScores(AsNormScores(store, ReadScores(f.scores.at(0)), cohort,
                               {f.top_n}, ThreadCount()),
                  f.out);
    });
    cohort_flags(sub);
    sub->add_option("--scores", f.scores, "Raw score file")->required()->expected(1);
    sub->add_option("--out", f.out, "Normalized score file")->required();
  }
  {
    auto* sub = add("calibrate", "Fit a quality-aware calibration model", [&] {
      const EmbeddingStore store = LoadEmbeddings(f.emb);
      const Cohort cohort{LoadEmbeddings(f.cohort)};
      const auto scores = ReadScores(f.scores.at(0));
      std::map<std::pair<std::string, std::string>, Label> labels;
      for (const Trial& t : LoadLabeledTrials(f.trials))
        labels[{t.enroll_id, t.test_id}] = *t.label;
      std::vector<Label> y;
      for (const ScoreRecord& s : scores) y.push_back(labels.at({s.enroll_id, s.test_id}));
      const auto feats = QmfExtractAll(store, scores, ReadDurations(f.durations),
                                       cohort, {f.top_n}, ThreadCount());
      CalibrationOptions options;
      if (!f.features.empty()) options.features = f.features;
      SaveCalibrationModel(FitCalibration(feats, y, options), f.out);
    });
    cohort_flags(sub);
    sub->add_option("--scores", f.scores, "Scores to calibrate")->required()->expected(1);
    sub->add_option("--trials", f.trials, "Labeled trial list")->required();
    sub->add_option("--qmf-durations", f.durations, "id -> duration (s)")->required();
    sub->add_option("--features", f.features, "Feature subset (comma separated)")->delimiter(',');
    sub->add_option("--out", f.out, "Model file")->required();
  }
  {
    auto* sub = add("apply-calib", "Apply a calibration model", [&] {
      const auto scores = ReadScores(f.scores.at(0));
      if (f.cnsrc) {
        WriteScores(scores, f.out);
        return;
      }
      if (f.emb.empty() || f.cohort.empty() || f.durations.empty() || f.model.empty())
        throw ParamError("apply-calib needs --emb, --cohort, --qmf-durations and --model");
      const EmbeddingStore store = LoadEmbeddings(f.emb);
      const Cohort cohort{LoadEmbeddings(f.cohort)};
      const CalibrationModel model = LoadCalibrationModel(f.model);
      const auto feats = QmfExtractAll(store, scores, ReadDurations(f.durations),
                                       cohort, {f.top_n}, ThreadCount());
      std::vector<ScoreRecord> calibrated;
      for (size_t i = 0; i < scores.size(); ++i)
        calibrated.push_back({scores[i].enroll_id, scores[i].test_id,
                              ApplyCalibration(model, feats[i])});
      WriteScores(calibrated, f.out);
    });
    sub->add_option("--emb", f.emb, "Embedding file");
    sub->add_option("--cohort", f.cohort, "Cohort file");
    sub->add_option("--top-n", f.top_n, "Adaptive cohort subset size")->capture_default_str();
    sub->add_option("--scores", f.scores, "Scores to calibrate")->required()->expected(1);
    sub->add_option("--qmf-durations", f.durations, "id -> duration (s)");
    sub->add_option("--model", f.model, "Model file");
    sub->add_flag("--cnsrc", f.cnsrc, "Skip calibration (copy scores through)");
    sub->add_option("--out", f.out, "Calibrated score file")->required();
  }
  {
    auto* sub = add("fuse", "Weighted sum of z-normalized systems", [&] {
      std::vector<std::vector<ScoreRecord>> sets;
      for (const std::string& p : f.scores) sets.push_back(ReadScores(p));
      WriteScores(Fuse(sets, ParseWeights(f.weights)), f.out);
    });
    sub->add_option("--scores", f.scores, "Score files (comma separated)")->required()->delimiter(',');
    sub->add_option("--weights", f.weights, "Weights (comma list or file)")->required();
    sub->add_option("--out", f.out, "Fused score file")->required();
  }
  {
    auto* sub = add("search-weights", "Grid-search fusion weights on labeled trials", [&] {
      std::vector<std::vector<ScoreRecord>> sets;
      for (const std::string& p : f.scores) sets.push_back(ReadScores(p));
      const auto w = SearchFusionWeights(sets, LoadLabeledTrials(f.trials), Dcf(f), f.grid_step);
      out << JoinWeights(w) << '\n';
      if (!f.out.empty()) {
        std::ofstream os(f.out);
        if (!os) throw IoError("cannot open '" + f.out + "' for writing");
        os << JoinWeights(w) << '\n';
      }
    });
    sub->add_option("--scores", f.scores, "Score files (comma separated)")->required()->delimiter(',');
    sub->add_option("--trials", f.trials, "Labeled trial list")->required();
    sub->add_option("--grid-step", f.grid_step, "Simplex grid resolution")->capture_default_str();
    dcf_flags(sub);
    sub->add_option("--out", f.out, "Weights file");
  }
  {
    auto* sub = add("evaluate", "EER and minDCF of a score file", [&] {
      const LabeledScores ls =
          JoinLabels(ReadScores(f.scores.at(0)), LoadLabeledTrials(f.trials));
      const auto roc = RocPoints(ls);
      const MinDcfResult dcf = MinDcfFromRoc(roc, Dcf(f));
      char line[160];
      std::snprintf(line, sizeof(line), "EER(%%) %.6f  minDCF(p=%g) %.6f @ t=%.6g\n",
                    100.0 * EerFromRoc(roc), f.p_target, dcf.min_dcf, dcf.threshold);
      out << line;
    });
    sub->add_option("--scores", f.scores, "Score file")->required()->expected(1);
    sub->add_option("--trials", f.trials, "Labeled trial list")->required();
    dcf_flags(sub);
  }
  {
    auto* sub = add("cohort", "Build a speaker-mean imposter cohort", [&] {
      const Cohort c = BuildCohort(LoadEmbeddings(f.emb), ReadPairs(f.spk_map), f.size, f.seed);
      SaveEmbeddings(c.means, f.out);
      out << "cohort of " << c.size() << " speakers\n";
    });
    sub->add_option("--emb", f.emb, "Training embeddings")->required();
    sub->add_option("--spk-map", f.spk_map, "utt -> speaker map")->required();
    sub->add_option("--size", f.size, "Maximum cohort size")->capture_default_str();
    sub->add_option("--seed", f.seed, "Subsampling seed")->capture_default_str();
    sub->add_option("--out", f.out, "Cohort file")->required();
  }
  {
    auto* sub = add("enroll-avg", "Average enrollment embeddings per speaker", [&] {
      SaveEmbeddings(AverageEnrollment(LoadEmbeddings(f.emb), ReadListMap(f.enroll_map)), f.out);
    });
    sub->add_option("--emb", f.emb, "Embedding file")->required();
    sub->add_option("--enroll-map", f.enroll_map, "speaker -> utterances")->required();
    sub->add_option("--out", f.out, "Averaged embedding file")->required();
  }
  {
    auto* sub = add("augment", "Apply the online augmentation policy to a manifest",
                    [&] { RunAugment(f, out); });
    sub->add_option("--manifest", f.manifest, "Input manifest")->required();
    sub->add_option("--policy", f.policy, "Policy (key=value)")->required();
    sub->add_option("--out-dir", f.out_dir, "Directory for augmented audio")->required();
    sub->add_option("--seed", f.seed, "Seed")->capture_default_str();
    sub->add_option("--out", f.out, "Output manifest")->required();
  }
  {
    auto* sub = add("fbank", "Log mel filterbank features (one line per frame)", [&] {
      FbankConfig cfg;
      cfg.n_mels = f.n_mels;
      cfg.mean_normalize = !f.no_cmn;
      Waveform w = ReadWav(f.wav);
      WriteFbank(Fbank(w, cfg), f.out);
    });
    sub->add_option("--wav", f.wav, "Input audio")->required();
    sub->add_option("--n-mels", f.n_mels, "Mel bins")->capture_default_str();
    sub->add_flag("--no-cmn", f.no_cmn, "Skip mean normalization");
    sub->add_option("--out", f.out, "Feature text file")->required();
  }
  {
    auto* sub = add("concat-short", "Concatenate short same-speaker, same-genre utterances", [&] {
      const UtteranceManifest in = ReadManifest(f.manifest);
      const UtteranceManifest res = ConcatShortUtterances(in, f.min_out, f.short_threshold);
      WriteManifest(res, f.out);
      out << in.size() << " -> " << res.size() << " utterances\n";
    });
    sub->add_option("--manifest", f.manifest, "Input manifest")->required();
    sub->add_option("--min-out", f.min_out, "Target composite duration (s)")->capture_default_str();
    sub->add_option("--short-threshold", f.short_threshold, "Short utterance bound (s)")
        ->capture_default_str();
    sub->add_option("--out", f.out, "Output manifest")->required();
  }
  {
    auto* sub = add("train-toy", "Two-stage toy training run", [&] { RunTrainToy(f, out); });
    sub->add_option("--config", f.config, "Stage/toy config (key=value)");
    sub->add_option("--seed", f.seed, "Seed")->capture_default_str();
    sub->add_option("--out", f.out, "Per-epoch CSV");
  }
  {
    auto* sub = add("make-calib-trials", "Sample a calibration trial list", [&] {
      WriteTrials(BuildCalibrationTrials(ReadManifest(f.manifest), f.n_pairs,
                                         f.target_fraction, f.seed),
                  f.out);
    });
    sub->add_option("--manifest", f.manifest, "Utterance manifest")->required();
    sub->add_option("--n-pairs", f.n_pairs, "Number of trials")->capture_default_str();
    sub->add_option("--target-fraction", f.target_fraction, "Share of target trials")
        ->capture_default_str();
    sub->add_option("--seed", f.seed, "Seed")->capture_default_str();
    sub->add_option("--out", f.out, "Trial file")->required();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    action();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace svbench
