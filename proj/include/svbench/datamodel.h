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

#ifndef SVBENCH_DATAMODEL_H_
#define SVBENCH_DATAMODEL_H_

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace svbench {

struct Embedding {
  std::string id;
  std::vector<double> vector;

  bool operator==(const Embedding&) const = default;
};

// Ordered, id-indexed set of fixed-dimension embeddings. Immutable once
// built, so concurrent reads are safe.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(uint32_t dimension);

  // Throws DimensionError on a length mismatch, DuplicateIdError on a
  // repeated id and FormatError on an empty or whitespace-bearing id.
  void Add(Embedding embedding);

  uint32_t dimension() const { return dimension_; }
  size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::vector<Embedding>& records() const { return records_; }

  bool Contains(const std::string& id) const;
  const Embedding* Find(const std::string& id) const;
  // Throws MissingIdError.
  const Embedding& Get(const std::string& id) const;

  bool operator==(const EmbeddingStore& other) const {
    return dimension_ == other.dimension_ && records_ == other.records_;
  }

 private:
  uint32_t dimension_;
  std::vector<Embedding> records_;
  std::unordered_map<std::string, size_t> index_;
};

// Binary layout (little-endian): "SVEB", u32 version (1), u32 dimension,
// u32 record count, then per record u32 id length, id bytes, dimension f64.
inline constexpr char kEmbeddingMagic[4] = {'S', 'V', 'E', 'B'};
inline constexpr uint32_t kEmbeddingVersion = 1;
inline constexpr size_t kEmbeddingHeaderBytes = 16;

EmbeddingStore LoadEmbeddings(const std::string& path);
EmbeddingStore ReadEmbeddings(std::istream& is);
void SaveEmbeddings(const EmbeddingStore& store, const std::string& path);
void WriteEmbeddings(const EmbeddingStore& store, std::ostream& os);

enum class Label { kTarget, kNontarget };

const char* LabelName(Label label);

struct Trial {
  std::string enroll_id;
  std::string test_id;
  std::optional<Label> label;

  bool operator==(const Trial&) const = default;
};

// One trial per nonempty line. Labeled: "<label> <enroll> <test>";
// unlabeled: "<enroll> <test>". Fields are separated by exactly one space.
std::vector<Trial> ParseTrials(std::istream& is, bool labeled);
std::vector<Trial> ParseTrials(const std::string& path, bool labeled);
// Labeled iff the first nonempty line has three fields.
bool DetectLabeledTrials(const std::string& path);
void WriteTrials(const std::vector<Trial>& trials, std::ostream& os);
void WriteTrials(const std::vector<Trial>& trials, const std::string& path);

struct ScoreRecord {
  std::string enroll_id;
  std::string test_id;
  double score = 0.0;

  bool operator==(const ScoreRecord&) const = default;
};

// "<enroll> <test> <score>" with the score at 17 significant digits, which
// round-trips every finite double.
std::vector<ScoreRecord> ReadScores(std::istream& is);
std::vector<ScoreRecord> ReadScores(const std::string& path);
void WriteScores(const std::vector<ScoreRecord>& scores, std::ostream& os);
void WriteScores(const std::vector<ScoreRecord>& scores,
                 const std::string& path);

struct Utterance {
  std::string utt_id;
  std::string speaker_id;
  std::string genre;
  double duration_s = 0.0;
  std::string path;

  bool operator==(const Utterance&) const = default;
};

using UtteranceManifest = std::vector<Utterance>;

// "<utt> <speaker> <genre> <duration_s> <path>". utt ids must be unique and
// durations positive.
UtteranceManifest ReadManifest(std::istream& is);
UtteranceManifest ReadManifest(const std::string& path);
void WriteManifest(const UtteranceManifest& manifest, std::ostream& os);
void WriteManifest(const UtteranceManifest& manifest, const std::string& path);

// Two-column "<key> <value>" text tables (utt2spk, durations) and the
// "<key> <v1> <v2> ..." list form (spk2utt).
std::vector<std::pair<std::string, std::string>> ReadPairs(
    const std::string& path);
std::map<std::string, double> ReadDurations(const std::string& path);
std::vector<std::pair<std::string, std::vector<std::string>>> ReadListMap(
    const std::string& path);

// key=value configuration text; '#' starts a comment. Later keys override
// earlier ones.
std::map<std::string, std::string> ReadKeyValues(std::istream& is);
std::map<std::string, std::string> ReadKeyValues(const std::string& path);

// Formats a double so that strtod() recovers it exactly.
std::string FormatDouble(double value);
// Strict full-string parse; throws FormatError (with line, if given).
double ParseDouble(const std::string& text, size_t line = 0);

std::vector<std::string> SplitOnSpace(const std::string& line);

}  // namespace svbench

#endif  // SVBENCH_DATAMODEL_H_
