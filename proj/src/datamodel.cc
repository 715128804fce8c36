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

#include "svbench/datamodel.h"

#include <bit>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "svbench/error.h"

namespace svbench {

namespace {

bool HasWhitespace(const std::string& s) {
  for (char c : s)
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
        c == '\f')
      return true;
  return false;
}

std::ifstream OpenIn(const std::string& path, bool binary = false) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  return is;
}

std::ofstream OpenOut(const std::string& path, bool binary = false) {
  std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc
                                : std::ios::out | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  return os;
}

void CloseOut(std::ofstream& os, const std::string& path) {
  os.flush();
  if (!os) throw IoError("write failed on '" + path + "'");
}

void PutU32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void PutF64(std::ostream& os, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

// Returns false on a short read.
bool GetBytes(std::istream& is, char* dst, size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  return static_cast<size_t>(is.gcount()) == n;
}

bool GetU32(std::istream& is, uint32_t* v) {
  unsigned char b[4];
  if (!GetBytes(is, reinterpret_cast<char*>(b), 4)) return false;
  *v = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
       static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
  return true;
}

bool GetF64(std::istream& is, double* v) {
  unsigned char b[8];
  if (!GetBytes(is, reinterpret_cast<char*>(b), 8)) return false;
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  *v = std::bit_cast<double>(bits);
  return true;
}

template <typename Fn>
void ForEachLine(std::istream& is, Fn&& fn) {
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    fn(line, lineno);
  }
}

}  // namespace

EmbeddingStore::EmbeddingStore(uint32_t dimension) : dimension_(dimension) {
  if (dimension == 0) throw DimensionError("embedding dimension must be >= 1");
}

void EmbeddingStore::Add(Embedding embedding) {
  if (embedding.id.empty() || HasWhitespace(embedding.id))
    throw FormatError("invalid embedding id '" + embedding.id + "'");
  if (embedding.vector.size() != dimension_)
    throw DimensionError("embedding '" + embedding.id + "' has " +
                         std::to_string(embedding.vector.size()) +
                         " values, store dimension is " +
                         std::to_string(dimension_));
  auto [it, inserted] = index_.emplace(embedding.id, records_.size());
  if (!inserted) throw DuplicateIdError("duplicate id '" + embedding.id + "'");
  records_.push_back(std::move(embedding));
}

bool EmbeddingStore::Contains(const std::string& id) const {
  return index_.count(id) > 0;
}

const Embedding* EmbeddingStore::Find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &records_[it->second];
}

const Embedding& EmbeddingStore::Get(const std::string& id) const {
  const Embedding* e = Find(id);
  if (e == nullptr) throw MissingIdError("id '" + id + "' not in store");
  return *e;
}

EmbeddingStore ReadEmbeddings(std::istream& is) {
  char magic[4];
  uint32_t version = 0, dim = 0, count = 0;
  if (!GetBytes(is, magic, 4) || !GetU32(is, &version) || !GetU32(is, &dim) ||
      !GetU32(is, &count))
    throw FormatError("embedding header shorter than 16 bytes");
  if (std::memcmp(magic, kEmbeddingMagic, 4) != 0)
    throw FormatError("bad embedding magic");
  if (version != kEmbeddingVersion)
    throw FormatError("unsupported embedding version " +
                      std::to_string(version));
  if (dim == 0) throw FormatError("embedding dimension is 0");

  EmbeddingStore store(dim);
  for (uint32_t r = 0; r < count; ++r) {
    uint32_t id_len = 0;
    if (!GetU32(is, &id_len))
      throw TruncationError("record " + std::to_string(r) + ": missing id length");
    Embedding e;
    e.id.resize(id_len);
    if (!GetBytes(is, e.id.data(), id_len))
      throw TruncationError("record " + std::to_string(r) + ": short id");
    e.vector.resize(dim);
    for (uint32_t d = 0; d < dim; ++d)
      if (!GetF64(is, &e.vector[d]))
        throw TruncationError("record '" + e.id + "': expected " +
                              std::to_string(dim) + " values, got " +
                              std::to_string(d));
    if (store.Contains(e.id)) throw DuplicateIdError("duplicate id '" + e.id + "'");
    store.Add(std::move(e));
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after " + std::to_string(count) +
                      " records");
  return store;
}

EmbeddingStore LoadEmbeddings(const std::string& path) {
  std::ifstream is = OpenIn(path, true);
  return ReadEmbeddings(is);
}

void WriteEmbeddings(const EmbeddingStore& store, std::ostream& os) {
  os.write(kEmbeddingMagic, 4);
  PutU32(os, kEmbeddingVersion);
  PutU32(os, store.dimension());
  PutU32(os, static_cast<uint32_t>(store.size()));
  for (const Embedding& e : store.records()) {
    PutU32(os, static_cast<uint32_t>(e.id.size()));
    os.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
    for (double v : e.vector) PutF64(os, v);
  }
}

void SaveEmbeddings(const EmbeddingStore& store, const std::string& path) {
  std::ofstream os = OpenOut(path, true);
  WriteEmbeddings(store, os);
  CloseOut(os, path);
}

const char* LabelName(Label label) {
  return label == Label::kTarget ? "target" : "nontarget";
}

std::vector<std::string> SplitOnSpace(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    size_t pos = line.find(' ', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

std::vector<Trial> ParseTrials(std::istream& is, bool labeled) {
  std::vector<Trial> trials;
  const size_t want = labeled ? 3 : 2;
  ForEachLine(is, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> f = SplitOnSpace(line);
    if (f.size() != want)
      throw FormatError("expected " + std::to_string(want) + " fields, got " +
                            std::to_string(f.size()),
                        lineno);
    for (const std::string& s : f)
      if (s.empty() || HasWhitespace(s))
        throw FormatError("empty or malformed field", lineno);
    Trial t;
    if (labeled) {
      if (f[0] == "target") {
        t.label = Label::kTarget;
      } else if (f[0] == "nontarget") {
        t.label = Label::kNontarget;
      } else {
        throw FormatError("unknown label '" + f[0] + "'", lineno);
      }
    }
    t.enroll_id = f[want - 2];
    t.test_id = f[want - 1];
    trials.push_back(std::move(t));
  });
  return trials;
}

std::vector<Trial> ParseTrials(const std::string& path, bool labeled) {
  std::ifstream is = OpenIn(path);
  return ParseTrials(is, labeled);
}

bool DetectLabeledTrials(const std::string& path) {
  std::ifstream is = OpenIn(path);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) return SplitOnSpace(line).size() == 3;
  return false;
}

void WriteTrials(const std::vector<Trial>& trials, std::ostream& os) {
  for (const Trial& t : trials) {
    if (t.label) os << LabelName(*t.label) << ' ';
    os << t.enroll_id << ' ' << t.test_id << '\n';
  }
}

void WriteTrials(const std::vector<Trial>& trials, const std::string& path) {
  std::ofstream os = OpenOut(path);
  WriteTrials(trials, os);
  CloseOut(os, path);
}

std::string FormatDouble(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double ParseDouble(const std::string& text, size_t line) {
  if (text.empty()) throw FormatError("empty number", line);
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size())
    throw FormatError("not a number: '" + text + "'", line);
  if (!std::isfinite(v)) throw FormatError("non-finite number '" + text + "'", line);
  return v;
}

std::vector<ScoreRecord> ReadScores(std::istream& is) {
  std::vector<ScoreRecord> scores;
  ForEachLine(is, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> f = SplitOnSpace(line);
    if (f.size() != 3)
      throw FormatError("expected 3 fields, got " + std::to_string(f.size()),
                        lineno);
    scores.push_back({f[0], f[1], ParseDouble(f[2], lineno)});
  });
  return scores;
}

std::vector<ScoreRecord> ReadScores(const std::string& path) {
  std::ifstream is = OpenIn(path);
  return ReadScores(is);
}

void WriteScores(const std::vector<ScoreRecord>& scores, std::ostream& os) {
  for (const ScoreRecord& s : scores) {
    if (!std::isfinite(s.score))
      throw FormatError("non-finite score for " + s.enroll_id + " " +
                        s.test_id);
    os << s.enroll_id << ' ' << s.test_id << ' ' << FormatDouble(s.score)
       << '\n';
  }
}

void WriteScores(const std::vector<ScoreRecord>& scores,
                 const std::string& path) {
  std::ofstream os = OpenOut(path);
  WriteScores(scores, os);
  CloseOut(os, path);
}

UtteranceManifest ReadManifest(std::istream& is) {
  UtteranceManifest manifest;
  std::set<std::string> seen;
  ForEachLine(is, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> f = SplitOnSpace(line);
    if (f.size() != 5)
      throw FormatError("expected 5 fields, got " + std::to_string(f.size()),
                        lineno);
    Utterance u{f[0], f[1], f[2], ParseDouble(f[3], lineno), f[4]};
    if (u.duration_s <= 0.0)
      throw FormatError("duration must be positive", lineno);
    if (!seen.insert(u.utt_id).second)
      throw DuplicateIdError("utterance '" + u.utt_id + "' at line " +
                             std::to_string(lineno));
    manifest.push_back(std::move(u));
  });
  return manifest;
}

UtteranceManifest ReadManifest(const std::string& path) {
  std::ifstream is = OpenIn(path);
  return ReadManifest(is);
}

void WriteManifest(const UtteranceManifest& manifest, std::ostream& os) {
  for (const Utterance& u : manifest)
    os << u.utt_id << ' ' << u.speaker_id << ' ' << u.genre << ' '
       << FormatDouble(u.duration_s) << ' ' << u.path << '\n';
}

void WriteManifest(const UtteranceManifest& manifest, const std::string& path) {
  std::ofstream os = OpenOut(path);
  WriteManifest(manifest, os);
  CloseOut(os, path);
}

std::vector<std::pair<std::string, std::string>> ReadPairs(
    const std::string& path) {
  std::ifstream is = OpenIn(path);
  std::vector<std::pair<std::string, std::string>> pairs;
  ForEachLine(is, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> f = SplitOnSpace(line);
    if (f.size() != 2)
      throw FormatError("expected 2 fields, got " + std::to_string(f.size()),
                        lineno);
    pairs.emplace_back(f[0], f[1]);
  });
  return pairs;
}

std::map<std::string, double> ReadDurations(const std::string& path) {
  std::map<std::string, double> durations;
  for (const auto& [id, text] : ReadPairs(path)) {
    double d = ParseDouble(text);
    if (d <= 0.0) throw FormatError("duration of '" + id + "' must be positive");
    if (!durations.emplace(id, d).second)
      throw DuplicateIdError("duration for '" + id + "' listed twice");
  }
  return durations;
}

std::vector<std::pair<std::string, std::vector<std::string>>> ReadListMap(
    const std::string& path) {
  std::ifstream is = OpenIn(path);
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  ForEachLine(is, [&](const std::string& line, size_t lineno) {
    std::vector<std::string> f = SplitOnSpace(line);
    if (f.size() < 2 || f[0].empty())
      throw FormatError("expected a key followed by at least one value",
                        lineno);
    out.emplace_back(f[0], std::vector<std::string>(f.begin() + 1, f.end()));
  });
  return out;
}

std::map<std::string, std::string> ReadKeyValues(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  size_t lineno = 0;
  auto trim = [](std::string s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (size_t hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("expected key=value", lineno);
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("empty key", lineno);
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> ReadKeyValues(const std::string& path) {
  std::ifstream is = OpenIn(path);
  return ReadKeyValues(is);
}

}  // namespace svbench
