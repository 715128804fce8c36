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

#include "svbench/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "svbench/error.h"

namespace svbench {

namespace {

uint32_t U32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

uint16_t U16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | p[1] << 8);
}

void PutU32(std::ostream& os, uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutU16(std::ostream& os, uint16_t v) {
  os.put(static_cast<char>(v & 0xff));
  os.put(static_cast<char>(v >> 8));
}

}  // namespace

Waveform ReadWav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw FormatError("'" + path + "' is not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  size_t pcm_bytes = 0;
  size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const uint32_t size = U32(&data[pos + 4]);
    const unsigned char* body = &data[pos + 8];
    const size_t avail = data.size() - pos - 8;
    if (std::memcmp(&data[pos], "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw FormatError("short fmt chunk in '" + path + "'");
      format = U16(body);
      channels = U16(body + 2);
      rate = U32(body + 4);
      bits = U16(body + 14);
    } else if (std::memcmp(&data[pos], "data", 4) == 0) {
      pcm = body;
      pcm_bytes = std::min<size_t>(size, avail);
    }
    pos += 8 + size + (size & 1);
  }
  if (format != 1 || bits != 16)
    throw FormatError("'" + path + "' is not 16-bit PCM");
  if (channels == 0 || rate == 0) throw FormatError("bad fmt chunk in '" + path + "'");
  if (pcm == nullptr) throw FormatError("no data chunk in '" + path + "'");

  const size_t frames = pcm_bytes / (2u * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (uint16_t c = 0; c < channels; ++c) {
      const int16_t s = static_cast<int16_t>(U16(pcm + 2 * (f * channels + c)));
      acc += s / 32768.0;
    }
    w.samples[f] = acc / channels;
  }
  return w;
}

void WriteWav(const Waveform& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  const uint32_t data_bytes = static_cast<uint32_t>(w.samples.size() * 2);
  os.write("RIFF", 4);
  PutU32(os, 36 + data_bytes);
  os.write("WAVEfmt ", 8);
  PutU32(os, 16);
  PutU16(os, 1);
  PutU16(os, 1);
  PutU32(os, static_cast<uint32_t>(w.sample_rate));
  PutU32(os, static_cast<uint32_t>(w.sample_rate) * 2);
  PutU16(os, 2);
  PutU16(os, 16);
  os.write("data", 4);
  PutU32(os, data_bytes);
  for (double v : w.samples) {
    const double s = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
    PutU16(os, static_cast<uint16_t>(static_cast<int16_t>(s)));
  }
  os.flush();
  if (!os) throw IoError("write failed on '" + path + "'");
}

}  // namespace svbench
