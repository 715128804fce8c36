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

#ifndef SVBENCH_WAV_H_
#define SVBENCH_WAV_H_

#include <string>

#include "svbench/augment.h"

namespace svbench {

// 16-bit PCM mono RIFF/WAVE. Multi-channel input is downmixed by averaging.
Waveform ReadWav(const std::string& path);
// Samples are rounded to the nearest 16-bit level and clipped to its range.
void WriteWav(const Waveform& w, const std::string& path);

}  // namespace svbench

#endif  // SVBENCH_WAV_H_
