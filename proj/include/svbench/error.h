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

#ifndef SVBENCH_ERROR_H_
#define SVBENCH_ERROR_H_

#include <stdexcept>
#include <string>

namespace svbench {

// Base class of every domain error raised by the library. The CLI maps these
// to exit code 1; anything else that escapes is a bug.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define SVBENCH_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
  }

SVBENCH_DEFINE_ERROR(IoError);
SVBENCH_DEFINE_ERROR(DuplicateIdError);
SVBENCH_DEFINE_ERROR(TruncationError);
SVBENCH_DEFINE_ERROR(MissingIdError);
SVBENCH_DEFINE_ERROR(DimensionError);
SVBENCH_DEFINE_ERROR(EmptyClassError);
SVBENCH_DEFINE_ERROR(DegenerateEmbeddingError);
SVBENCH_DEFINE_ERROR(DegenerateCohortError);
SVBENCH_DEFINE_ERROR(SingleClassError);
SVBENCH_DEFINE_ERROR(ConvergenceError);
SVBENCH_DEFINE_ERROR(TrialMismatchError);
SVBENCH_DEFINE_ERROR(WeightError);
SVBENCH_DEFINE_ERROR(EmptyEnrollmentError);
SVBENCH_DEFINE_ERROR(InfeasibleSamplingError);
SVBENCH_DEFINE_ERROR(ParamError);
SVBENCH_DEFINE_ERROR(DegenerateNoiseError);
SVBENCH_DEFINE_ERROR(DegenerateSignalError);
SVBENCH_DEFINE_ERROR(InputTooShortError);
SVBENCH_DEFINE_ERROR(DivergenceError);

#undef SVBENCH_DEFINE_ERROR

// Malformed input text or binary. Carries the 1-based line number for text
// formats (0 when not applicable).
class FormatError : public Error {
 public:
  FormatError(const std::string& what, size_t line = 0)
      : Error("FormatError: " +
              (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
              what),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

}  // namespace svbench

#endif  // SVBENCH_ERROR_H_
