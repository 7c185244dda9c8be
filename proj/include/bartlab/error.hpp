// Copyright 2026 The bartlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bartlab {

enum class Errc {
  // configuration / usage
  kInvalidConfig,
  kVocabTooSmall,
  kStepOutOfRange,
  kSpecInfeasible,
  kSequenceTooLong,
  kIncompatibleCheckpoint,
  // data
  kEmptyCorpus,
  kEmptyDataset,
  kInvalidId,
  kFileNotFound,
  kMalformedLine,
  kMissingField,
  kInsufficientData,
  kLengthMismatch,
  kSummaryTooShort,
  kAllPadTarget,
  kIoError,
  // numerics
  kNonFiniteGradient,
  kNonFiniteLoss,
};

enum class ErrorCategory { kConfig, kData, kNumerical };

std::string_view errc_name(Errc code) noexcept;
ErrorCategory errc_category(Errc code) noexcept;

/// Library-wide exception. Every recoverable failure carries one of the
/// Errc codes so callers (mostly the CLI) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
};

[[noreturn]] void fail(Errc code, const std::string& what);

}  // namespace bartlab
