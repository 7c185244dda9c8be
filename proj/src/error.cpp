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

#include "bartlab/error.hpp"

namespace bartlab {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kVocabTooSmall: return "VocabTooSmall";
    case Errc::kStepOutOfRange: return "StepOutOfRange";
    case Errc::kSpecInfeasible: return "SpecInfeasible";
    case Errc::kSequenceTooLong: return "SequenceTooLong";
    case Errc::kIncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case Errc::kEmptyCorpus: return "EmptyCorpus";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kInvalidId: return "InvalidId";
    case Errc::kFileNotFound: return "FileNotFound";
    case Errc::kMalformedLine: return "MalformedLine";
    case Errc::kMissingField: return "MissingField";
    case Errc::kInsufficientData: return "InsufficientData";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kSummaryTooShort: return "SummaryTooShort";
    case Errc::kAllPadTarget: return "AllPadTarget";
    case Errc::kIoError: return "IoError";
    case Errc::kNonFiniteGradient: return "NonFiniteGradient";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) noexcept {
  switch (code) {
    case Errc::kInvalidConfig:
    case Errc::kVocabTooSmall:
    case Errc::kStepOutOfRange:
    case Errc::kSpecInfeasible:
    case Errc::kSequenceTooLong:
    case Errc::kIncompatibleCheckpoint:
      return ErrorCategory::kConfig;
    case Errc::kNonFiniteGradient:
    case Errc::kNonFiniteLoss:
      return ErrorCategory::kNumerical;
    default:
      return ErrorCategory::kData;
  }
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace bartlab
