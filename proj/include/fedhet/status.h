// Copyright 2026 The FedHet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDHET_STATUS_H_
#define FEDHET_STATUS_H_

#include "absl/status/status.h"
#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"

namespace fedhet {

// Error categories surfaced across the library. Each maps to one absl code so
// callers can branch on the code without parsing messages.
//   usage        -> kInvalidArgument
//   config       -> kFailedPrecondition
//   protocol     -> kFailedPrecondition, message prefixed "protocol: "
//   overflow     -> kOutOfRange (log-moment integral is not finite)
//   divergence   -> kAborted (non-finite loss or gradient during training)
//   run aborted  -> kUnavailable (no client ever completed a round)

inline absl::Status UsageError(absl::string_view msg) {
  return absl::InvalidArgumentError(msg);
}

inline absl::Status ConfigError(absl::string_view msg) {
  return absl::FailedPreconditionError(msg);
}

inline absl::Status ProtocolError(absl::string_view msg) {
  return absl::FailedPreconditionError(absl::StrCat("protocol: ", msg));
}

inline absl::Status MomentOverflowError(absl::string_view msg) {
  return absl::OutOfRangeError(absl::StrCat("moment overflow: ", msg));
}

inline absl::Status DivergenceError(absl::string_view msg) {
  return absl::AbortedError(absl::StrCat("training diverged: ", msg));
}

inline absl::Status RunAbortedError(absl::string_view msg) {
  return absl::UnavailableError(absl::StrCat("run aborted: ", msg));
}

inline bool IsMomentOverflow(const absl::Status& s) {
  return s.code() == absl::StatusCode::kOutOfRange;
}

inline bool IsDivergence(const absl::Status& s) {
  return s.code() == absl::StatusCode::kAborted;
}

inline bool IsProtocolError(const absl::Status& s) {
  return s.code() == absl::StatusCode::kFailedPrecondition &&
         absl::StartsWith(s.message(), "protocol: ");
}

}  // namespace fedhet

#endif  // FEDHET_STATUS_H_
