/*
 * Copyright 2026 The snicsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "snicsim/common.hpp"

#include <cstdio>

namespace snicsim {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidHeaderCombination: return "InvalidHeaderCombination";
    case ErrorCode::TruncatedPacket: return "TruncatedPacket";
    case ErrorCode::BadIcrc: return "BadIcrc";
    case ErrorCode::UnsupportedOpcode: return "UnsupportedOpcode";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::DuplicateQpn: return "DuplicateQpn";
    case ErrorCode::UnknownQpn: return "UnknownQpn";
    case ErrorCode::QueueFull: return "QueueFull";
    case ErrorCode::IndexRegression: return "IndexRegression";
    case ErrorCode::FifoFull: return "FifoFull";
    case ErrorCode::SimDeadlock: return "SimDeadlock";
    case ErrorCode::EventInPast: return "EventInPast";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::VerificationFailed: return "VerificationFailed";
    case ErrorCode::WorkflowError: return "WorkflowError";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string& what) {
  throw Error(code, std::string(error_code_name(code)) + ": " + what);
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace snicsim
