// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codedst/schema.hpp"
#include "codedst/state.hpp"

namespace codedst {

enum class RejectReason { kSyntax, kUnknownDomain, kUnknownSlot, kBadValue, kBadReference };

std::string_view to_string(RejectReason reason);

struct Rejection {
  RejectReason reason = RejectReason::kSyntax;
  std::size_t begin = 0;  // byte span of the offending input
  std::size_t end = 0;
  std::string message;
};

/// Either the parsed state change or why the completion was rejected.
class ParseOutcome {
 public:
  ParseOutcome(StateChange delta) : value_(std::move(delta)) {}  // NOLINT
  ParseOutcome(Rejection rejection) : value_(std::move(rejection)) {}  // NOLINT

  bool parsed() const { return std::holds_alternative<StateChange>(value_); }
  const StateChange& delta() const { return std::get<StateChange>(value_); }
  const Rejection& rejection() const { return std::get<Rejection>(value_); }

 private:
  std::variant<StateChange, Rejection> value_;
};

/// Parses completion text in the update-line grammar:
///
///   program   := { statement ( "\n" | ";" ) }
///   statement := "pass" | "state" "." domain "=" callname "(" [ arg { "," arg } [","] ] ")"
///   arg       := slot "=" value
///   value     := string | integer | True | False | None | dontcare | state.domain.slot
///
/// Booleans become "yes"/"no", None a removal, "dontcare" DontCare. Repeated
/// assignments to a slot keep the last one. Never throws.
ParseOutcome parse_completion(std::string_view text, const CanonicalSchema& schema);

/// The stop sequences sent with every sampling request.
const std::vector<std::string>& default_stop_sequences();

/// Truncates at the earliest occurrence of any stop sequence.
std::string strip_at_stops(std::string_view text, const std::vector<std::string>& stops);
std::string strip_at_stops(std::string_view text);

}  // namespace codedst
