// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Code-style prompt rendering. An example is three lines:
//
//   state = {"hotel_area": "east"}
//   print("agent: ...", "user: ...")
//   state.restaurant = update_restaurant(area=state.hotel.area)
//
// The main prompt ends right after the query's print line; the inverted prompt
// lists each example update-line first and ends where a bare update line is
// appended for prior scoring.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "codedst/corpus.hpp"
#include "codedst/schema.hpp"
#include "codedst/state.hpp"

namespace codedst {

/// One class per domain (schema order) plus a DialogueState class. Empty for
/// an empty schema.
std::string render_task_definition(const CanonicalSchema& schema);

/// Double-quoted literal with \\, \" and \n escaped.
std::string quote(std::string_view text);

/// state = {"domain_slot": "value", ...}, entries in slot order.
std::string render_state_line(const DialogueState& state);

/// print("agent: A", "user: U"); the agent part is omitted when A is empty.
std::string render_print_line(std::string_view agent_utt, std::string_view user_utt);

/// One `state.<d> = update_<d>(slot=value, ...)` line per touched domain, or
/// "pass". Arguments sorted by slot; references render as state.<d>.<s>,
/// DontCare as "dontcare", removals as None.
std::string canonicalize_completion(const StateChange& delta);

struct RenderedExample {
  std::string state_line;
  std::string print_line;
  std::string update_line;
};

RenderedExample render_example_parts(const Example& example);

/// state line, print line and update line joined by newlines.
std::string render_example(const Example& example);

/// Fixed demonstration used when no examples are retrieved.
const Example& zero_shot_formatting_example();

/// Examples are rendered in the given order, so the caller places the most
/// relevant one last. An empty list renders the formatting example.
std::string build_prompt(const CanonicalSchema& schema, const std::vector<const Example*>& examples,
                         const TurnContext& query);

std::string build_inverted_prompt(const CanonicalSchema& schema,
                                  const std::vector<const Example*>& examples);

struct PromptBundle {
  std::string main_prompt;
  std::string inverted_prefix;
};

PromptBundle build_prompt_bundle(const CanonicalSchema& schema,
                                 const std::vector<const Example*>& examples,
                                 const TurnContext& query);

}  // namespace codedst
