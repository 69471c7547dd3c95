// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/prompt.hpp"

#include <map>

namespace codedst {

namespace {

std::string class_name(std::string_view domain) {
  std::string out;
  bool upper = true;
  for (char c : domain) {
    if (c == '_') {
      upper = true;
      continue;
    }
    out += upper && c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : c;
    upper = false;
  }
  return out;
}

std::string type_hint(const SlotDef& slot) {
  if (slot.categorical) {
    std::string out = "Literal[";
    for (std::size_t i = 0; i < slot.allowed_values.size(); ++i) {
      if (i > 0) out += ", ";
      out += quote(slot.allowed_values[i]);
    }
    return out + "]";
  }
  switch (slot.kind) {
    case ValueKind::kText: return "str";
    case ValueKind::kTime: return "Time";
    case ValueKind::kBoolean: return "bool";
    case ValueKind::kInteger: return "int";
    case ValueKind::kLocation: return "Location";
  }
  return "str";
}

std::string render_value(const SlotValue& value) {
  if (const auto* literal = std::get_if<Literal>(&value)) return quote(literal->text);
  if (const auto* ref = std::get_if<Reference>(&value)) {
    return "state." + ref->target.domain + "." + ref->target.slot;
  }
  return quote(kDontCareText);
}

Example make_formatting_example() {
  Example example;
  example.id = "formatting-example";
  example.context.agent_utt = "";
  example.context.user_utt = "i am looking for a cheap hotel in the north with free parking";
  example.delta.set({"hotel", "area"}, Literal{"north"});
  example.delta.set({"hotel", "parking"}, Literal{"yes"});
  example.delta.set({"hotel", "pricerange"}, Literal{"cheap"});
  return example;
}

}  // namespace

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '"': out += "\\\""; break;
      case '\n': out += "\\n"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

std::string render_task_definition(const CanonicalSchema& schema) {
  if (schema.domains().empty()) return "";
  std::string out = "from typing import Literal\n\nTime = str  # \"hh:mm\"\nLocation = str\n";
  for (const auto& domain : schema.domains()) {
    out += "\n\nclass " + class_name(domain.name) + ":\n";
    if (domain.slots.empty()) out += "    pass\n";
    for (const auto& slot : domain.slots) out += "    " + slot.name + ": " + type_hint(slot) + "\n";
  }
  out += "\n\nclass DialogueState:\n";
  for (const auto& domain : schema.domains()) {
    out += "    " + domain.name + ": " + class_name(domain.name) + "\n";
  }
  return out;
}

std::string render_state_line(const DialogueState& state) {
  std::string out = "state = {";
  bool first = true;
  for (const auto& [slot, value] : state) {
    if (!first) out += ", ";
    out += quote(slot.domain + "_" + slot.slot) + ": " + quote(value);
    first = false;
  }
  return out + "}";
}

std::string render_print_line(std::string_view agent_utt, std::string_view user_utt) {
  std::string out = "print(";
  if (!agent_utt.empty()) out += quote("agent: " + std::string(agent_utt)) + ", ";
  return out + quote("user: " + std::string(user_utt)) + ")";
}

std::string canonicalize_completion(const StateChange& delta) {
  if (delta.empty()) return "pass";
  // domain -> slot -> rendered value; std::map keeps both levels sorted.
  std::map<std::string, std::map<std::string, std::string>> calls;
  for (const auto& [slot, value] : delta.updates()) calls[slot.domain][slot.slot] = render_value(value);
  for (const auto& slot : delta.removals()) calls[slot.domain][slot.slot] = "None";
  std::string out;
  for (const auto& [domain, args] : calls) {
    if (!out.empty()) out += "\n";
    out += "state." + domain + " = update_" + domain + "(";
    bool first = true;
    for (const auto& [name, value] : args) {
      if (!first) out += ", ";
      out += name + "=" + value;
      first = false;
    }
    out += ")";
  }
  return out;
}

RenderedExample render_example_parts(const Example& example) {
  return {render_state_line(example.context.prev_state),
          render_print_line(example.context.agent_utt, example.context.user_utt),
          canonicalize_completion(example.delta)};
}

std::string render_example(const Example& example) {
  const auto parts = render_example_parts(example);
  return parts.state_line + "\n" + parts.print_line + "\n" + parts.update_line;
}

const Example& zero_shot_formatting_example() {
  static const Example example = make_formatting_example();
  return example;
}

namespace {

std::vector<const Example*> or_formatting_example(const std::vector<const Example*>& examples) {
  if (!examples.empty()) return examples;
  return {&zero_shot_formatting_example()};
}

std::string header_block(const CanonicalSchema& schema) {
  auto header = render_task_definition(schema);
  if (!header.empty()) header += "\n\n";
  return header;
}

}  // namespace

std::string build_prompt(const CanonicalSchema& schema, const std::vector<const Example*>& examples,
                         const TurnContext& query) {
  std::string out = header_block(schema);
  for (const auto* example : or_formatting_example(examples)) out += render_example(*example) + "\n\n";
  out += render_state_line(query.prev_state) + "\n";
  out += render_print_line(query.agent_utt, query.user_utt) + "\n";
  return out;
}

std::string build_inverted_prompt(const CanonicalSchema& schema,
                                  const std::vector<const Example*>& examples) {
  std::string out = header_block(schema);
  for (const auto* example : or_formatting_example(examples)) {
    const auto parts = render_example_parts(*example);
    out += parts.update_line + "\n" + parts.state_line + "\n" + parts.print_line + "\n\n";
  }
  return out;
}

PromptBundle build_prompt_bundle(const CanonicalSchema& schema,
                                 const std::vector<const Example*>& examples,
                                 const TurnContext& query) {
  return {build_prompt(schema, examples, query), build_inverted_prompt(schema, examples)};
}

}  // namespace codedst
