// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/completion_parser.hpp"

#include <optional>

namespace codedst {

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kSyntax: return "syntax";
    case RejectReason::kUnknownDomain: return "unknown-domain";
    case RejectReason::kUnknownSlot: return "unknown-slot";
    case RejectReason::kBadValue: return "bad-value";
    case RejectReason::kBadReference: return "bad-reference";
  }
  return "syntax";
}

namespace {

struct Reject {
  Rejection rejection;
};

bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

class Parser {
 public:
  Parser(std::string_view text, const CanonicalSchema& schema) : text_(text), schema_(schema) {}

  StateChange program() {
    StateChange delta;
    while (true) {
      skip_blanks();
      if (at_end()) break;
      if (peek() == '\n' || peek() == ';') {
        ++pos_;
        continue;
      }
      statement(delta);
      skip_blanks();
      if (at_end()) break;
      if (peek() != '\n' && peek() != ';') fail(RejectReason::kSyntax, pos_, pos_ + 1, "expected end of statement");
    }
    return delta;
  }

 private:
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }

  [[noreturn]] void fail(RejectReason reason, std::size_t begin, std::size_t end, std::string message) const {
    throw Reject{Rejection{reason, begin, std::min(end, text_.size()), std::move(message)}};
  }

  // Spaces inside a statement; newlines separate statements.
  void skip_blanks() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos_;
  }

  // Inside an argument list newlines are plain whitespace.
  void skip_space() {
    while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\r' || peek() == '\n')) ++pos_;
  }

  void expect(char c) {
    if (peek() != c) fail(RejectReason::kSyntax, pos_, pos_ + 1, std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string_view identifier() {
    const auto begin = pos_;
    if (!is_ident_start(peek())) fail(RejectReason::kSyntax, pos_, pos_ + 1, "expected identifier");
    while (!at_end() && is_ident_char(peek())) ++pos_;
    return text_.substr(begin, pos_ - begin);
  }

  void statement(StateChange& delta) {
    const auto begin = pos_;
    const auto head = identifier();
    if (head == "pass") return;
    if (head != "state") fail(RejectReason::kSyntax, begin, pos_, "expected 'state' or 'pass'");
    skip_blanks();
    expect('.');
    skip_blanks();
    const auto domain_begin = pos_;
    const std::string domain(identifier());
    if (schema_.find_domain(domain) == nullptr) {
      fail(RejectReason::kUnknownDomain, domain_begin, pos_, "unknown domain '" + domain + "'");
    }
    skip_blanks();
    expect('=');
    skip_blanks();
    const auto call_begin = pos_;
    const auto call = identifier();
    for (char c : call) {
      if (!((c >= 'a' && c <= 'z') || c == '_')) {
        fail(RejectReason::kSyntax, call_begin, pos_, "call name must match [a-z_]+");
      }
    }
    skip_blanks();
    expect('(');
    while (true) {
      skip_space();
      if (peek() == ')') break;
      argument(domain, delta);
      skip_space();
      if (peek() == ',') {
        ++pos_;
        continue;
      }
      if (peek() != ')') fail(RejectReason::kSyntax, pos_, pos_ + 1, "expected ',' or ')'");
    }
    ++pos_;
  }

  void argument(const std::string& domain, StateChange& delta) {
    const auto slot_begin = pos_;
    const SlotName slot{domain, std::string(identifier())};
    if (!schema_.contains(slot)) {
      fail(RejectReason::kUnknownSlot, slot_begin, pos_, "unknown slot '" + slot.str() + "'");
    }
    skip_space();
    expect('=');
    skip_space();
    auto value = this->value();
    if (value) {
      delta.set(slot, std::move(*value));
    } else {
      delta.remove(slot);
    }
  }

  // nullopt encodes None (a removal).
  std::optional<SlotValue> value() {
    const auto begin = pos_;
    const char c = peek();
    if (c == '"' || c == '\'') {
      auto text = string_literal();
      if (text.empty()) fail(RejectReason::kBadValue, begin, pos_, "empty string value");
      if (text == kDontCareText) return SlotValue{DontCare{}};
      return SlotValue{Literal{std::move(text)}};
    }
    if (is_digit(c)) {
      while (!at_end() && is_digit(peek())) ++pos_;
      if (!at_end() && is_ident_char(peek())) fail(RejectReason::kBadValue, begin, pos_ + 1, "malformed number");
      return SlotValue{Literal{std::string(text_.substr(begin, pos_ - begin))}};
    }
    if (!is_ident_start(c)) fail(RejectReason::kSyntax, pos_, pos_ + 1, "expected a value");
    const auto word = identifier();
    if (word == "True" || word == "true") return SlotValue{Literal{"yes"}};
    if (word == "False" || word == "false") return SlotValue{Literal{"no"}};
    if (word == "None") return std::nullopt;
    if (word == kDontCareText) return SlotValue{DontCare{}};
    if (word != "state") fail(RejectReason::kBadValue, begin, pos_, "unsupported value '" + std::string(word) + "'");
    skip_blanks();
    expect('.');
    skip_blanks();
    const std::string domain(identifier());
    skip_blanks();
    expect('.');
    skip_blanks();
    const SlotName target{domain, std::string(identifier())};
    if (!schema_.contains(target)) {
      fail(RejectReason::kBadReference, begin, pos_, "reference to unknown slot '" + target.str() + "'");
    }
    return SlotValue{Reference{target}};
  }

  std::string string_literal() {
    const auto begin = pos_;
    const char quote = peek();
    ++pos_;
    std::string out;
    while (true) {
      if (at_end() || peek() == '\n') fail(RejectReason::kSyntax, begin, pos_, "unterminated string");
      const char c = text_[pos_++];
      if (c == quote) break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (at_end()) fail(RejectReason::kSyntax, begin, pos_, "unterminated escape");
      const char e = text_[pos_++];
      switch (e) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: out += e;
      }
    }
    return out;
  }

  std::string_view text_;
  const CanonicalSchema& schema_;
  std::size_t pos_ = 0;
};

}  // namespace

ParseOutcome parse_completion(std::string_view text, const CanonicalSchema& schema) {
  try {
    return Parser(text, schema).program();
  } catch (const Reject& reject) {
    return reject.rejection;
  }
}

const std::vector<std::string>& default_stop_sequences() {
  static const std::vector<std::string> stops = {"\n\n", "#", "print("};
  return stops;
}

std::string strip_at_stops(std::string_view text, const std::vector<std::string>& stops) {
  auto cut = text.size();
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    cut = std::min(cut, text.find(stop));
  }
  return std::string(text.substr(0, cut));
}

std::string strip_at_stops(std::string_view text) { return strip_at_stops(text, default_stop_sequences()); }

}  // namespace codedst
