// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Dialogue-state data model and the delta algebra over it.

#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace codedst {

/// A (domain, slot) pair, serialized as "domain-slot".
struct SlotName {
  std::string domain;
  std::string slot;

  auto operator<=>(const SlotName&) const = default;
  bool operator==(const SlotName&) const = default;

  std::string str() const { return domain + "-" + slot; }

  /// Splits at the first '-'. Throws DataParse when either side is empty.
  static SlotName parse(std::string_view text);
};

struct Literal {
  std::string text;
  bool operator==(const Literal&) const = default;
};

/// The value of another slot in the pre-update state (linguistic coreference).
struct Reference {
  SlotName target;
  bool operator==(const Reference&) const = default;
};

struct DontCare {
  bool operator==(const DontCare&) const = default;
};

inline constexpr std::string_view kDontCareText = "dontcare";

using SlotValue = std::variant<Literal, Reference, DontCare>;

/// Fully resolved slot-value state y_t.
using DialogueState = std::map<SlotName, std::string>;

/// Updates and removals turning one state into the next. The two sets are kept
/// disjoint by the mutators.
class StateChange {
 public:
  StateChange() = default;

  void set(const SlotName& slot, SlotValue value);
  void remove(const SlotName& slot);

  const std::map<SlotName, SlotValue>& updates() const { return updates_; }
  const std::set<SlotName>& removals() const { return removals_; }

  bool empty() const { return updates_.empty() && removals_.empty(); }

  /// Domains touched by an update or removal, sorted.
  std::set<std::string> domains() const;

  /// Slot names touched by an update or removal.
  std::set<SlotName> slots() const;

  bool operator==(const StateChange&) const = default;

 private:
  std::map<SlotName, SlotValue> updates_;
  std::set<SlotName> removals_;
};

struct TurnContext {
  DialogueState prev_state;
  std::string agent_utt;  // empty for user-initiated first turns
  std::string user_utt;
};

struct Turn {
  std::string agent_utt;
  std::string user_utt;
  DialogueState gold_state;
  /// Annotated coreference (slot -> slot whose value it repeats), when the
  /// corpus provides it for this turn.
  std::optional<std::map<SlotName, SlotName>> coreference;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::set<std::string> domains;
};

/// Removals first, then updates. References resolve against `state` as it was
/// before the delta. Throws UnresolvableReference.
DialogueState apply_state_change(const DialogueState& state, const StateChange& delta);

/// Minimal delta with apply_state_change(prev, diff_states(prev, next)) == next.
/// A "dontcare" value becomes DontCare.
StateChange diff_states(const DialogueState& prev, const DialogueState& next);

/// Delta with every Reference(s) replaced by the token "s" and DontCare by
/// "dontcare". Removals are not part of the result.
std::map<SlotName, std::string> substitute_coreferents(const StateChange& delta);

template <typename T>
double f1(const std::set<T>& a, const std::set<T>& b) {
  if (a.empty() && b.empty()) return 1.0;
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& item : a) common += b.count(item);
  return 2.0 * static_cast<double>(common) / static_cast<double>(a.size() + b.size());
}

inline constexpr std::string_view kDeleteToken = "[DELETE]";

/// Mean of slot-set F1 and (slot, value)-pair F1 after coreference
/// substitution; removals participate as (slot, "[DELETE]").
double sim_f1(const StateChange& a, const StateChange& b);

std::string to_string(const SlotValue& value);

}  // namespace codedst
