// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/state.hpp"

#include <utility>

#include "codedst/errors.hpp"

namespace codedst {

SlotName SlotName::parse(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos || dash == 0 || dash + 1 == text.size()) {
    throw DataParse("invalid slot name '" + std::string(text) + "'");
  }
  return SlotName{std::string(text.substr(0, dash)), std::string(text.substr(dash + 1))};
}

void StateChange::set(const SlotName& slot, SlotValue value) {
  removals_.erase(slot);
  updates_.insert_or_assign(slot, std::move(value));
}

void StateChange::remove(const SlotName& slot) {
  updates_.erase(slot);
  removals_.insert(slot);
}

std::set<std::string> StateChange::domains() const {
  std::set<std::string> out;
  for (const auto& [slot, value] : updates_) out.insert(slot.domain);
  for (const auto& slot : removals_) out.insert(slot.domain);
  return out;
}

std::set<SlotName> StateChange::slots() const {
  std::set<SlotName> out(removals_.begin(), removals_.end());
  for (const auto& [slot, value] : updates_) out.insert(slot);
  return out;
}

DialogueState apply_state_change(const DialogueState& state, const StateChange& delta) {
  DialogueState next = state;
  for (const auto& slot : delta.removals()) next.erase(slot);
  for (const auto& [slot, value] : delta.updates()) {
    if (const auto* literal = std::get_if<Literal>(&value)) {
      next[slot] = literal->text;
    } else if (const auto* ref = std::get_if<Reference>(&value)) {
      const auto it = state.find(ref->target);
      if (it == state.end()) {
        throw UnresolvableReference(slot.str() + " refers to unset slot " + ref->target.str());
      }
      next[slot] = it->second;
    } else {
      next[slot] = std::string(kDontCareText);
    }
  }
  return next;
}

StateChange diff_states(const DialogueState& prev, const DialogueState& next) {
  StateChange delta;
  for (const auto& [slot, value] : next) {
    const auto it = prev.find(slot);
    if (it != prev.end() && it->second == value) continue;
    if (value == kDontCareText) {
      delta.set(slot, DontCare{});
    } else {
      delta.set(slot, Literal{value});
    }
  }
  for (const auto& [slot, value] : prev) {
    if (!next.contains(slot)) delta.remove(slot);
  }
  return delta;
}

std::string to_string(const SlotValue& value) {
  if (const auto* literal = std::get_if<Literal>(&value)) return literal->text;
  if (const auto* ref = std::get_if<Reference>(&value)) return ref->target.str();
  return std::string(kDontCareText);
}

std::map<SlotName, std::string> substitute_coreferents(const StateChange& delta) {
  std::map<SlotName, std::string> out;
  for (const auto& [slot, value] : delta.updates()) out.emplace(slot, to_string(value));
  return out;
}

double sim_f1(const StateChange& a, const StateChange& b) {
  const auto pairs_of = [](const StateChange& d) {
    std::set<std::pair<SlotName, std::string>> pairs;
    for (auto& [slot, token] : substitute_coreferents(d)) pairs.emplace(slot, std::move(token));
    for (const auto& slot : d.removals()) pairs.emplace(slot, std::string(kDeleteToken));
    return pairs;
  };
  return 0.5 * f1(a.slots(), b.slots()) + 0.5 * f1(pairs_of(a), pairs_of(b));
}

}  // namespace codedst
