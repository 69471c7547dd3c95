// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "codedst/errors.hpp"
#include "codedst/random.hpp"

namespace codedst {

using nlohmann::json;

std::string turn_id(std::string_view dialogue_id, std::size_t turn_index) {
  return std::string(dialogue_id) + ":" + std::to_string(turn_index);
}

TrainingPool::TrainingPool(std::vector<Dialogue> dialogues, std::vector<Example> examples)
    : dialogues_(std::move(dialogues)), examples_(std::move(examples)) {
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (!by_id_.emplace(examples_[i].id, i).second) {
      throw DataParse("duplicate example id '" + examples_[i].id + "'");
    }
  }
}

const Example* TrainingPool::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &examples_[it->second];
}

Dialogue parse_dialogue(std::string_view json_line) {
  Dialogue dialogue;
  try {
    const auto doc = json::parse(json_line);
    dialogue.id = doc.at("id").get<std::string>();
    if (doc.contains("domains")) {
      for (const auto& d : doc["domains"]) dialogue.domains.insert(d.get<std::string>());
    }
    for (const auto& t : doc.at("turns")) {
      Turn turn;
      turn.agent_utt = t.value("agent", std::string());
      turn.user_utt = t.value("user", std::string());
      for (const auto& [slot, value] : t.at("gold_state").items()) {
        turn.gold_state.emplace(SlotName::parse(slot), value.get<std::string>());
      }
      if (t.contains("coreference")) {
        std::map<SlotName, SlotName> links;
        for (const auto& [slot, target] : t["coreference"].items()) {
          links.emplace(SlotName::parse(slot), SlotName::parse(target.get<std::string>()));
        }
        turn.coreference = std::move(links);
      }
      dialogue.turns.push_back(std::move(turn));
    }
  } catch (const json::exception& e) {
    throw DataParse(std::string("malformed dialogue: ") + e.what());
  }
  if (dialogue.turns.empty()) throw DataParse("dialogue '" + dialogue.id + "' has no turns");
  if (dialogue.domains.empty()) {
    for (const auto& turn : dialogue.turns) {
      for (const auto& [slot, value] : turn.gold_state) dialogue.domains.insert(slot.domain);
    }
  }
  return dialogue;
}

std::vector<Dialogue> load_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataParse("cannot open " + path.string());
  std::vector<Dialogue> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_dialogue(line));
  }
  return out;
}

namespace {

void link_coreferents(const Turn& turn, const DialogueState& prev, const CanonicalSchema& schema,
                      StateChange& delta) {
  std::vector<std::pair<SlotName, SlotName>> links;
  for (const auto& [slot, value] : delta.updates()) {
    const auto* literal = std::get_if<Literal>(&value);
    if (literal == nullptr) continue;
    if (turn.coreference) {
      const auto it = turn.coreference->find(slot);
      if (it == turn.coreference->end()) continue;
      // Only keep annotations that reproduce the gold value when resolved.
      const auto target = prev.find(it->second);
      if (target != prev.end() && target->second == literal->text) links.emplace_back(slot, it->second);
      continue;
    }
    const auto* def = schema.find_slot(slot);
    if (def == nullptr || def->categorical) continue;
    if (def->kind != ValueKind::kText && def->kind != ValueKind::kLocation) continue;
    for (const auto& [other, other_value] : prev) {  // ascending slot order
      if (other != slot && other_value == literal->text) {
        links.emplace_back(slot, other);
        break;
      }
    }
  }
  for (const auto& [slot, target] : links) delta.set(slot, Reference{target});
}

}  // namespace

std::vector<Example> derive_turn_examples(const Dialogue& dialogue, const CanonicalSchema& schema) {
  std::vector<Example> out;
  out.reserve(dialogue.turns.size());
  DialogueState prev;
  for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
    const auto& turn = dialogue.turns[t];
    Example example;
    example.id = turn_id(dialogue.id, t);
    example.context = TurnContext{prev, turn.agent_utt, turn.user_utt};
    example.delta = diff_states(prev, turn.gold_state);
    link_coreferents(turn, prev, schema, example.delta);
    out.push_back(std::move(example));
    prev = turn.gold_state;
  }
  return out;
}

TrainingPool sample_few_shot(const std::vector<Dialogue>& dialogues, double fraction,
                             std::uint64_t seed, const CanonicalSchema& schema) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw PreconditionViolation("few-shot fraction must be in (0, 1]");
  }
  // Guard against 0.05 * 100 evaluating to 5.000000000000001.
  const auto wanted = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(dialogues.size()) - 1e-9));
  std::vector<Dialogue> chosen;
  for (auto index : sample_indices(dialogues.size(), wanted, seed)) chosen.push_back(dialogues[index]);
  std::sort(chosen.begin(), chosen.end(),
            [](const Dialogue& a, const Dialogue& b) { return a.id < b.id; });
  std::vector<Example> examples;
  for (const auto& dialogue : chosen) {
    auto turn_examples = derive_turn_examples(dialogue, schema);
    std::move(turn_examples.begin(), turn_examples.end(), std::back_inserter(examples));
  }
  return TrainingPool(std::move(chosen), std::move(examples));
}

std::map<SlotName, std::map<std::string, std::size_t>> gold_surface_counts(
    const std::vector<Dialogue>& dialogues) {
  std::map<SlotName, std::map<std::string, std::size_t>> counts;
  for (const auto& dialogue : dialogues) {
    for (const auto& turn : dialogue.turns) {
      for (const auto& [slot, value] : turn.gold_state) ++counts[slot][value];
    }
  }
  return counts;
}

}  // namespace codedst
