// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "codedst/schema.hpp"
#include "codedst/state.hpp"

namespace codedst {

/// One retrievable (turn context, state change) pair.
struct Example {
  std::string id;
  TurnContext context;
  StateChange delta;
};

/// "<dialogue id>:<zero-based turn index>".
std::string turn_id(std::string_view dialogue_id, std::size_t turn_index);

/// Selection pool D_train: the sampled dialogues and all their turn examples.
class TrainingPool {
 public:
  TrainingPool() = default;
  /// Throws DataParse on duplicate example ids.
  TrainingPool(std::vector<Dialogue> dialogues, std::vector<Example> examples);

  const std::vector<Dialogue>& dialogues() const { return dialogues_; }
  const std::vector<Example>& examples() const { return examples_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  /// nullptr when absent.
  const Example* find(std::string_view id) const;

 private:
  std::vector<Dialogue> dialogues_;
  std::vector<Example> examples_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

Dialogue parse_dialogue(std::string_view json_line);
/// JSONL, one dialogue per line; blank lines skipped. Throws DataParse.
std::vector<Dialogue> load_dialogues(const std::filesystem::path& path);

/// One example per turn: prev_state is the gold state of the previous turn and
/// the delta is the diff of consecutive gold states. Annotated coreference is
/// used when the turn carries it, otherwise a new free-text or location value
/// equal to another slot's previous value becomes a Reference to that slot.
std::vector<Example> derive_turn_examples(const Dialogue& dialogue, const CanonicalSchema& schema);

/// Samples ceil(fraction * |dialogues|) whole dialogues without replacement.
/// The returned dialogues are ordered by id. fraction must be in (0, 1].
TrainingPool sample_few_shot(const std::vector<Dialogue>& dialogues, double fraction,
                             std::uint64_t seed, const CanonicalSchema& schema);

/// Surface counts of every gold label across all turns of the pool's dialogues.
std::map<SlotName, std::map<std::string, std::size_t>> gold_surface_counts(
    const std::vector<Dialogue>& dialogues);

}  // namespace codedst
