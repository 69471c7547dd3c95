// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Exact cosine retrieval over pool examples, diverse (MMR-style) example
// selection, label-diversity diagnostics and contrastive pair mining.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codedst/corpus.hpp"
#include "codedst/state.hpp"

namespace codedst {

class EmbeddingTable;

/// "[state] d-s=v; d-s=v [system] A [user] U", state entries in slot order.
std::string encode_context_text(const TurnContext& context);

struct ScoredId {
  std::string id;
  double score = 0.0;
};

struct SelectedExample {
  std::string id;
  double relevance = 0.0;  // cos(query, example)
  double marginal = 0.0;   // objective gain at the step it was picked
};

/// Examples in selection order (most relevant first for top-k and MMR).
using ExampleSet = std::vector<SelectedExample>;

struct SelectionConfig {
  std::size_t k = 10;
  double alpha = 0.2;
  std::size_t candidate_window = 100;  // N
};

/// Unit-normalized vectors, one per example id. Immutable once built; safe for
/// concurrent queries.
class ExampleIndex {
 public:
  /// Vectors are normalized on ingest. Throws DataParse on mismatched
  /// dimensions, zero vectors, duplicate ids or empty input.
  ExampleIndex(std::vector<std::string> ids, std::vector<std::vector<double>> vectors);

  /// One vector per pool example, looked up by example id.
  ExampleIndex(const TrainingPool& pool, const EmbeddingTable& embeddings);

  std::size_t size() const { return ids_.size(); }
  std::size_t dimension() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> vector(std::size_t position) const;
  /// Position of `id`, or size() when absent.
  std::size_t position(std::string_view id) const;

  double cosine(std::size_t a, std::size_t b) const;

  /// Descending cosine, ties by ascending id, length min(n, size()).
  std::vector<ScoredId> nearest(std::span<const double> query, std::size_t n) const;

 private:
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> order_by_id_;
};

std::vector<double> normalized(std::span<const double> v);

ExampleSet select_topk(const ExampleIndex& index, std::span<const double> query, std::size_t k);

/// Similarity between window entries by position.
using PairSimilarity = std::function<double(std::size_t, std::size_t)>;

/// The greedy core: picks min(k, |window|) entries, each maximizing
/// score - alpha * sum of similarity to the entries already picked. Ties go to
/// the smaller id.
ExampleSet greedy_mmr(std::span<const ScoredId> window, const PairSimilarity& similarity, std::size_t k,
                      double alpha);

/// Greedy selection inside the nearest-N window, each step taking the
/// candidate maximizing cos(x, e) - alpha * sum over selected e' of cos(e, e').
/// Ties go to the smaller id.
ExampleSet select_diverse_mmr(const ExampleIndex& index, std::span<const double> query,
                              const SelectionConfig& config);

/// k pool examples uniformly without replacement, in draw order.
ExampleSet select_random(const TrainingPool& pool, std::size_t k, std::uint64_t seed);

/// Slot names of a delta, values ignored.
std::set<SlotName> slot_combination(const StateChange& delta);

std::size_t diversity_distinct_slots(std::span<const StateChange> deltas);

/// Entropy in bits of the empirical slot-combination distribution.
double diversity_entropy(std::span<const StateChange> deltas);

struct ContrastivePair {
  std::string anchor_id;
  std::string other_id;
  bool positive = false;
};

struct PairMiningConfig {
  std::size_t window = 200;
  double fraction = 0.05;
};

/// For each pool example: rank its nearest `window` neighbours (itself
/// excluded) by sim_f1 against its own delta and label the top and bottom
/// `fraction` as positives and negatives. A window below the requested size
/// uses the whole pool; a fraction under one example takes one.
std::vector<ContrastivePair> export_contrastive_pairs(const TrainingPool& pool,
                                                      const ExampleIndex& index,
                                                      const PairMiningConfig& config = {});

/// JSONL {anchor_id, other_id, label: "pos"|"neg"}.
void write_pairs_jsonl(const std::vector<ContrastivePair>& pairs, const std::filesystem::path& path);

}  // namespace codedst
