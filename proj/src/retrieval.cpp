// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "codedst/embedding_source.hpp"
#include "codedst/errors.hpp"
#include "codedst/random.hpp"

namespace codedst {

std::string encode_context_text(const TurnContext& context) {
  std::string out = "[state] ";
  bool first = true;
  for (const auto& [slot, value] : context.prev_state) {
    if (!first) out += "; ";
    out += slot.str() + "=" + value;
    first = false;
  }
  if (!first) out += " ";
  out += "[system] " + context.agent_utt + " [user] " + context.user_utt;
  return out;
}

std::vector<double> normalized(std::span<const double> v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  std::vector<double> out(v.begin(), v.end());
  if (norm > 0.0) {
    for (double& x : out) x /= norm;
  }
  return out;
}

ExampleIndex::ExampleIndex(std::vector<std::string> ids, std::vector<std::vector<double>> vectors)
    : ids_(std::move(ids)) {
  if (ids_.empty() || ids_.size() != vectors.size()) {
    throw DataParse("example index needs one vector per id and at least one example");
  }
  dim_ = vectors.front().size();
  if (dim_ == 0) throw DataParse("embedding vectors must be non-empty");
  data_.reserve(dim_ * ids_.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != dim_) {
      throw DataParse("embedding for '" + ids_[i] + "' has dimension " +
                      std::to_string(vectors[i].size()) + ", expected " + std::to_string(dim_));
    }
    const auto unit = normalized(vectors[i]);
    if (std::all_of(unit.begin(), unit.end(), [](double x) { return x == 0.0; })) {
      throw DataParse("embedding for '" + ids_[i] + "' is the zero vector");
    }
    data_.insert(data_.end(), unit.begin(), unit.end());
  }
  order_by_id_.resize(ids_.size());
  std::iota(order_by_id_.begin(), order_by_id_.end(), 0);
  std::sort(order_by_id_.begin(), order_by_id_.end(),
            [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
  for (std::size_t i = 1; i < order_by_id_.size(); ++i) {
    if (ids_[order_by_id_[i]] == ids_[order_by_id_[i - 1]]) {
      throw DataParse("duplicate id '" + ids_[order_by_id_[i]] + "' in example index");
    }
  }
}

namespace {

std::vector<std::vector<double>> vectors_for(const TrainingPool& pool, const EmbeddingTable& table) {
  std::vector<std::vector<double>> out;
  out.reserve(pool.size());
  for (const auto& example : pool.examples()) {
    const auto* v = table.find(example.id);
    if (v == nullptr) throw DataParse("no embedding for example '" + example.id + "'");
    out.push_back(*v);
  }
  return out;
}

std::vector<std::string> ids_of(const TrainingPool& pool) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& example : pool.examples()) ids.push_back(example.id);
  return ids;
}

}  // namespace

ExampleIndex::ExampleIndex(const TrainingPool& pool, const EmbeddingTable& embeddings)
    : ExampleIndex(ids_of(pool), vectors_for(pool, embeddings)) {}

std::span<const double> ExampleIndex::vector(std::size_t position) const {
  return {data_.data() + position * dim_, dim_};
}

std::size_t ExampleIndex::position(std::string_view id) const {
  const auto it = std::lower_bound(order_by_id_.begin(), order_by_id_.end(), id,
                                   [&](std::size_t p, std::string_view key) { return ids_[p] < key; });
  if (it == order_by_id_.end() || ids_[*it] != id) return ids_.size();
  return *it;
}

double ExampleIndex::cosine(std::size_t a, std::size_t b) const {
  const auto va = vector(a);
  const auto vb = vector(b);
  return std::inner_product(va.begin(), va.end(), vb.begin(), 0.0);
}

std::vector<ScoredId> ExampleIndex::nearest(std::span<const double> query, std::size_t n) const {
  if (query.size() != dim_) {
    throw PreconditionViolation("query dimension " + std::to_string(query.size()) +
                                " does not match index dimension " + std::to_string(dim_));
  }
  const auto unit = normalized(query);
  std::vector<std::pair<double, std::size_t>> scored(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    const auto v = vector(i);
    scored[i] = {std::inner_product(v.begin(), v.end(), unit.begin(), 0.0), i};
  }
  const auto count = std::min(n, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(count), scored.end(),
                    [&](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return ids_[a.second] < ids_[b.second];
                    });
  std::vector<ScoredId> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back({ids_[scored[i].second], scored[i].first});
  return out;
}

ExampleSet select_topk(const ExampleIndex& index, std::span<const double> query, std::size_t k) {
  if (k == 0) throw PreconditionViolation("k must be at least 1");
  ExampleSet out;
  for (auto& hit : index.nearest(query, k)) out.push_back({std::move(hit.id), hit.score, hit.score});
  return out;
}

ExampleSet greedy_mmr(std::span<const ScoredId> window, const PairSimilarity& similarity, std::size_t k,
                      double alpha) {
  if (k == 0) throw PreconditionViolation("k must be at least 1");
  // penalty[i] accumulates sum of cos(candidate i, selected) in selection order.
  std::vector<double> penalty(window.size(), 0.0);
  std::vector<bool> taken(window.size(), false);
  const auto count = std::min(k, window.size());
  ExampleSet out;
  out.reserve(count);
  for (std::size_t step = 0; step < count; ++step) {
    std::size_t best = window.size();
    double best_gain = 0.0;
    for (std::size_t i = 0; i < window.size(); ++i) {
      if (taken[i]) continue;
      const double gain = window[i].score - alpha * penalty[i];
      if (best == window.size() || gain > best_gain ||
          (gain == best_gain && window[i].id < window[best].id)) {
        best = i;
        best_gain = gain;
      }
    }
    taken[best] = true;
    out.push_back({window[best].id, window[best].score, best_gain});
    for (std::size_t i = 0; i < window.size(); ++i) {
      if (!taken[i]) penalty[i] += similarity(i, best);
    }
  }
  return out;
}

ExampleSet select_diverse_mmr(const ExampleIndex& index, std::span<const double> query,
                              const SelectionConfig& config) {
  if (config.k == 0) throw PreconditionViolation("k must be at least 1");
  const auto window = index.nearest(query, config.candidate_window);
  std::vector<std::size_t> positions;
  positions.reserve(window.size());
  for (const auto& hit : window) positions.push_back(index.position(hit.id));
  return greedy_mmr(window, [&](std::size_t a, std::size_t b) { return index.cosine(positions[a], positions[b]); },
                    config.k, config.alpha);
}

ExampleSet select_random(const TrainingPool& pool, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw PreconditionViolation("k must be at least 1");
  ExampleSet out;
  for (auto i : sample_indices(pool.size(), k, seed)) out.push_back({pool.examples()[i].id, 0.0, 0.0});
  return out;
}

std::set<SlotName> slot_combination(const StateChange& delta) { return delta.slots(); }

std::size_t diversity_distinct_slots(std::span<const StateChange> deltas) {
  std::set<std::set<SlotName>> combos;
  for (const auto& delta : deltas) combos.insert(slot_combination(delta));
  return combos.size();
}

double diversity_entropy(std::span<const StateChange> deltas) {
  if (deltas.empty()) return 0.0;
  std::map<std::set<SlotName>, std::size_t> counts;
  for (const auto& delta : deltas) ++counts[slot_combination(delta)];
  const double total = static_cast<double>(deltas.size());
  double entropy = 0.0;
  for (const auto& [combo, count] : counts) {
    const double p = static_cast<double>(count) / total;
    entropy -= p * std::log2(p);
  }
  return entropy == 0.0 ? 0.0 : entropy;  // no negative zero
}

std::vector<ContrastivePair> export_contrastive_pairs(const TrainingPool& pool,
                                                      const ExampleIndex& index,
                                                      const PairMiningConfig& config) {
  std::vector<ContrastivePair> pairs;
  for (const auto& anchor : pool.examples()) {
    const auto position = index.position(anchor.id);
    if (position == index.size()) throw DataParse("example '" + anchor.id + "' is not indexed");
    std::vector<const Example*> neighbours;
    for (const auto& hit : index.nearest(index.vector(position), config.window + 1)) {
      if (hit.id == anchor.id) continue;
      if (neighbours.size() == config.window) break;
      const auto* other = pool.find(hit.id);
      if (other != nullptr) neighbours.push_back(other);
    }
    if (neighbours.empty()) continue;

    std::vector<std::pair<double, const Example*>> ranked;
    ranked.reserve(neighbours.size());
    for (const auto* other : neighbours) ranked.emplace_back(sim_f1(anchor.delta, other->delta), other);
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second->id < b.second->id;
    });

    const auto w = ranked.size();
    const auto per_side = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(config.fraction * static_cast<double>(w) + 1e-9)));
    const auto positives = std::min(per_side, w);
    const auto negatives = std::min(per_side, w - positives);
    for (std::size_t i = 0; i < positives; ++i) pairs.push_back({anchor.id, ranked[i].second->id, true});
    for (std::size_t i = w - negatives; i < w; ++i) {
      pairs.push_back({anchor.id, ranked[i].second->id, false});
    }
  }
  return pairs;
}

void write_pairs_jsonl(const std::vector<ContrastivePair>& pairs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataParse("cannot write " + path.string());
  for (const auto& pair : pairs) {
    nlohmann::json record = {{"anchor_id", pair.anchor_id},
                             {"other_id", pair.other_id},
                             {"label", pair.positive ? "pos" : "neg"}};
    out << record.dump() << '\n';
  }
}

}  // namespace codedst
