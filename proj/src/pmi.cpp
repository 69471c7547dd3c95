// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/pmi.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "codedst/errors.hpp"
#include "codedst/prompt.hpp"

namespace codedst {

void ClipConfig::validate() const {
  if (!(token_floor > 0.0 && token_floor < 1.0) || !(sequence_floor > 0.0 && sequence_floor < 1.0)) {
    throw PreconditionViolation("probability floors must be in (0, 1)");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw PreconditionViolation("beta must be in [0, 1]");
}

std::vector<ScoredCompletion> build_candidates(std::span<const SampledCompletion> samples,
                                               const CanonicalSchema& schema,
                                               const CanonicalMap* normalizer, std::size_t limit) {
  std::map<std::string, ScoredCompletion> by_canonical;
  for (const auto& sample : samples) {
    ScoredCompletion candidate;
    candidate.raw_text = sample.text;
    candidate.cond_logprob = sample.total_logprob;
    auto outcome = parse_completion(sample.text, schema);
    if (outcome.parsed()) {
      candidate.delta = normalizer != nullptr ? normalizer->normalize(outcome.delta()) : outcome.delta();
    } else {
      candidate.rejection = outcome.rejection();
      candidate.demerit = true;
    }
    candidate.canonical_text = canonicalize_completion(candidate.delta);

    auto [it, inserted] = by_canonical.try_emplace(candidate.canonical_text, candidate);
    if (inserted) continue;
    auto& kept = it->second;
    if (kept.demerit && !candidate.demerit) {
      // A genuine parse outranks rejected samples sharing the "pass" form.
      candidate.cond_logprob = std::max(candidate.cond_logprob, kept.cond_logprob);
      kept = std::move(candidate);
    } else if (candidate.cond_logprob > kept.cond_logprob) {
      if (kept.demerit == candidate.demerit) {
        kept.raw_text = candidate.raw_text;
        kept.rejection = candidate.rejection;
      }
      kept.cond_logprob = candidate.cond_logprob;
    }
  }
  std::vector<ScoredCompletion> out;
  out.reserve(by_canonical.size());
  for (auto& [text, candidate] : by_canonical) out.push_back(std::move(candidate));
  std::stable_sort(out.begin(), out.end(), [](const ScoredCompletion& a, const ScoredCompletion& b) {
    return a.cond_logprob > b.cond_logprob;  // map order already sorts ties by canonical text
  });
  if (out.size() > limit) out.resize(limit);
  return out;
}

double clipped_logprob(std::span<const double> token_logprobs, const ClipConfig& clip) {
  const double token_floor = std::log(clip.token_floor);
  double total = 0.0;
  for (double lp : token_logprobs) total += std::max(lp, token_floor);
  return std::max(total, std::log(clip.sequence_floor));
}

double prior_logprob(const ScoredCompletion& candidate, const std::string& inverted_prefix,
                     const ClipConfig& clip, const LanguageModel& lm) {
  if (candidate.canonical_text.empty()) throw PreconditionViolation("candidate has no canonical text");
  const auto tokens = lm.score_continuation(inverted_prefix, candidate.canonical_text);
  return clipped_logprob(tokens, clip);
}

std::size_t pmi_beta_rank(std::span<ScoredCompletion> candidates, double beta) {
  if (candidates.empty()) throw PreconditionViolation("no candidates to rank");
  for (auto& c : candidates) c.pmi_score = c.cond_logprob - beta * c.prior_logprob;
  std::size_t best = 0;
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const auto& a = candidates[i];
    const auto& b = candidates[best];
    const bool better = a.pmi_score != b.pmi_score         ? a.pmi_score > b.pmi_score
                        : a.demerit != b.demerit           ? !a.demerit
                        : a.cond_logprob != b.cond_logprob ? a.cond_logprob > b.cond_logprob
                                                           : a.canonical_text < b.canonical_text;
    if (better) best = i;
  }
  return best;
}

}  // namespace codedst
