// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Candidate rescoring: score(y) = log P(y | prompt) - beta * log P(y | inverted prompt),
// the log of P(y|f_prompt) / P(y|f'_prompt)^beta.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "codedst/completion_parser.hpp"
#include "codedst/gateway.hpp"
#include "codedst/normalizer.hpp"
#include "codedst/schema.hpp"
#include "codedst/state.hpp"

namespace codedst {

struct ClipConfig {
  double token_floor = 5e-7;     // probability floor per prior token
  double sequence_floor = 1e-7;  // probability floor for the whole prior
  double beta = 0.4;

  static ClipConfig few_shot() { return {5e-7, 1e-7, 0.4}; }
  static ClipConfig zero_shot() { return {5e-4, 1e-5, 0.4}; }

  /// Throws PreconditionViolation unless both floors are in (0, 1) and beta in [0, 1].
  void validate() const;
};

struct ScoredCompletion {
  std::string raw_text;  // most likely sample with this canonical form
  std::optional<Rejection> rejection;
  StateChange delta;  // normalized parse; empty when rejected
  std::string canonical_text;
  /// Every sample with this canonical form was rejected; such a candidate
  /// loses all ties.
  bool demerit = false;
  double cond_logprob = 0.0;
  double prior_logprob = 0.0;
  double pmi_score = 0.0;
};

/// Parses (and normalizes, given a map) each sample, deduplicates by canonical
/// text keeping the maximum conditional log-probability, and returns the
/// `limit` most likely, ties by ascending canonical text. Rejected samples
/// become "pass" candidates.
std::vector<ScoredCompletion> build_candidates(std::span<const SampledCompletion> samples,
                                               const CanonicalSchema& schema,
                                               const CanonicalMap* normalizer = nullptr,
                                               std::size_t limit = 5);

/// Sum of token log-probabilities, each floored at log(token_floor), with the
/// total floored at log(sequence_floor).
double clipped_logprob(std::span<const double> token_logprobs, const ClipConfig& clip);

/// Clipped log P(canonical_text | inverted_prefix).
double prior_logprob(const ScoredCompletion& candidate, const std::string& inverted_prefix,
                     const ClipConfig& clip, const LanguageModel& lm);

/// Fills pmi_score on every candidate and returns the index of the winner:
/// highest score; on equal scores a demerited candidate loses, then higher
/// cond_logprob wins, then ascending canonical text.
std::size_t pmi_beta_rank(std::span<ScoredCompletion> candidates, double beta);

}  // namespace codedst
