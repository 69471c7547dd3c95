// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Language-model access: sampling completions and scoring continuations.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace codedst {

struct SampleParams {
  double top_p = 0.9;
  int best_of = 10;
  int n = 5;
  int max_tokens = 120;
  std::vector<std::string> stop;

  /// top_p 0.9, best_of 10, n 5, max_tokens 120, code stop sequences.
  static SampleParams few_shot();
  /// top_p 0.7, best_of 32, n 5, max_tokens 120.
  static SampleParams zero_shot();

  /// Throws PreconditionViolation unless 0 < top_p <= 1, 1 <= n <= best_of and
  /// max_tokens >= 1.
  void validate() const;
};

struct SampledCompletion {
  std::string text;
  std::vector<double> token_logprobs;
  double total_logprob = 0.0;  // sum of token_logprobs

  static SampledCompletion from_tokens(std::string text, std::vector<double> token_logprobs);
};

/// Implementations are safe to call from several threads at once.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  /// Up to params.n completions, truncated at params.stop, most likely first.
  virtual std::vector<SampledCompletion> sample(const std::string& prompt,
                                                const SampleParams& params) const = 0;

  /// Log-probabilities of the continuation's tokens given the prefix. Throws
  /// PreconditionViolation for an empty continuation.
  virtual std::vector<double> score_continuation(const std::string& prefix,
                                                 const std::string& continuation) const = 0;
};

/// Deterministic offline model.
///
/// Sampling asks a responder for the completions of a prompt. A completion
/// with an explicit log-probability has it spread evenly over its characters;
/// otherwise, like every continuation not in the scoring table, it is scored
/// by a seeded character model in which each character's probability depends
/// only on the preceding four characters. Character tokens make scoring
/// compose exactly: score(p, a + b) == score(p, a) ++ score(p + a, b).
class MockLanguageModel final : public LanguageModel {
 public:
  struct Completion {
    std::string text;
    std::optional<double> logprob;
  };
  using Responder = std::function<std::vector<Completion>(std::string_view prompt)>;

  explicit MockLanguageModel(Responder responder, std::uint64_t seed = 0);

  /// Fixes the token log-probabilities returned for `continuation`, whatever
  /// the prefix.
  void set_continuation_scores(std::string continuation, std::vector<double> token_logprobs);

  std::vector<SampledCompletion> sample(const std::string& prompt,
                                        const SampleParams& params) const override;
  std::vector<double> score_continuation(const std::string& prefix,
                                         const std::string& continuation) const override;

  /// Character-model log-probability of text[position] given text[0, position).
  double char_logprob(std::string_view text, std::size_t position) const;

 private:
  Responder responder_;
  std::uint64_t seed_;
  std::map<std::string, std::vector<double>> continuation_scores_;
};

/// The last line of `prompt` starting with "print(", without the newline;
/// empty when there is none. Mock responders key on it to recognize the query.
std::string last_print_line(std::string_view prompt);

}  // namespace codedst
