// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "codedst/completion_parser.hpp"
#include "codedst/errors.hpp"
#include "codedst/random.hpp"

namespace codedst {

SampleParams SampleParams::few_shot() {
  SampleParams params;
  params.top_p = 0.9;
  params.best_of = 10;
  params.n = 5;
  params.max_tokens = 120;
  params.stop = default_stop_sequences();
  return params;
}

SampleParams SampleParams::zero_shot() {
  auto params = few_shot();
  params.top_p = 0.7;
  params.best_of = 32;
  return params;
}

void SampleParams::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw PreconditionViolation("top_p must be in (0, 1]");
  if (n < 1 || best_of < n) throw PreconditionViolation("sampling requires 1 <= n <= best_of");
  if (max_tokens < 1) throw PreconditionViolation("max_tokens must be positive");
}

SampledCompletion SampledCompletion::from_tokens(std::string text, std::vector<double> token_logprobs) {
  const double total = std::accumulate(token_logprobs.begin(), token_logprobs.end(), 0.0);
  return {std::move(text), std::move(token_logprobs), total};
}

MockLanguageModel::MockLanguageModel(Responder responder, std::uint64_t seed)
    : responder_(std::move(responder)), seed_(seed) {}

void MockLanguageModel::set_continuation_scores(std::string continuation,
                                                std::vector<double> token_logprobs) {
  continuation_scores_.insert_or_assign(std::move(continuation), std::move(token_logprobs));
}

double MockLanguageModel::char_logprob(std::string_view text, std::size_t position) const {
  const auto begin = position >= 4 ? position - 4 : 0;
  const auto window = text.substr(begin, position - begin + 1);
  const auto hash = fnv1a(window, 0xcbf29ce484222325ULL ^ seed_);
  // Probabilities in [0.9, 1.0) keep 100-character completions well above
  // the sequence floors.
  const double unit = static_cast<double>(hash >> 11) * 0x1.0p-53;
  return std::log(0.9 + 0.1 * unit);
}

std::vector<SampledCompletion> MockLanguageModel::sample(const std::string& prompt,
                                                         const SampleParams& params) const {
  params.validate();
  std::vector<SampledCompletion> out;
  for (const auto& completion : responder_(prompt)) {
    auto text = strip_at_stops(completion.text, params.stop);
    std::vector<double> tokens;
    if (completion.logprob) {
      const auto count = std::max<std::size_t>(1, text.size());
      tokens.assign(count, *completion.logprob / static_cast<double>(count));
    } else {
      const auto full = prompt + text;
      for (std::size_t i = 0; i < text.size(); ++i) tokens.push_back(char_logprob(full, prompt.size() + i));
    }
    out.push_back(SampledCompletion::from_tokens(std::move(text), std::move(tokens)));
    if (out.size() == static_cast<std::size_t>(params.best_of)) break;
  }
  std::stable_sort(out.begin(), out.end(), [](const SampledCompletion& a, const SampledCompletion& b) {
    return a.total_logprob > b.total_logprob;
  });
  if (out.size() > static_cast<std::size_t>(params.n)) out.resize(static_cast<std::size_t>(params.n));
  return out;
}

std::vector<double> MockLanguageModel::score_continuation(const std::string& prefix,
                                                          const std::string& continuation) const {
  if (continuation.empty()) throw PreconditionViolation("cannot score an empty continuation");
  if (const auto it = continuation_scores_.find(continuation); it != continuation_scores_.end()) {
    return it->second;
  }
  const auto full = prefix + continuation;
  std::vector<double> out;
  out.reserve(continuation.size());
  for (std::size_t i = 0; i < continuation.size(); ++i) out.push_back(char_logprob(full, prefix.size() + i));
  return out;
}

std::string last_print_line(std::string_view prompt) {
  std::size_t end = prompt.size();
  while (end > 0) {
    const auto start = prompt.rfind('\n', end - 1);
    const auto line_begin = start == std::string_view::npos ? 0 : start + 1;
    const auto line = prompt.substr(line_begin, end - line_begin);
    if (line.starts_with("print(")) return std::string(line);
    if (line_begin == 0) break;
    end = line_begin - 1;
  }
  return "";
}

}  // namespace codedst
