// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/openai_client.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "codedst/completion_parser.hpp"
#include "codedst/embedding_source.hpp"
#include "codedst/errors.hpp"

namespace codedst {

using nlohmann::json;

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

HttpTransport make_http_transport(std::string base, std::string api_key,
                                  std::chrono::milliseconds timeout) {
  return [base = std::move(base), api_key = std::move(api_key), timeout](
             const std::string& path, const std::string& body) -> std::optional<HttpReply> {
    httplib::Client client(base);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    auto result = client.Post(path, headers, body, "application/json");
    if (!result) return std::nullopt;
    return HttpReply{result->status, result->body};
  };
}

ReplayCache::ReplayCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    std::ifstream in(*path_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto record = json::parse(line);
        responses_.insert_or_assign(record.at("request_hash").get<std::string>(),
                                    record.at("response").dump());
      } catch (const json::exception& e) {
        throw DataParse("corrupt replay cache " + path_->string() + ": " + e.what());
      }
    }
  }
  if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
  log_.open(*path_, std::ios::app | std::ios::binary);
  if (!log_) throw DataParse("cannot append to replay cache " + path_->string());
}

std::optional<std::string> ReplayCache::lookup(const std::string& request_hash) const {
  std::lock_guard lock(mutex_);
  const auto it = responses_.find(request_hash);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

void ReplayCache::store(const std::string& request_hash, const std::string& request_json,
                        const std::string& response_json) {
  std::lock_guard lock(mutex_);
  if (!responses_.emplace(request_hash, response_json).second) return;
  if (log_.is_open()) {
    json record = {{"request_hash", request_hash},
                   {"request", json::parse(request_json)},
                   {"response", json::parse(response_json)}};
    log_ << record.dump() << '\n';
    log_.flush();
  }
}

std::size_t ReplayCache::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

OpenAICompletionsClient::OpenAICompletionsClient(OpenAIClientConfig config,
                                                 std::shared_ptr<ReplayCache> cache,
                                                 HttpTransport transport)
    : config_(std::move(config)),
      cache_(std::move(cache)),
      transport_(std::move(transport)),
      in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(config_.max_in_flight, 1, 1024))) {
  auto [base, prefix] = split_url(config_.endpoint);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  path_ = prefix + "/completions";
  if (!transport_) {
    std::string key;
    if (const char* value = std::getenv(config_.api_key_env.c_str())) key = value;
    transport_ = make_http_transport(std::move(base), std::move(key), config_.timeout);
  }
}

std::string OpenAICompletionsClient::post(const std::string& request_json) const {
  const auto hash = sha256_hex(request_json);
  if (cache_) {
    if (auto cached = cache_->lookup(hash)) return *std::move(cached);
  }
  if (config_.replay_only) throw GatewayUnavailable("replay cache miss for request " + hash);

  auto delay = config_.retry.initial_delay;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retry.max_retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("completions request failed ({}); retry {}/{} in {} ms", last_error, attempt,
                   config_.retry.max_retries, delay.count());
      std::this_thread::sleep_for(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * config_.retry.backoff_factor));
    }
    std::optional<HttpReply> reply;
    {
      in_flight_.acquire();
      try {
        reply = transport_(path_, request_json);
      } catch (...) {
        in_flight_.release();
        throw;
      }
      in_flight_.release();
    }
    if (!reply) {
      last_error = "connection failed";
      continue;
    }
    if (reply->status == 429 || reply->status >= 500) {
      last_error = "HTTP " + std::to_string(reply->status);
      continue;
    }
    if (reply->status != 200) {
      throw GatewayUnavailable("completions endpoint returned HTTP " + std::to_string(reply->status) +
                               ": " + reply->body);
    }
    try {
      const auto body = json::parse(reply->body);
      if (!body.contains("choices") || !body["choices"].is_array()) {
        throw MalformedResponse("response has no 'choices' array");
      }
      auto normalized = body.dump();
      if (cache_) cache_->store(hash, request_json, normalized);
      return normalized;
    } catch (const json::exception& e) {
      throw MalformedResponse(std::string("response is not valid JSON: ") + e.what());
    }
  }
  throw GatewayUnavailable("completions endpoint unavailable after " +
                           std::to_string(config_.retry.max_retries + 1) + " attempts (" + last_error + ")");
}

namespace {

struct TokenTable {
  std::vector<std::string> tokens;
  std::vector<std::optional<double>> logprobs;
  std::vector<std::size_t> offsets;
};

TokenTable token_table(const json& choice) {
  if (!choice.contains("logprobs") || !choice["logprobs"].is_object()) {
    throw MalformedResponse("choice has no logprobs");
  }
  const auto& lp = choice["logprobs"];
  TokenTable table;
  for (const auto& value : lp.at("token_logprobs")) {
    table.logprobs.push_back(value.is_null() ? std::nullopt : std::optional<double>(value.get<double>()));
  }
  if (lp.contains("tokens")) table.tokens = lp["tokens"].get<std::vector<std::string>>();
  if (lp.contains("text_offset")) table.offsets = lp["text_offset"].get<std::vector<std::size_t>>();
  if ((!table.tokens.empty() && table.tokens.size() != table.logprobs.size()) ||
      (!table.offsets.empty() && table.offsets.size() != table.logprobs.size())) {
    throw MalformedResponse("logprobs arrays differ in length");
  }
  return table;
}

}  // namespace

std::vector<SampledCompletion> OpenAICompletionsClient::sample(const std::string& prompt,
                                                               const SampleParams& params) const {
  params.validate();
  const json request = {{"model", config_.model}, {"prompt", prompt},       {"max_tokens", params.max_tokens},
                        {"stop", params.stop},    {"top_p", params.top_p},  {"best_of", params.best_of},
                        {"n", params.n},          {"logprobs", 1},          {"echo", false}};
  const auto response = json::parse(post(request.dump()));
  std::vector<SampledCompletion> out;
  try {
    for (const auto& choice : response.at("choices")) {
      const auto raw = choice.at("text").get<std::string>();
      auto text = strip_at_stops(raw, params.stop);
      const auto table = token_table(choice);
      std::vector<double> logprobs;
      const std::size_t base = table.offsets.empty() ? 0 : table.offsets.front();
      for (std::size_t i = 0; i < table.logprobs.size(); ++i) {
        // Tokens past a client-side stop are dropped; an empty completion keeps
        // its first token so it is not scored as certain.
        const bool past_stop = !table.offsets.empty() && table.offsets[i] - base >= text.size();
        if (past_stop && !(text.empty() && i == 0)) break;
        if (!table.logprobs[i]) throw MalformedResponse("null token logprob in a sampled completion");
        logprobs.push_back(*table.logprobs[i]);
      }
      out.push_back(SampledCompletion::from_tokens(std::move(text), std::move(logprobs)));
    }
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("malformed completion choice: ") + e.what());
  }
  std::stable_sort(out.begin(), out.end(), [](const SampledCompletion& a, const SampledCompletion& b) {
    return a.total_logprob > b.total_logprob;
  });
  if (out.size() > static_cast<std::size_t>(params.n)) out.resize(static_cast<std::size_t>(params.n));
  return out;
}

std::vector<double> OpenAICompletionsClient::score_continuation(const std::string& prefix,
                                                                const std::string& continuation) const {
  if (continuation.empty()) throw PreconditionViolation("cannot score an empty continuation");
  const json request = {{"model", config_.model}, {"prompt", prefix + continuation},
                        {"max_tokens", 0},        {"echo", true},
                        {"logprobs", 0}};
  const auto response = json::parse(post(request.dump()));
  try {
    const auto& choices = response.at("choices");
    if (choices.empty()) throw MalformedResponse("no choices in scoring response");
    const auto table = token_table(choices.front());
    if (table.offsets.empty()) throw MalformedResponse("scoring response lacks text_offset");
    const auto total = prefix.size() + continuation.size();
    std::vector<double> out;
    for (std::size_t i = 0; i < table.logprobs.size(); ++i) {
      const auto end = !table.tokens.empty() ? table.offsets[i] + table.tokens[i].size()
                       : i + 1 < table.offsets.size() ? table.offsets[i + 1]
                                                      : total;
      // Tokens ending inside the prefix are excluded; a token straddling the
      // boundary counts toward the continuation.
      if (end <= prefix.size()) continue;
      if (!table.logprobs[i]) throw MalformedResponse("null logprob inside the continuation");
      out.push_back(*table.logprobs[i]);
    }
    if (out.empty()) throw MalformedResponse("no tokens returned for the continuation");
    return out;
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("malformed scoring response: ") + e.what());
  }
}

}  // namespace codedst
