// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Client for an OpenAI-compatible /completions endpoint, with bounded
// concurrency, exponential-backoff retries and a replay cache.

#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>

#include "codedst/gateway.hpp"

namespace codedst {

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds initial_delay{500};
  double backoff_factor = 2.0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// POSTs a JSON body to a path; nullopt on connection failure.
using HttpTransport =
    std::function<std::optional<HttpReply>(const std::string& path, const std::string& body)>;

/// cpp-httplib transport for `base` ("http://host:port"), with an optional
/// bearer token.
HttpTransport make_http_transport(std::string base, std::string api_key,
                                  std::chrono::milliseconds timeout);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Request/response log keyed by request hash, persisted as JSONL
/// {request_hash, request, response}. Internally synchronized.
class ReplayCache {
 public:
  /// In-memory only.
  ReplayCache() = default;
  /// Loads existing records from `path` (if present) and appends new ones.
  explicit ReplayCache(std::filesystem::path path);

  std::optional<std::string> lookup(const std::string& request_hash) const;
  void store(const std::string& request_hash, const std::string& request_json,
             const std::string& response_json);
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::string> responses_;
  std::optional<std::filesystem::path> path_;
  std::ofstream log_;
};

struct OpenAIClientConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1";  // POSTs go to <endpoint>/completions
  std::string model = "code-davinci-002";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::chrono::milliseconds timeout{60000};
  /// Serve from the cache only; a miss raises GatewayUnavailable.
  bool replay_only = false;
};

class OpenAICompletionsClient final : public LanguageModel {
 public:
  /// An empty transport selects the HTTP transport for config.endpoint.
  explicit OpenAICompletionsClient(OpenAIClientConfig config,
                                   std::shared_ptr<ReplayCache> cache = nullptr,
                                   HttpTransport transport = {});

  std::vector<SampledCompletion> sample(const std::string& prompt,
                                        const SampleParams& params) const override;
  std::vector<double> score_continuation(const std::string& prefix,
                                         const std::string& continuation) const override;

  /// Sends (or replays) one request body and returns the response body.
  std::string post(const std::string& request_json) const;

 private:
  OpenAIClientConfig config_;
  std::shared_ptr<ReplayCache> cache_;
  HttpTransport transport_;
  std::string path_;
  mutable std::counting_semaphore<1024> in_flight_;
};

}  // namespace codedst
