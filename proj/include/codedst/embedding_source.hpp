// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace codedst {

/// Precomputed vectors keyed by example or turn id.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;

  void insert(std::string id, std::vector<double> vector);
  const std::vector<double>* find(std::string_view id) const;
  std::size_t size() const { return vectors_.size(); }

 private:
  std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// JSONL {id, vector:[...]}. Throws DataParse.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Source of query embeddings during a run.
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  /// `id` identifies the turn, `text` is its encode_context_text rendering.
  virtual std::vector<double> embed(std::string_view id, std::string_view text) const = 0;
};

/// Looks vectors up by id; the text is ignored. Throws DataParse when absent.
class TableEmbeddingSource final : public EmbeddingSource {
 public:
  explicit TableEmbeddingSource(const EmbeddingTable& table) : table_(table) {}
  std::vector<double> embed(std::string_view id, std::string_view text) const override;

 private:
  const EmbeddingTable& table_;
};

/// Client for a local embedding service: POST {texts:[...]} -> {vectors:[[...]]}.
class EmbeddingServiceClient final : public EmbeddingSource {
 public:
  /// `url` is the full endpoint, e.g. "http://127.0.0.1:8090/embed".
  explicit EmbeddingServiceClient(std::string url,
                                  std::chrono::milliseconds timeout = std::chrono::seconds(30));

  std::vector<double> embed(std::string_view id, std::string_view text) const override;
  /// Throws GatewayUnavailable on transport failure, MalformedResponse when the
  /// reply does not hold one vector per text.
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& texts) const;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

/// Splits "http://host:port/a/b" into ("http://host:port", "/a/b").
std::pair<std::string, std::string> split_url(std::string_view url);

}  // namespace codedst
