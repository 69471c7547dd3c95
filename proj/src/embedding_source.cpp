// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/embedding_source.hpp"

#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "codedst/errors.hpp"

namespace codedst {

using nlohmann::json;

void EmbeddingTable::insert(std::string id, std::vector<double> vector) {
  vectors_.insert_or_assign(std::move(id), std::move(vector));
}

const std::vector<double>* EmbeddingTable::find(std::string_view id) const {
  const auto it = vectors_.find(std::string(id));
  return it == vectors_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataParse("cannot open " + path.string());
  EmbeddingTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = json::parse(line);
      table.insert(doc.at("id").get<std::string>(), doc.at("vector").get<std::vector<double>>());
    } catch (const json::exception& e) {
      throw DataParse(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return table;
}

std::vector<double> TableEmbeddingSource::embed(std::string_view id, std::string_view) const {
  const auto* v = table_.find(id);
  if (v == nullptr) throw DataParse("no embedding for turn '" + std::string(id) + "'");
  return *v;
}

std::pair<std::string, std::string> split_url(std::string_view url) {
  const auto scheme = url.find("://");
  const auto host_start = scheme == std::string_view::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  if (slash == std::string_view::npos) return {std::string(url), std::string()};
  return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

EmbeddingServiceClient::EmbeddingServiceClient(std::string url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  std::tie(scheme_host_port_, path_) = split_url(url);
  if (path_.empty()) path_ = "/";
}

std::vector<double> EmbeddingServiceClient::embed(std::string_view, std::string_view text) const {
  return embed_batch({std::string(text)}).front();
}

std::vector<std::vector<double>> EmbeddingServiceClient::embed_batch(
    const std::vector<std::string>& texts) const {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  const json request = {{"texts", texts}};
  const auto result = client.Post(path_, request.dump(), "application/json");
  if (!result) {
    throw GatewayUnavailable("embedding service unreachable: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw GatewayUnavailable("embedding service returned HTTP " + std::to_string(result->status));
  }
  try {
    auto vectors = json::parse(result->body).at("vectors").get<std::vector<std::vector<double>>>();
    if (vectors.size() != texts.size()) {
      throw MalformedResponse("embedding service returned " + std::to_string(vectors.size()) +
                              " vectors for " + std::to_string(texts.size()) + " texts");
    }
    return vectors;
  } catch (const json::exception& e) {
    throw MalformedResponse(std::string("embedding service response: ") + e.what());
  }
}

}  // namespace codedst
