// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "codedst/errors.hpp"
#include "codedst/openai_client.hpp"
#include "fixtures.hpp"
#include "mock_openai_server.hpp"

namespace codedst {
namespace {

using nlohmann::json;
using Completion = MockLanguageModel::Completion;

OpenAIClientConfig fast_config(std::string endpoint = "http://127.0.0.1:9/v1") {
  OpenAIClientConfig config;
  config.endpoint = std::move(endpoint);
  config.retry.initial_delay = std::chrono::milliseconds(1);
  config.timeout = std::chrono::milliseconds(2000);
  return config;
}

std::string choice_body(const std::string& text, const std::vector<double>& logprobs,
                        const std::vector<std::size_t>& offsets) {
  json tokens = json::array();
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const auto end = i + 1 < offsets.size() ? offsets[i + 1] - offsets[0] : text.size();
    tokens.push_back(text.substr(offsets[i] - offsets[0], end - (offsets[i] - offsets[0])));
  }
  return json{{"choices",
               {{{"text", text},
                 {"logprobs", {{"tokens", tokens}, {"token_logprobs", logprobs}, {"text_offset", offsets}}}}}}}
      .dump();
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(OpenAIClient, SampleRequestShape) {
  json seen;
  std::string seen_path;
  const HttpTransport transport = [&](const std::string& path, const std::string& body) {
    seen_path = path;
    seen = json::parse(body);
    return HttpReply{200, choice_body("state.hotel = x", {-0.1, -0.2}, {10, 17})};
  };
  const OpenAICompletionsClient client(fast_config("http://host:1/v1/"), nullptr, transport);
  const auto out = client.sample("the prompt", SampleParams::few_shot());
  EXPECT_EQ(seen_path, "/v1/completions");
  EXPECT_EQ(seen.at("model"), "code-davinci-002");
  EXPECT_EQ(seen.at("prompt"), "the prompt");
  EXPECT_EQ(seen.at("best_of"), 10);
  EXPECT_EQ(seen.at("n"), 5);
  EXPECT_EQ(seen.at("logprobs"), 1);
  EXPECT_EQ(seen.at("echo"), false);
  EXPECT_EQ(seen.at("stop").size(), 3u);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].total_logprob, -0.30000000000000004);
}

TEST(OpenAIClient, ClientSideStopDropsTrailingTokens) {
  const HttpTransport transport = [&](const std::string&, const std::string&) {
    return HttpReply{200, choice_body("pass\n\nmore", {-0.5, -0.25, -4.0}, {0, 4, 6})};
  };
  const OpenAICompletionsClient client(fast_config(), nullptr, transport);
  const auto out = client.sample("p", SampleParams::few_shot());
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].text, "pass");
  EXPECT_EQ(out[0].token_logprobs, (std::vector<double>{-0.5}));
}

TEST(OpenAIClient, ScoringSlicesContinuationByOffset) {
  json seen;
  const HttpTransport transport = [&](const std::string&, const std::string& body) {
    seen = json::parse(body);
    const std::string full = seen.at("prompt");  // "abcXYZ": tokens "ab","cX","YZ"
    json reply = {{"choices",
                   {{{"text", full},
                     {"logprobs",
                      {{"tokens", {"ab", "cX", "YZ"}},
                       {"token_logprobs", {nullptr, -1.0, -2.0}},
                       {"text_offset", {0, 2, 4}}}}}}}};
    return HttpReply{200, reply.dump()};
  };
  const OpenAICompletionsClient client(fast_config(), nullptr, transport);
  EXPECT_EQ(client.score_continuation("abc", "XYZ"), (std::vector<double>{-1.0, -2.0}));
  EXPECT_EQ(seen.at("echo"), true);
  EXPECT_EQ(seen.at("max_tokens"), 0);
  EXPECT_EQ(seen.at("logprobs"), 0);
}

TEST(OpenAIClient, RetriesTransientFailures) {
  int calls = 0;
  const HttpTransport transport = [&](const std::string&, const std::string&) -> std::optional<HttpReply> {
    ++calls;
    if (calls == 1) return std::nullopt;
    if (calls == 2) return HttpReply{429, "slow down"};
    if (calls == 3) return HttpReply{503, "busy"};
    return HttpReply{200, choice_body("pass", {-1.0}, {0})};
  };
  const OpenAICompletionsClient client(fast_config(), nullptr, transport);
  EXPECT_EQ(client.sample("p", SampleParams::few_shot()).size(), 1u);
  EXPECT_EQ(calls, 4);
}

TEST(OpenAIClient, GivesUpAfterRetries) {
  int calls = 0;
  const HttpTransport transport = [&](const std::string&, const std::string&) -> std::optional<HttpReply> {
    ++calls;
    return HttpReply{500, "down"};
  };
  const OpenAICompletionsClient client(fast_config(), nullptr, transport);
  EXPECT_THROW(client.sample("p", SampleParams::few_shot()), GatewayUnavailable);
  EXPECT_EQ(calls, 4);
}

TEST(OpenAIClient, ClientErrorsAndBadBodies) {
  const OpenAICompletionsClient rejected(
      fast_config(), nullptr, [](const std::string&, const std::string&) { return HttpReply{401, "no key"}; });
  EXPECT_THROW(rejected.sample("p", SampleParams::few_shot()), GatewayUnavailable);
  const OpenAICompletionsClient garbled(
      fast_config(), nullptr, [](const std::string&, const std::string&) { return HttpReply{200, "<html>"}; });
  EXPECT_THROW(garbled.sample("p", SampleParams::few_shot()), MalformedResponse);
  const OpenAICompletionsClient no_logprobs(fast_config(), nullptr, [](const std::string&, const std::string&) {
    return HttpReply{200, R"({"choices":[{"text":"pass"}]})"};
  });
  EXPECT_THROW(no_logprobs.sample("p", SampleParams::few_shot()), MalformedResponse);
}

TEST(ReplayCache, ServesRepeatsAndPersists) {
  testing::TempDir dir;
  const auto path = dir / "cache.jsonl";
  int calls = 0;
  const HttpTransport transport = [&](const std::string&, const std::string&) {
    ++calls;
    return HttpReply{200, choice_body("pass", {-1.0}, {0})};
  };
  {
    const OpenAICompletionsClient client(fast_config(), std::make_shared<ReplayCache>(path), transport);
    client.sample("p", SampleParams::few_shot());
    client.sample("p", SampleParams::few_shot());
    EXPECT_EQ(calls, 1);
  }
  auto config = fast_config();
  config.replay_only = true;
  const OpenAICompletionsClient replay(config, std::make_shared<ReplayCache>(path), transport);
  EXPECT_EQ(replay.sample("p", SampleParams::few_shot()).front().text, "pass");
  EXPECT_EQ(calls, 1);
  EXPECT_THROW(replay.sample("other", SampleParams::few_shot()), GatewayUnavailable);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  const auto record = json::parse(line);
  EXPECT_EQ(record.at("request_hash").get<std::string>().size(), 64u);
  EXPECT_TRUE(record.contains("request"));
  EXPECT_TRUE(record.contains("response"));
}

TEST(ReplayCache, CorruptFileRejected) {
  testing::TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{not json\n";
  EXPECT_THROW(ReplayCache(dir / "bad.jsonl"), DataParse);
}

TEST(OpenAIClient, AgainstLocalServer) {
  const MockLanguageModel model([](std::string_view) {
    return std::vector<Completion>{{"state.hotel = update_hotel(area=\"east\")", std::nullopt}, {"pass", -2.0}};
  });
  testing::MockOpenAIServer server(model);
  const OpenAICompletionsClient client(fast_config(server.endpoint()));
  const auto direct = model.sample("prompt\n", SampleParams::few_shot());
  const auto remote = client.sample("prompt\n", SampleParams::few_shot());
  ASSERT_EQ(remote.size(), direct.size());
  for (std::size_t i = 0; i < remote.size(); ++i) {
    EXPECT_EQ(remote[i].text, direct[i].text);
    EXPECT_NEAR(remote[i].total_logprob, direct[i].total_logprob, 1e-9);
  }
  const auto scores = client.score_continuation("prefix ", "pass");
  EXPECT_EQ(scores.size(), 4u);
  const auto expected = model.score_continuation("prefix ", "pass");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(scores[i], expected[i], 1e-12);
}

TEST(OpenAIClient, LocalServerOutageRecovers) {
  const MockLanguageModel model([](std::string_view) { return std::vector<Completion>{{"pass", -1.0}}; });
  testing::MockOpenAIServer server(model);
  server.fail_next(2, 502);
  const OpenAICompletionsClient client(fast_config(server.endpoint()));
  EXPECT_EQ(client.sample("p", SampleParams::few_shot()).front().text, "pass");
  EXPECT_EQ(server.requests(), 3);
}

TEST(OpenAIClient, ConnectionRefused) {
  auto config = fast_config("http://127.0.0.1:1/v1");
  config.retry.max_retries = 1;
  const OpenAICompletionsClient client(config);
  EXPECT_THROW(client.sample("p", SampleParams::few_shot()), GatewayUnavailable);
}

}  // namespace
}  // namespace codedst
