// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "codedst/errors.hpp"
#include "codedst/experiment.hpp"
#include "fixtures.hpp"
#include "mock_openai_server.hpp"
#include "scenario.hpp"

namespace codedst {
namespace {

using nlohmann::json;
using testing::TempDir;

const ExperimentInputs& fixture_inputs() {
  static const ExperimentInputs inputs = load_inputs(testing::fixture_config("unused"));
  return inputs;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), {}};
}

class ThrowingModel final : public LanguageModel {
 public:
  std::vector<SampledCompletion> sample(const std::string&, const SampleParams&) const override {
    throw GatewayUnavailable("offline");
  }
  std::vector<double> score_continuation(const std::string&, const std::string&) const override {
    throw GatewayUnavailable("offline");
  }
};

TEST(Config, DefaultsFollowModeAndFraction) {
  ExperimentConfig c;
  c.fraction = 0.01;
  EXPECT_DOUBLE_EQ(c.effective_alpha(), 0.2);
  c.fraction = 0.1;
  EXPECT_DOUBLE_EQ(c.effective_alpha(), 0.3);
  c.fraction = 0.25;
  EXPECT_DOUBLE_EQ(c.effective_alpha(), 0.5);
  EXPECT_EQ(c.effective_window(), 100u);
  c.mode = RunMode::kFull;
  EXPECT_DOUBLE_EQ(c.effective_fraction(), 1.0);
  EXPECT_DOUBLE_EQ(c.effective_alpha(), 0.5);
  EXPECT_EQ(c.effective_window(), 200u);
  c.alpha = 0.7;
  EXPECT_DOUBLE_EQ(c.effective_alpha(), 0.7);
}

TEST(Config, ParsesAndResolvesPaths) {
  const auto c = parse_config(R"({"mode":"zero","retrieval":"topk","seeds":[1,2],"k":3,"beta":0.5,
      "paths":{"schema":"s.json","output":"/abs/out"},
      "gateway":{"kind":"mock","mock_table":"t.json","retries":5}})",
                              "/base");
  EXPECT_EQ(c.mode, RunMode::kZero);
  EXPECT_EQ(c.retrieval, RetrievalKind::kTopK);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2}));
  EXPECT_EQ(c.k, 3u);
  EXPECT_DOUBLE_EQ(c.beta, 0.5);
  EXPECT_EQ(c.paths.schema, std::filesystem::path("/base/s.json"));
  EXPECT_EQ(c.paths.output, std::filesystem::path("/abs/out"));
  EXPECT_EQ(c.gateway.mock_table, std::filesystem::path("/base/t.json"));
  EXPECT_EQ(c.gateway.retries, 5);
  EXPECT_EQ(parse_config(R"({"seed":4})").seeds, (std::vector<std::uint64_t>{4}));
  EXPECT_THROW(parse_config(R"({"mode":"half"})"), DataParse);
  EXPECT_THROW(parse_config("[1]"), DataParse);
}

TEST(Jga, CountsExactMatches) {
  const SlotName area{"hotel", "area"};
  const StateTable gold{{{"d", 0}, {{area, "east"}}}, {{"d", 1}, {{area, "east"}}},
                        {{"d", 2}, {}}, {{"d", 3}, {{area, "West"}}}};
  StateTable pred = gold;
  pred[{"d", 1}] = {{area, "north"}};
  pred[{"d", 3}] = {{area, "west"}};
  EXPECT_DOUBLE_EQ(jga(pred, gold), 0.75);
  EXPECT_DOUBLE_EQ(jga({}, {}), 0.0);
  pred.erase({"d", 0});
  EXPECT_THROW(jga(pred, gold), AlignmentError);
}

TEST(Jga, LeaveOneOutFiltersDialoguesAndSlots) {
  const SlotName taxi{"taxi", "leave_at"};
  const SlotName hotel{"hotel", "area"};
  StateTable gold, pred;
  for (std::size_t t = 0; t < 10; ++t) {
    gold[{"a", t}] = {{taxi, "09:00"}, {hotel, "east"}};
    pred[{"a", t}] = {{taxi, t < 6 ? "09:00" : "10:00"}, {hotel, "west"}};
  }
  gold[{"b", 0}] = {{hotel, "east"}};
  pred[{"b", 0}] = {{hotel, "east"}};
  const std::map<std::string, std::set<std::string>> domains{{"a", {"taxi", "hotel"}}, {"b", {"hotel"}}};
  EXPECT_DOUBLE_EQ(*leave_one_out_jga(pred, gold, "taxi", domains), 0.6);
  EXPECT_NEAR(*leave_one_out_jga(pred, gold, "hotel", domains), 1.0 / 11.0, 1e-12);
  EXPECT_EQ(leave_one_out_jga(pred, gold, "train", domains), std::nullopt);
}

TEST(DropUnresolvable, KeepsResolvableReferences) {
  StateChange d;
  d.set({"taxi", "departure"}, Reference{{"hotel", "name"}});
  d.set({"taxi", "destination"}, Reference{{"restaurant", "name"}});
  d.set({"taxi", "leave_at"}, Literal{"09:00"});
  const auto kept = drop_unresolvable(d, {{{"hotel", "name"}, "gonville hotel"}});
  EXPECT_EQ(kept.updates().size(), 2u);
  EXPECT_FALSE(kept.updates().contains({"taxi", "destination"}));
}

TEST(RunExperiment, OracleIsPerfect) {
  TempDir dir;
  const auto config = testing::fixture_config(dir.path());
  const auto lm = make_language_model(config, fixture_inputs());
  const auto report = run_experiment(config, fixture_inputs(), *lm);
  ASSERT_EQ(report.runs.size(), 1u);
  const auto& run = report.runs.front();
  ASSERT_EQ(run.predictions.size(), 16u);
  const auto metrics = json::parse(metrics_json(report));
  EXPECT_DOUBLE_EQ(metrics["runs"][0]["jga"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(metrics["mean_jga"].get<double>(), 1.0);
  for (const auto& p : run.predictions) {
    EXPECT_EQ(p.example_ids.size(), config.k);
    ASSERT_TRUE(p.distinct_slots.has_value());
  }
}

TEST(RunExperiment, MisspelledCompletionsAreNormalized) {
  TempDir dir;
  auto config = testing::fixture_config(dir.path());
  config.gateway.kind = "mock";
  config.gateway.mock_table = dir / "table.json";
  testing::write_mock_table(fixture_inputs().test, fixture_inputs().schema, testing::misspelled,
                            config.gateway.mock_table);
  const auto table = read_all(config.gateway.mock_table);
  for (const char* damaged : {"\\\"two\\\"", "\\\"9:15\\\"", "acorn gust house", "NORTH"})
    EXPECT_NE(table.find(damaged), std::string::npos) << damaged;
  const auto lm = make_language_model(config, fixture_inputs());
  const auto metrics = json::parse(metrics_json(run_experiment(config, fixture_inputs(), *lm)));
  EXPECT_DOUBLE_EQ(metrics["runs"][0]["jga"].get<double>(), 1.0);
}

TEST(RunExperiment, SingleErrorCarriesOver) {
  TempDir dir;
  auto config = testing::fixture_config(dir.path());
  config.gateway.kind = "mock";
  config.gateway.mock_table = dir / "table.json";
  testing::write_mock_table(fixture_inputs().test, fixture_inputs().schema, testing::single_error,
                            config.gateway.mock_table);
  const auto lm = make_language_model(config, fixture_inputs());
  const auto report = run_experiment(config, fixture_inputs(), *lm);
  const auto metrics = json::parse(metrics_json(report));
  EXPECT_DOUBLE_EQ(metrics["runs"][0]["jga"].get<double>(), 13.0 / 16.0);
  const auto& train = metrics["runs"][0]["per_domain_jga"]["train"];
  EXPECT_DOUBLE_EQ(train.get<double>(), 0.0);
}

TEST(RunDialogue, StateCarriesFromPreviousPrediction) {
  const auto& inputs = fixture_inputs();
  const auto lm = make_oracle_model(inputs.test, inputs.schema);
  const auto pool = sample_few_shot(inputs.train, 0.1, 0, inputs.schema);
  const auto map = build_canonical_map(inputs.schema, inputs.database, inputs.ontology, nullptr);
  const ExampleIndex index(pool, inputs.embeddings);
  const TableEmbeddingSource source(inputs.embeddings);
  ExperimentConfig config = testing::fixture_config("unused");
  const Services services{&inputs.schema, &pool, &index, &source, lm.get(), &map};
  for (const auto& d : inputs.test) {
    const auto preds = run_dialogue(d, config, services, 0);
    DialogueState state;
    for (const auto& p : preds) {
      EXPECT_EQ(p.predicted, apply_state_change(state, drop_unresolvable(p.delta, state)));
      state = p.predicted;
    }
  }
  const Dialogue empty{"empty", {}, {}};
  EXPECT_TRUE(run_dialogue(empty, config, services, 0).empty());
}

TEST(RunExperiment, CheckpointsResumeWithoutModel) {
  TempDir dir;
  auto config = testing::fixture_config(dir / "out");
  config.paths.checkpoint = dir / "ckpt";
  const auto lm = make_language_model(config, fixture_inputs());
  const auto first = metrics_json(run_experiment(config, fixture_inputs(), *lm));
  const ThrowingModel offline;
  EXPECT_EQ(metrics_json(run_experiment(config, fixture_inputs(), offline)), first);

  config.beta = 0.1;  // new fingerprint, so the checkpoints are stale
  EXPECT_THROW(run_experiment(config, fixture_inputs(), offline), RunIncomplete);
}

TEST(RunExperiment, ZeroShotUsesNoExamples) {
  TempDir dir;
  auto config = testing::fixture_config(dir.path());
  config.mode = RunMode::kZero;
  const auto lm = make_language_model(config, fixture_inputs());
  const auto report = run_experiment(config, fixture_inputs(), *lm);
  EXPECT_EQ(report.runs.front().pool_size, 0u);
  for (const auto& p : report.runs.front().predictions) EXPECT_TRUE(p.example_ids.empty());
  EXPECT_FALSE(json::parse(metrics_json(report))["runs"][0].contains("diversity"));
}

TEST(WriteReport, FilesAndDiversityPresence) {
  TempDir dir;
  auto config = testing::fixture_config(dir / "out");
  config.seeds = {0, 1, 2};
  const auto lm = make_language_model(config, fixture_inputs());
  const auto report = run_experiment(config, fixture_inputs(), *lm);
  write_report(report, config.paths.output);
  const auto metrics = json::parse(read_all(dir / "out" / "metrics.json"));
  ASSERT_EQ(metrics["runs"].size(), 3u);
  for (const auto& run : metrics["runs"]) {
    EXPECT_TRUE(run.contains("diversity"));
    EXPECT_TRUE(run["per_domain_jga"].contains("hotel"));
  }
  EXPECT_DOUBLE_EQ(metrics["mean_jga"].get<double>(), 1.0);
  for (int s = 0; s < 3; ++s) {
    std::ifstream preds(dir / "out" / ("predictions.seed-" + std::to_string(s) + ".jsonl"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(preds, line)) {
      const auto record = json::parse(line);
      EXPECT_TRUE(record.contains("predicted_state"));
      ++lines;
    }
    EXPECT_EQ(lines, 16u);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / ("candidates.seed-" + std::to_string(s) + ".jsonl")));
  }
  const auto rescored = json::parse(evaluate_predictions_file(dir / "out" / "predictions.seed-0.jsonl", {}));
  EXPECT_DOUBLE_EQ(rescored["jga"].get<double>(), 1.0);

  config.retrieval = RetrievalKind::kRandom;
  config.seeds = {0};
  const auto random_run = json::parse(metrics_json(run_experiment(config, fixture_inputs(), *lm)));
  EXPECT_FALSE(random_run["runs"][0].contains("diversity"));
}

TEST(ReplayCache, SecondRunNeedsNoServer) {
  TempDir dir;
  auto config = testing::fixture_config(dir / "out");
  config.gateway.kind = "openai";
  config.gateway.retry_delay_ms = 1;
  config.paths.cache = dir / "cache.jsonl";
  std::string first;
  {
    const auto oracle = make_oracle_model(fixture_inputs().test, fixture_inputs().schema);
    testing::MockOpenAIServer server(*oracle);
    config.gateway.endpoint = server.endpoint();
    const auto lm = make_language_model(config, fixture_inputs());
    first = metrics_json(run_experiment(config, fixture_inputs(), *lm));
    EXPECT_GT(server.requests(), 0);
  }
  config.gateway.replay_only = true;
  const auto lm = make_language_model(config, fixture_inputs());
  EXPECT_EQ(metrics_json(run_experiment(config, fixture_inputs(), *lm)), first);
  EXPECT_DOUBLE_EQ(json::parse(first)["mean_jga"].get<double>(), 1.0);
}

TEST(Tools, DryRunAuditExportDiversity) {
  TempDir dir;
  const auto config = testing::fixture_config(dir.path());
  const auto bundle = dry_run_prompt(config, fixture_inputs());
  EXPECT_NE(bundle.main_prompt.find("print(\"user: i am looking for a cheap hotel"), std::string::npos);
  EXPECT_TRUE(audit_normalizer(config, fixture_inputs(), 0).ok());
  const auto pairs = export_pairs(config, fixture_inputs(), 0, dir / "pairs.jsonl", dir / "texts.jsonl");
  EXPECT_GT(pairs, 0u);
  std::ifstream texts(dir / "texts.jsonl");
  std::string line;
  std::getline(texts, line);
  EXPECT_TRUE(json::parse(line).contains("text"));
  const auto diversity = json::parse(diversity_report(config, fixture_inputs(), {0.0, 0.5}));
  EXPECT_FALSE(diversity.empty());
}

}  // namespace
}  // namespace codedst
