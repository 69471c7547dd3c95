// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point: run, eval, audit-normalizer, export-pairs,
// diversity-report.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "codedst/experiment.hpp"

namespace {

struct Overrides {
  std::optional<std::string> mode;
  std::optional<double> fraction;
  std::vector<std::uint64_t> seeds;
  std::optional<std::string> retrieval;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  std::optional<double> beta;
  std::optional<std::string> output;
  std::optional<std::size_t> parallelism;

  void apply(codedst::ExperimentConfig& config) const {
    if (mode) config.mode = codedst::parse_run_mode(*mode);
    if (fraction) config.fraction = *fraction;
    if (!seeds.empty()) config.seeds = seeds;
    if (retrieval) config.retrieval = codedst::parse_retrieval_kind(*retrieval);
    if (alpha) config.alpha = *alpha;
    if (k) config.k = *k;
    if (beta) config.beta = *beta;
    if (output) config.paths.output = *output;
    if (parallelism) config.parallelism = *parallelism;
  }
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--mode", o.mode, "zero, few or full")->check(CLI::IsMember({"zero", "few", "full"}));
  cmd->add_option("--fraction", o.fraction, "training fraction for few mode");
  cmd->add_option("--seed", o.seeds, "seed (repeatable)");
  cmd->add_option("--retrieval", o.retrieval, "topk, diverse or random")
      ->check(CLI::IsMember({"topk", "diverse", "random"}));
  cmd->add_option("--alpha", o.alpha, "diversity weight");
  cmd->add_option("--k", o.k, "number of in-context examples");
  cmd->add_option("--beta", o.beta, "prior weight");
  cmd->add_option("--output", o.output, "output directory");
  cmd->add_option("--parallelism", o.parallelism, "dialogues run concurrently");
}

codedst::ExperimentConfig load(const std::string& path, const Overrides& o) {
  codedst::ExperimentConfig config = codedst::load_config(path);
  o.apply(config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"codedst: retrieval-augmented in-context dialogue state tracking"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  std::string config_path;
  Overrides overrides;
  bool dry_run = false;
  auto* run = app.add_subcommand("run", "run an experiment and write reports");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  add_overrides(run, overrides);
  run->add_flag("--dry-run", dry_run, "print the first prompt and exit");

  std::string predictions_path;
  std::string schema_path;
  auto* eval = app.add_subcommand("eval", "score a predictions JSONL file");
  eval->add_option("predictions", predictions_path, "predictions JSONL")->required();
  eval->add_option("--schema", schema_path, "schema JSON listing the domains to score");

  std::string audit_config;
  Overrides audit_overrides;
  auto* audit = app.add_subcommand("audit-normalizer", "list every surface link and ambiguity");
  audit->add_option("--config", audit_config, "experiment config JSON")->required();
  add_overrides(audit, audit_overrides);

  std::string pairs_config;
  Overrides pairs_overrides;
  std::string pairs_out = "pairs.jsonl";
  std::string texts_out = "texts.jsonl";
  auto* pairs = app.add_subcommand("export-pairs", "write contrastive pairs and context texts");
  pairs->add_option("--config", pairs_config, "experiment config JSON")->required();
  add_overrides(pairs, pairs_overrides);
  pairs->add_option("--pairs", pairs_out, "pairs JSONL output");
  pairs->add_option("--texts", texts_out, "texts JSONL output");

  std::string diversity_config;
  Overrides diversity_overrides;
  std::vector<double> alphas{0.0, 0.2, 0.3, 0.5};
  auto* diversity = app.add_subcommand("diversity-report", "compare retrieval diversity");
  diversity->add_option("--config", diversity_config, "experiment config JSON")->required();
  add_overrides(diversity, diversity_overrides);
  diversity->add_option("--alphas", alphas, "alphas for diverse retrieval");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*run) {
      const auto config = load(config_path, overrides);
      const auto inputs = codedst::load_inputs(config);
      if (dry_run) {
        std::cout << codedst::dry_run_prompt(config, inputs).main_prompt;
        return 0;
      }
      const auto lm = codedst::make_language_model(config, inputs);
      const auto report = codedst::run_experiment(config, inputs, *lm);
      codedst::write_report(report, config.paths.output);
      std::cout << codedst::metrics_json(report);
    } else if (*eval) {
      std::vector<std::string> domains;
      if (!schema_path.empty()) {
        const auto schema = codedst::load_schema(schema_path);
        for (const auto& d : schema.domains()) domains.push_back(d.name);
      }
      std::cout << codedst::evaluate_predictions_file(predictions_path, domains);
    } else if (*audit) {
      const auto config = load(audit_config, audit_overrides);
      const auto inputs = codedst::load_inputs(config);
      const auto report = codedst::audit_normalizer(config, inputs, config.seeds.front());
      std::cout << report.to_text();
      return report.ok() ? 0 : 1;
    } else if (*pairs) {
      const auto config = load(pairs_config, pairs_overrides);
      const auto inputs = codedst::load_inputs(config);
      const auto count = codedst::export_pairs(config, inputs, config.seeds.front(), pairs_out, texts_out);
      spdlog::info("wrote {} pairs to {} and texts to {}", count, pairs_out, texts_out);
    } else if (*diversity) {
      const auto config = load(diversity_config, diversity_overrides);
      const auto inputs = codedst::load_inputs(config);
      std::cout << codedst::diversity_report(config, inputs, alphas);
    }
  } catch (const codedst::RunIncomplete& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
