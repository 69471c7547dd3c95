// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Experiment orchestration: the per-turn inference loop, scoring and reports.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "codedst/corpus.hpp"
#include "codedst/embedding_source.hpp"
#include "codedst/errors.hpp"
#include "codedst/gateway.hpp"
#include "codedst/normalizer.hpp"
#include "codedst/pmi.hpp"
#include "codedst/prompt.hpp"
#include "codedst/retrieval.hpp"
#include "codedst/schema.hpp"

namespace codedst {

enum class RunMode { kZero, kFew, kFull };
enum class RetrievalKind { kTopK, kDiverse, kRandom };

std::string_view to_string(RunMode mode);
std::string_view to_string(RetrievalKind kind);
RunMode parse_run_mode(std::string_view text);
RetrievalKind parse_retrieval_kind(std::string_view text);

struct GatewayConfig {
  /// "oracle" (mock emitting the gold update line of each test turn), "mock"
  /// (mock driven by a table file) or "openai".
  std::string kind = "oracle";
  std::string endpoint = "http://127.0.0.1:8000/v1";
  std::string model = "code-davinci-002";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t concurrency = 4;
  int retries = 3;
  int retry_delay_ms = 500;
  bool replay_only = false;
  std::filesystem::path mock_table;  // JSON {"<print line>": [{"text", "logprob"?}]}
  std::uint64_t mock_seed = 0;
};

struct ExperimentPaths {
  std::filesystem::path schema;
  std::filesystem::path ontology;
  std::filesystem::path database;
  std::filesystem::path train;       // dialogues JSONL (selection pool source)
  std::filesystem::path test;        // dialogues JSONL to evaluate
  std::filesystem::path embeddings;  // JSONL {id, vector}
  std::filesystem::path cache;       // replay cache JSONL
  std::filesystem::path output = "run";
  std::filesystem::path checkpoint;  // per-dialogue checkpoints; empty disables
};

/// Unset optionals take the defaults of the mode and training fraction.
struct ExperimentConfig {
  RunMode mode = RunMode::kFew;
  double fraction = 0.05;
  std::vector<std::uint64_t> seeds = {0};
  std::size_t k = 10;
  std::optional<double> alpha;
  std::optional<std::size_t> candidate_window;
  double beta = 0.4;
  std::optional<double> top_p;
  std::optional<int> best_of;
  int n = 5;
  int max_tokens = 120;
  std::optional<double> token_floor;
  std::optional<double> sequence_floor;
  RetrievalKind retrieval = RetrievalKind::kDiverse;
  std::size_t parallelism = 1;
  std::string embedding_service;  // URL; empty uses the embeddings file
  ExperimentPaths paths;
  GatewayConfig gateway;

  /// 1.0 in full mode, otherwise `fraction`.
  double effective_fraction() const;
  /// 0.2 up to 5% of the data, 0.3 up to 10%, 0.5 beyond.
  double effective_alpha() const;
  /// 100, or 200 in full mode.
  std::size_t effective_window() const;
  SampleParams sample_params() const;
  ClipConfig clip() const;
  SelectionConfig selection() const;
};

/// Relative paths are resolved against `base_dir`. Throws DataParse.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

struct CandidateDump {
  std::string turn_id;
  std::vector<ScoredCompletion> candidates;
  std::string chosen;
};

struct TurnPrediction {
  std::string dialogue_id;
  std::size_t turn = 0;
  StateChange delta;
  DialogueState predicted;
  DialogueState gold;
  std::vector<std::string> example_ids;  // in prompt order
  std::optional<std::size_t> distinct_slots;
  std::optional<double> entropy;
  CandidateDump dump;
};

/// Everything a dialogue run reads. The pointers must outlive the run; index
/// and embeddings may be null when retrieval does not need them.
struct Services {
  const CanonicalSchema* schema = nullptr;
  const TrainingPool* pool = nullptr;
  const ExampleIndex* index = nullptr;
  const EmbeddingSource* embeddings = nullptr;
  const LanguageModel* lm = nullptr;
  const CanonicalMap* normalizer = nullptr;
};

/// Turns run in order, each from the previously predicted state.
std::vector<TurnPrediction> run_dialogue(const Dialogue& dialogue, const ExperimentConfig& config,
                                         const Services& services, std::uint64_t seed);

/// The delta with updates whose reference has no value in `state` removed.
StateChange drop_unresolvable(const StateChange& delta, const DialogueState& state);

using TurnKey = std::pair<std::string, std::size_t>;
using StateTable = std::map<TurnKey, DialogueState>;

/// Fraction of turns whose full state matches gold, case-insensitively.
/// Throws AlignmentError when the key sets differ. 0 for no turns.
double jga(const StateTable& predictions, const StateTable& golds);

/// JGA over dialogues containing `domain`, comparing only that domain's
/// slots; nullopt when no dialogue contains it.
std::optional<double> leave_one_out_jga(const StateTable& predictions, const StateTable& golds,
                                        const std::string& domain,
                                        const std::map<std::string, std::set<std::string>>& dialogue_domains);

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t pool_size = 0;
  std::vector<TurnPrediction> predictions;  // dialogue order, then turn order
  std::map<std::string, std::set<std::string>> dialogue_domains;
};

struct RunReport {
  ExperimentConfig config;
  std::vector<std::string> domains;  // schema order
  std::vector<SeedRun> runs;
};

/// Loaded inputs shared by every seed of an experiment.
struct ExperimentInputs {
  CanonicalSchema schema;
  Ontology ontology;
  EntityDatabase database;
  std::vector<Dialogue> train;
  std::vector<Dialogue> test;
  EmbeddingTable embeddings;
};

ExperimentInputs load_inputs(const ExperimentConfig& config);

/// Mock whose completion for each test turn is that turn's gold update line.
std::unique_ptr<LanguageModel> make_oracle_model(const std::vector<Dialogue>& dialogues,
                                                 const CanonicalSchema& schema, std::uint64_t seed = 0);

std::unique_ptr<LanguageModel> make_language_model(const ExperimentConfig& config,
                                                   const ExperimentInputs& inputs);

/// Some dialogues failed; their checkpoints are absent so a rerun resumes them.
class RunIncomplete : public Error {
 public:
  using Error::Error;
};

/// Runs every seed. Throws RunIncomplete when any dialogue failed.
RunReport run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs,
                         const LanguageModel& lm);

/// Writes metrics.json, predictions.seed-<s>.jsonl and candidates.seed-<s>.jsonl.
void write_report(const RunReport& report, const std::filesystem::path& directory);

/// Metrics JSON text of a report.
std::string metrics_json(const RunReport& report);

/// Scores a predictions JSONL file; returns metrics JSON text.
std::string evaluate_predictions_file(const std::filesystem::path& path,
                                      const std::vector<std::string>& domains);

/// Main and inverted prompt of the first test turn, without calling a model.
PromptBundle dry_run_prompt(const ExperimentConfig& config, const ExperimentInputs& inputs);

/// Mean distinct slot combinations and entropy over the gold contexts of the
/// test turns, for random, top-k and diverse retrieval at each alpha.
std::string diversity_report(const ExperimentConfig& config, const ExperimentInputs& inputs,
                             const std::vector<double>& alphas);

/// Writes contrastive pairs and the {id, text} file the retriever trainer
/// consumes. Returns the number of pairs.
std::size_t export_pairs(const ExperimentConfig& config, const ExperimentInputs& inputs,
                         std::uint64_t seed, const std::filesystem::path& pairs_path,
                         const std::filesystem::path& texts_path);

/// Uniqueness audit of the normalizer built for `seed`'s pool.
AuditReport audit_normalizer(const ExperimentConfig& config, const ExperimentInputs& inputs,
                             std::uint64_t seed);

}  // namespace codedst
