// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "codedst/completion_parser.hpp"
#include "codedst/openai_client.hpp"
#include "codedst/random.hpp"

namespace codedst {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kZero: return "zero";
    case RunMode::kFew: return "few";
    case RunMode::kFull: return "full";
  }
  return "few";
}

std::string_view to_string(RetrievalKind kind) {
  switch (kind) {
    case RetrievalKind::kTopK: return "topk";
    case RetrievalKind::kDiverse: return "diverse";
    case RetrievalKind::kRandom: return "random";
  }
  return "diverse";
}

RunMode parse_run_mode(std::string_view text) {
  if (text == "zero") return RunMode::kZero;
  if (text == "few") return RunMode::kFew;
  if (text == "full") return RunMode::kFull;
  throw DataParse("unknown mode: " + std::string(text));
}

RetrievalKind parse_retrieval_kind(std::string_view text) {
  if (text == "topk") return RetrievalKind::kTopK;
  if (text == "diverse") return RetrievalKind::kDiverse;
  if (text == "random") return RetrievalKind::kRandom;
  throw DataParse("unknown retrieval kind: " + std::string(text));
}

double ExperimentConfig::effective_fraction() const {
  return mode == RunMode::kFull ? 1.0 : fraction;
}

double ExperimentConfig::effective_alpha() const {
  if (alpha) return *alpha;
  const double f = effective_fraction();
  if (f <= 0.05 + 1e-12) return 0.2;
  if (f <= 0.10 + 1e-12) return 0.3;
  return 0.5;
}

std::size_t ExperimentConfig::effective_window() const {
  if (candidate_window) return *candidate_window;
  return mode == RunMode::kFull ? 200 : 100;
}

SampleParams ExperimentConfig::sample_params() const {
  SampleParams params = mode == RunMode::kZero ? SampleParams::zero_shot() : SampleParams::few_shot();
  if (top_p) params.top_p = *top_p;
  if (best_of) params.best_of = *best_of;
  params.n = n;
  params.max_tokens = max_tokens;
  params.validate();
  return params;
}

ClipConfig ExperimentConfig::clip() const {
  ClipConfig clip = mode == RunMode::kZero ? ClipConfig::zero_shot() : ClipConfig::few_shot();
  if (token_floor) clip.token_floor = *token_floor;
  if (sequence_floor) clip.sequence_floor = *sequence_floor;
  clip.beta = beta;
  clip.validate();
  return clip;
}

SelectionConfig ExperimentConfig::selection() const {
  SelectionConfig selection;
  selection.k = k;
  selection.alpha = effective_alpha();
  selection.candidate_window = effective_window();
  if (selection.alpha < 0) throw PreconditionViolation("alpha must be non-negative");
  if (selection.candidate_window < selection.k) throw PreconditionViolation("candidate window must be >= k");
  return selection;
}

namespace {

fs::path resolve_path(const json& node, const char* key, const fs::path& base) {
  if (!node.contains(key)) return {};
  fs::path path = node.at(key).get<std::string>();
  if (path.empty() || path.is_absolute() || base.empty()) return path;
  return base / path;
}

template <typename T>
void read_optional(const json& node, const char* key, std::optional<T>& out) {
  if (node.contains(key) && !node.at(key).is_null()) out = node.at(key).get<T>();
}

template <typename T>
void read_value(const json& node, const char* key, T& out) {
  if (node.contains(key) && !node.at(key).is_null()) out = node.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
  ExperimentConfig config;
  try {
    const json root = json::parse(json_text);
    if (!root.is_object()) throw DataParse("config must be a JSON object");
    if (root.contains("mode")) config.mode = parse_run_mode(root.at("mode").get<std::string>());
    if (root.contains("retrieval"))
      config.retrieval = parse_retrieval_kind(root.at("retrieval").get<std::string>());
    read_value(root, "fraction", config.fraction);
    if (root.contains("seeds")) config.seeds = root.at("seeds").get<std::vector<std::uint64_t>>();
    if (root.contains("seed")) config.seeds = {root.at("seed").get<std::uint64_t>()};
    read_value(root, "k", config.k);
    read_optional(root, "alpha", config.alpha);
    read_optional(root, "candidate_window", config.candidate_window);
    read_value(root, "beta", config.beta);
    read_optional(root, "top_p", config.top_p);
    read_optional(root, "best_of", config.best_of);
    read_value(root, "n", config.n);
    read_value(root, "max_tokens", config.max_tokens);
    read_optional(root, "token_floor", config.token_floor);
    read_optional(root, "sequence_floor", config.sequence_floor);
    read_value(root, "parallelism", config.parallelism);
    read_value(root, "embedding_service", config.embedding_service);

    if (root.contains("paths")) {
      const json& p = root.at("paths");
      auto& paths = config.paths;
      paths.schema = resolve_path(p, "schema", base_dir);
      paths.ontology = resolve_path(p, "ontology", base_dir);
      paths.database = resolve_path(p, "database", base_dir);
      paths.train = resolve_path(p, "train", base_dir);
      paths.test = resolve_path(p, "test", base_dir);
      paths.embeddings = resolve_path(p, "embeddings", base_dir);
      paths.cache = resolve_path(p, "cache", base_dir);
      if (p.contains("output")) paths.output = resolve_path(p, "output", base_dir);
      paths.checkpoint = resolve_path(p, "checkpoint", base_dir);
    }
    if (root.contains("gateway")) {
      const json& g = root.at("gateway");
      auto& gateway = config.gateway;
      read_value(g, "kind", gateway.kind);
      read_value(g, "endpoint", gateway.endpoint);
      read_value(g, "model", gateway.model);
      read_value(g, "api_key_env", gateway.api_key_env);
      read_value(g, "concurrency", gateway.concurrency);
      read_value(g, "retries", gateway.retries);
      read_value(g, "retry_delay_ms", gateway.retry_delay_ms);
      read_value(g, "replay_only", gateway.replay_only);
      read_value(g, "mock_seed", gateway.mock_seed);
      gateway.mock_table = resolve_path(g, "mock_table", base_dir);
      if (gateway.kind != "oracle" && gateway.kind != "mock" && gateway.kind != "openai")
        throw DataParse("unknown gateway kind: " + gateway.kind);
    }
  } catch (const json::exception& e) {
    throw DataParse(std::string("config: ") + e.what());
  }
  if (config.seeds.empty()) throw DataParse("config: seeds must not be empty");
  if (config.mode != RunMode::kFull && !(config.fraction > 0 && config.fraction <= 1))
    throw DataParse("config: fraction must be in (0, 1]");
  if (config.parallelism == 0) throw DataParse("config: parallelism must be positive");
  return config;
}

ExperimentConfig load_config(const fs::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

namespace {

ordered_json config_to_json(const ExperimentConfig& config) {
  ordered_json out;
  out["mode"] = to_string(config.mode);
  out["retrieval"] = to_string(config.retrieval);
  out["fraction"] = config.effective_fraction();
  out["seeds"] = config.seeds;
  out["k"] = config.mode == RunMode::kZero ? 0 : config.k;
  out["alpha"] = config.effective_alpha();
  out["candidate_window"] = config.effective_window();
  const SampleParams params = config.sample_params();
  const ClipConfig clip = config.clip();
  out["beta"] = clip.beta;
  out["top_p"] = params.top_p;
  out["best_of"] = params.best_of;
  out["n"] = params.n;
  out["max_tokens"] = params.max_tokens;
  out["token_floor"] = clip.token_floor;
  out["sequence_floor"] = clip.sequence_floor;
  return out;
}

ordered_json state_to_json(const DialogueState& state) {
  ordered_json out = ordered_json::object();
  for (const auto& [slot, value] : state) out[slot.str()] = value;
  return out;
}

DialogueState state_from_json(const json& node) {
  DialogueState state;
  for (const auto& [key, value] : node.items()) state[SlotName::parse(key)] = value.get<std::string>();
  return state;
}

std::string ascii_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool states_match(const DialogueState& a, const DialogueState& b, const std::string* domain) {
  auto it_a = a.begin();
  auto it_b = b.begin();
  auto skip = [&](auto& it, const DialogueState& s) {
    while (domain && it != s.end() && it->first.domain != *domain) ++it;
  };
  while (true) {
    skip(it_a, a);
    skip(it_b, b);
    if (it_a == a.end() || it_b == b.end()) return it_a == a.end() && it_b == b.end();
    if (!(it_a->first == it_b->first)) return false;
    if (ascii_lower(it_a->second) != ascii_lower(it_b->second)) return false;
    ++it_a;
    ++it_b;
  }
}

void check_aligned(const StateTable& predictions, const StateTable& golds) {
  if (predictions.size() != golds.size())
    throw AlignmentError("prediction and gold turn counts differ");
  for (auto p = predictions.begin(), g = golds.begin(); p != predictions.end(); ++p, ++g) {
    if (p->first != g->first)
      throw AlignmentError("unaligned turn: " + p->first.first + ":" + std::to_string(p->first.second));
  }
}

}  // namespace

StateChange drop_unresolvable(const StateChange& delta, const DialogueState& state) {
  StateChange out;
  for (const SlotName& slot : delta.removals()) out.remove(slot);
  for (const auto& [slot, value] : delta.updates()) {
    if (const auto* ref = std::get_if<Reference>(&value); ref && !state.contains(ref->target)) continue;
    out.set(slot, value);
  }
  return out;
}

double jga(const StateTable& predictions, const StateTable& golds) {
  check_aligned(predictions, golds);
  if (golds.empty()) return 0.0;
  std::size_t correct = 0;
  for (auto p = predictions.begin(), g = golds.begin(); p != predictions.end(); ++p, ++g)
    if (states_match(p->second, g->second, nullptr)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(golds.size());
}

std::optional<double> leave_one_out_jga(const StateTable& predictions, const StateTable& golds,
                                        const std::string& domain,
                                        const std::map<std::string, std::set<std::string>>& dialogue_domains) {
  check_aligned(predictions, golds);
  std::size_t total = 0;
  std::size_t correct = 0;
  for (auto p = predictions.begin(), g = golds.begin(); p != predictions.end(); ++p, ++g) {
    const auto it = dialogue_domains.find(g->first.first);
    if (it == dialogue_domains.end() || !it->second.contains(domain)) continue;
    ++total;
    if (states_match(p->second, g->second, &domain)) ++correct;
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Per-seed services

namespace {

struct SeedContext {
  TrainingPool pool;
  std::optional<ExampleIndex> index;
  std::unique_ptr<EmbeddingSource> queries;
  std::optional<CanonicalMap> normalizer;

  Services services(const CanonicalSchema& schema, const LanguageModel* lm) const {
    Services s;
    s.schema = &schema;
    s.pool = &pool;
    s.index = index ? &*index : nullptr;
    s.embeddings = queries.get();
    s.lm = lm;
    s.normalizer = normalizer ? &*normalizer : nullptr;
    return s;
  }
};

bool needs_index(const ExperimentConfig& config) {
  return config.mode != RunMode::kZero && config.k > 0 && config.retrieval != RetrievalKind::kRandom;
}

TrainingPool build_pool(const ExperimentConfig& config, const ExperimentInputs& inputs, std::uint64_t seed) {
  if (config.mode == RunMode::kZero) return {};
  return sample_few_shot(inputs.train, config.effective_fraction(), seed, inputs.schema);
}

std::unique_ptr<SeedContext> prepare_seed(const ExperimentConfig& config, const ExperimentInputs& inputs,
                                          std::uint64_t seed, bool with_index, bool strict_audit = true) {
  auto ctx = std::make_unique<SeedContext>();
  ctx->pool = build_pool(config, inputs, seed);
  if (with_index && !ctx->pool.empty()) {
    if (config.embedding_service.empty()) {
      ctx->index.emplace(ctx->pool, inputs.embeddings);
      ctx->queries = std::make_unique<TableEmbeddingSource>(inputs.embeddings);
    } else {
      auto client = std::make_unique<EmbeddingServiceClient>(config.embedding_service);
      std::vector<std::string> ids;
      std::vector<std::string> texts;
      for (const Example& e : ctx->pool.examples()) {
        ids.push_back(e.id);
        texts.push_back(encode_context_text(e.context));
      }
      ctx->index.emplace(std::move(ids), client->embed_batch(texts));
      ctx->queries = std::move(client);
    }
  }
  NormalizerOptions options;
  options.strict_audit = strict_audit;
  if (config.mode == RunMode::kZero) {
    ctx->normalizer.emplace(build_canonical_map(inputs.schema, inputs.database, inputs.ontology, nullptr, options));
  } else {
    const SurfaceCounts counts = gold_surface_counts(ctx->pool.dialogues());
    ctx->normalizer.emplace(build_canonical_map(inputs.schema, inputs.database, inputs.ontology, &counts, options));
  }
  return ctx;
}

ExampleSet select_examples(const TurnContext& context, const std::string& id, const ExperimentConfig& config,
                           const Services& services, std::uint64_t seed, RetrievalKind kind,
                           const SelectionConfig& selection) {
  if (config.mode == RunMode::kZero || selection.k == 0 || services.pool == nullptr || services.pool->empty())
    return {};
  if (kind == RetrievalKind::kRandom) return select_random(*services.pool, selection.k, seed ^ fnv1a(id));
  if (services.index == nullptr || services.embeddings == nullptr)
    throw PreconditionViolation("retrieval needs an example index and an embedding source");
  const std::vector<double> query = services.embeddings->embed(id, encode_context_text(context));
  if (kind == RetrievalKind::kTopK) return select_topk(*services.index, query, selection.k);
  return select_diverse_mmr(*services.index, query, selection);
}

/// Prompt order: least relevant first so the most relevant sits next to the query.
std::vector<const Example*> prompt_examples(const ExampleSet& selected, const TrainingPool& pool) {
  std::vector<const ExampleSet::value_type*> ordered;
  for (const auto& s : selected) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto* a, const auto* b) { return a->relevance < b->relevance; });
  std::vector<const Example*> out;
  for (const auto* s : ordered) {
    const Example* e = pool.find(s->id);
    if (e == nullptr) throw PreconditionViolation("selected example not in pool: " + s->id);
    out.push_back(e);
  }
  return out;
}

std::vector<StateChange> deltas_of(const std::vector<const Example*>& examples) {
  std::vector<StateChange> out;
  out.reserve(examples.size());
  for (const Example* e : examples) out.push_back(e->delta);
  return out;
}

}  // namespace

std::vector<TurnPrediction> run_dialogue(const Dialogue& dialogue, const ExperimentConfig& config,
                                         const Services& services, std::uint64_t seed) {
  if (services.schema == nullptr || services.lm == nullptr)
    throw PreconditionViolation("run_dialogue needs a schema and a language model");
  const SampleParams params = config.sample_params();
  const ClipConfig clip = config.clip();
  const SelectionConfig selection = config.selection();
  const TrainingPool empty_pool;
  const TrainingPool& pool = services.pool ? *services.pool : empty_pool;

  std::vector<TurnPrediction> out;
  DialogueState state;
  for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
    const Turn& turn = dialogue.turns[t];
    const std::string id = turn_id(dialogue.id, t);
    const TurnContext context{state, turn.agent_utt, turn.user_utt};

    const ExampleSet selected = select_examples(context, id, config, services, seed, config.retrieval, selection);
    const std::vector<const Example*> examples = prompt_examples(selected, pool);
    const PromptBundle bundle = build_prompt_bundle(*services.schema, examples, context);

    const std::vector<SampledCompletion> samples = services.lm->sample(bundle.main_prompt, params);
    std::vector<ScoredCompletion> candidates = build_candidates(samples, *services.schema, services.normalizer);
    if (candidates.empty()) {
      ScoredCompletion fallback;
      fallback.canonical_text = canonicalize_completion(StateChange{});
      fallback.demerit = true;
      candidates.push_back(std::move(fallback));
    }
    for (ScoredCompletion& c : candidates) c.prior_logprob = prior_logprob(c, bundle.inverted_prefix, clip, *services.lm);
    const std::size_t best = pmi_beta_rank(candidates, clip.beta);

    TurnPrediction prediction;
    prediction.dialogue_id = dialogue.id;
    prediction.turn = t;
    prediction.delta = drop_unresolvable(candidates[best].delta, state);
    prediction.predicted = apply_state_change(state, prediction.delta);
    prediction.gold = turn.gold_state;
    for (const Example* e : examples) prediction.example_ids.push_back(e->id);
    if (!examples.empty() && config.retrieval != RetrievalKind::kRandom) {
      const auto deltas = deltas_of(examples);
      prediction.distinct_slots = diversity_distinct_slots(deltas);
      prediction.entropy = diversity_entropy(deltas);
    }
    prediction.dump.turn_id = id;
    prediction.dump.chosen = candidates[best].canonical_text;
    prediction.dump.candidates = std::move(candidates);

    state = prediction.predicted;
    out.push_back(std::move(prediction));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inputs and models

ExperimentInputs load_inputs(const ExperimentConfig& config) {
  const auto& p = config.paths;
  if (p.schema.empty()) throw DataParse("config: paths.schema is required");
  if (p.test.empty()) throw DataParse("config: paths.test is required");
  ExperimentInputs inputs{load_schema(p.schema), {}, {}, {}, {}, {}};
  if (!p.ontology.empty()) inputs.ontology = load_ontology(p.ontology);
  if (!p.database.empty()) inputs.database = load_database(p.database);
  if (!p.train.empty()) inputs.train = load_dialogues(p.train);
  inputs.test = load_dialogues(p.test);
  if (!p.embeddings.empty()) inputs.embeddings = load_embeddings(p.embeddings);
  if (config.mode != RunMode::kZero && inputs.train.empty())
    throw DataParse("config: few and full modes need training dialogues");
  return inputs;
}

namespace {

struct QueryKey {
  std::string state_line;
  std::string print_line;
};

QueryKey query_key(std::string_view prompt) {
  QueryKey key;
  key.print_line = last_print_line(prompt);
  const auto print_at = prompt.rfind("\n" + key.print_line);
  if (print_at != std::string_view::npos) {
    const auto line_begin = prompt.rfind('\n', print_at == 0 ? 0 : print_at - 1);
    const auto begin = line_begin == std::string_view::npos ? 0 : line_begin + 1;
    key.state_line = std::string(prompt.substr(begin, print_at - begin));
  }
  return key;
}

using ResponseTable = std::map<std::string, std::vector<std::pair<std::string, std::vector<MockLanguageModel::Completion>>>>;

MockLanguageModel::Responder table_responder(std::shared_ptr<const ResponseTable> table) {
  return [table](std::string_view prompt) -> std::vector<MockLanguageModel::Completion> {
    const QueryKey key = query_key(prompt);
    const auto it = table->find(key.print_line);
    if (it == table->end() || it->second.empty()) return {{"pass", std::nullopt}};
    for (const auto& [state_line, completions] : it->second)
      if (state_line == key.state_line) return completions;
    return it->second.front().second;
  };
}

}  // namespace

std::unique_ptr<LanguageModel> make_oracle_model(const std::vector<Dialogue>& dialogues,
                                                 const CanonicalSchema& schema, std::uint64_t seed) {
  auto table = std::make_shared<ResponseTable>();
  for (const Dialogue& d : dialogues) {
    for (const Example& e : derive_turn_examples(d, schema)) {
      const std::string print_line = render_print_line(e.context.agent_utt, e.context.user_utt);
      (*table)[print_line].emplace_back(render_state_line(e.context.prev_state),
                                        std::vector<MockLanguageModel::Completion>{
                                            {canonicalize_completion(e.delta), std::nullopt}});
    }
  }
  return std::make_unique<MockLanguageModel>(table_responder(std::move(table)), seed);
}

namespace {

std::unique_ptr<LanguageModel> make_table_model(const fs::path& path, std::uint64_t seed) {
  auto table = std::make_shared<ResponseTable>();
  try {
    const json root = json::parse(read_file(path));
    for (const auto& [print_line, entries] : root.items()) {
      std::vector<MockLanguageModel::Completion> completions;
      for (const json& entry : entries) {
        MockLanguageModel::Completion c{entry.at("text").get<std::string>(), std::nullopt};
        if (entry.contains("logprob")) c.logprob = entry.at("logprob").get<double>();
        completions.push_back(std::move(c));
      }
      (*table)[print_line].emplace_back("", std::move(completions));
    }
  } catch (const json::exception& e) {
    throw DataParse("mock table " + path.string() + ": " + e.what());
  }
  return std::make_unique<MockLanguageModel>(table_responder(std::move(table)), seed);
}

}  // namespace

std::unique_ptr<LanguageModel> make_language_model(const ExperimentConfig& config, const ExperimentInputs& inputs) {
  const GatewayConfig& g = config.gateway;
  if (g.kind == "oracle") return make_oracle_model(inputs.test, inputs.schema, g.mock_seed);
  if (g.kind == "mock") {
    if (g.mock_table.empty()) throw DataParse("config: gateway.mock_table is required for the mock gateway");
    return make_table_model(g.mock_table, g.mock_seed);
  }
  OpenAIClientConfig client;
  client.endpoint = g.endpoint;
  client.model = g.model;
  client.api_key_env = g.api_key_env;
  client.max_in_flight = g.concurrency;
  client.retry.max_retries = g.retries;
  client.retry.initial_delay = std::chrono::milliseconds(g.retry_delay_ms);
  client.replay_only = g.replay_only;
  auto cache = config.paths.cache.empty() ? std::make_shared<ReplayCache>()
                                          : std::make_shared<ReplayCache>(config.paths.cache);
  return std::make_unique<OpenAICompletionsClient>(std::move(client), std::move(cache));
}

// ---------------------------------------------------------------------------
// Serialization of predictions

namespace {

ordered_json candidate_to_json(const ScoredCompletion& c) {
  ordered_json out;
  out["canonical"] = c.canonical_text;
  out["cond_logprob"] = c.cond_logprob;
  out["prior_logprob"] = c.prior_logprob;
  out["score"] = c.pmi_score;
  if (c.demerit) out["demerit"] = true;
  if (c.rejection) out["rejected"] = std::string(to_string(c.rejection->reason));
  return out;
}

ordered_json dump_to_json(const CandidateDump& dump) {
  ordered_json out;
  out["turn_id"] = dump.turn_id;
  out["candidates"] = ordered_json::array();
  for (const auto& c : dump.candidates) out["candidates"].push_back(candidate_to_json(c));
  out["chosen"] = dump.chosen;
  return out;
}

ordered_json prediction_to_json(const TurnPrediction& p, const std::set<std::string>& domains) {
  ordered_json out;
  out["dialogue_id"] = p.dialogue_id;
  out["turn"] = p.turn;
  out["domains"] = domains;
  out["delta"] = canonicalize_completion(p.delta);
  out["predicted_state"] = state_to_json(p.predicted);
  out["gold_state"] = state_to_json(p.gold);
  out["examples"] = p.example_ids;
  if (p.distinct_slots) out["distinct_slots"] = *p.distinct_slots;
  if (p.entropy) out["entropy"] = *p.entropy;
  return out;
}

TurnPrediction prediction_from_json(const json& node, const CanonicalSchema& schema) {
  TurnPrediction p;
  p.dialogue_id = node.at("dialogue_id").get<std::string>();
  p.turn = node.at("turn").get<std::size_t>();
  const ParseOutcome parsed = parse_completion(node.at("delta").get<std::string>(), schema);
  if (!parsed.parsed()) throw DataParse("checkpoint delta does not parse: " + parsed.rejection().message);
  p.delta = parsed.delta();
  p.predicted = state_from_json(node.at("predicted_state"));
  p.gold = state_from_json(node.at("gold_state"));
  p.example_ids = node.at("examples").get<std::vector<std::string>>();
  if (node.contains("distinct_slots")) p.distinct_slots = node.at("distinct_slots").get<std::size_t>();
  if (node.contains("entropy")) p.entropy = node.at("entropy").get<double>();
  const json& dump = node.at("dump");
  p.dump.turn_id = dump.at("turn_id").get<std::string>();
  p.dump.chosen = dump.at("chosen").get<std::string>();
  for (const json& c : dump.at("candidates")) {
    ScoredCompletion s;
    s.canonical_text = c.at("canonical").get<std::string>();
    s.cond_logprob = c.at("cond_logprob").get<double>();
    s.prior_logprob = c.at("prior_logprob").get<double>();
    s.pmi_score = c.at("score").get<double>();
    s.demerit = c.value("demerit", false);
    if (c.contains("rejected")) s.rejection = Rejection{RejectReason::kSyntax, 0, 0, c.at("rejected").get<std::string>()};
    p.dump.candidates.push_back(std::move(s));
  }
  return p;
}

std::string checkpoint_name(const std::string& dialogue_id) {
  std::string safe;
  for (char c : dialogue_id)
    safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  std::ostringstream name;
  name << safe << '-' << std::hex << fnv1a(dialogue_id) << ".json";
  return name.str();
}

class CheckpointStore {
 public:
  CheckpointStore(fs::path root, std::uint64_t seed, std::string fingerprint)
      : fingerprint_(std::move(fingerprint)) {
    if (root.empty()) return;
    dir_ = root / ("seed-" + std::to_string(seed));
    fs::create_directories(*dir_);
  }

  std::optional<std::vector<TurnPrediction>> load(const Dialogue& d, const CanonicalSchema& schema) const {
    if (!dir_) return std::nullopt;
    const fs::path path = *dir_ / checkpoint_name(d.id);
    if (!fs::exists(path)) return std::nullopt;
    try {
      const json root = json::parse(read_file(path));
      if (root.at("fingerprint").get<std::string>() != fingerprint_) {
        spdlog::warn("checkpoint {} was written by a different configuration; rerunning", path.string());
        return std::nullopt;
      }
      std::vector<TurnPrediction> out;
      for (const json& turn : root.at("turns")) out.push_back(prediction_from_json(turn, schema));
      if (out.size() != d.turns.size()) return std::nullopt;
      return out;
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable checkpoint {}: {}", path.string(), e.what());
      return std::nullopt;
    }
  }

  void save(const Dialogue& d, const std::vector<TurnPrediction>& predictions) const {
    if (!dir_) return;
    ordered_json root;
    root["fingerprint"] = fingerprint_;
    root["dialogue_id"] = d.id;
    root["turns"] = ordered_json::array();
    for (const auto& p : predictions) {
      ordered_json turn = prediction_to_json(p, d.domains);
      turn["dump"] = dump_to_json(p.dump);
      root["turns"].push_back(std::move(turn));
    }
    const fs::path path = *dir_ / checkpoint_name(d.id);
    const fs::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << root.dump() << '\n';
      if (!out) throw Error("cannot write checkpoint " + tmp.string());
    }
    fs::rename(tmp, path);
  }

 private:
  std::optional<fs::path> dir_;
  std::string fingerprint_;
};

std::string config_fingerprint(const ExperimentConfig& config, std::uint64_t seed) {
  ordered_json j = config_to_json(config);
  j["seed"] = seed;
  j["gateway"] = config.gateway.kind;
  j["model"] = config.gateway.model;
  return sha256_hex(j.dump());
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config, const ExperimentInputs& inputs, const LanguageModel& lm) {
  RunReport report;
  report.config = config;
  for (const DomainDef& d : inputs.schema.domains()) report.domains.push_back(d.name);

  std::vector<std::string> failures;
  for (const std::uint64_t seed : config.seeds) {
    const auto ctx = prepare_seed(config, inputs, seed, needs_index(config));
    const Services services = ctx->services(inputs.schema, &lm);
    const CheckpointStore store(config.paths.checkpoint, seed, config_fingerprint(config, seed));
    spdlog::info("seed {}: {} pool examples, {} dialogues", seed, ctx->pool.size(), inputs.test.size());

    const std::size_t count = inputs.test.size();
    std::vector<std::optional<std::vector<TurnPrediction>>> results(count);
    std::vector<std::string> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < count; i = next++) {
        const Dialogue& d = inputs.test[i];
        try {
          if (auto cached = store.load(d, inputs.schema)) {
            results[i] = std::move(cached);
            continue;
          }
          auto predictions = run_dialogue(d, config, services, seed);
          store.save(d, predictions);
          results[i] = std::move(predictions);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    };
    {
      const std::size_t width = std::min<std::size_t>(config.parallelism, std::max<std::size_t>(count, 1));
      std::vector<std::jthread> threads;
      for (std::size_t w = 1; w < width; ++w) threads.emplace_back(worker);
      worker();
    }

    SeedRun run;
    run.seed = seed;
    run.pool_size = ctx->pool.size();
    for (std::size_t i = 0; i < count; ++i) {
      const Dialogue& d = inputs.test[i];
      if (!errors[i].empty()) {
        spdlog::error("seed {} dialogue {}: {}", seed, d.id, errors[i]);
        failures.push_back(d.id + " (seed " + std::to_string(seed) + "): " + errors[i]);
        continue;
      }
      run.dialogue_domains[d.id] = d.domains;
      for (auto& p : *results[i]) run.predictions.push_back(std::move(p));
    }
    report.runs.push_back(std::move(run));
  }
  if (!failures.empty()) {
    std::string message = std::to_string(failures.size()) + " dialogue(s) failed; rerun to resume:";
    for (const auto& f : failures) message += "\n  " + f;
    throw RunIncomplete(message);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

struct Tables {
  StateTable predictions;
  StateTable golds;
};

Tables tables_of(const std::vector<TurnPrediction>& predictions) {
  Tables t;
  for (const auto& p : predictions) {
    t.predictions[{p.dialogue_id, p.turn}] = p.predicted;
    t.golds[{p.dialogue_id, p.turn}] = p.gold;
  }
  return t;
}

ordered_json score_json(const Tables& t, const std::vector<std::string>& domains,
                        const std::map<std::string, std::set<std::string>>& dialogue_domains) {
  ordered_json out;
  out["turns"] = t.golds.size();
  out["jga"] = jga(t.predictions, t.golds);
  ordered_json per_domain = ordered_json::object();
  for (const auto& domain : domains)
    if (const auto score = leave_one_out_jga(t.predictions, t.golds, domain, dialogue_domains))
      per_domain[domain] = *score;
  out["per_domain_jga"] = std::move(per_domain);
  return out;
}

}  // namespace

std::string metrics_json(const RunReport& report) {
  const bool with_diversity =
      report.config.mode != RunMode::kZero && report.config.retrieval != RetrievalKind::kRandom;
  ordered_json root;
  root["config"] = config_to_json(report.config);
  root["runs"] = ordered_json::array();
  double jga_sum = 0.0;
  for (const SeedRun& run : report.runs) {
    ordered_json entry;
    entry["seed"] = run.seed;
    entry["pool_size"] = run.pool_size;
    const ordered_json scores = score_json(tables_of(run.predictions), report.domains, run.dialogue_domains);
    for (const auto& [key, value] : scores.items()) entry[key] = value;
    jga_sum += scores["jga"].get<double>();
    if (with_diversity) {
      double distinct = 0.0;
      double entropy = 0.0;
      std::size_t n = 0;
      for (const auto& p : run.predictions) {
        if (!p.distinct_slots || !p.entropy) continue;
        distinct += static_cast<double>(*p.distinct_slots);
        entropy += *p.entropy;
        ++n;
      }
      ordered_json diversity;
      diversity["turns"] = n;
      diversity["mean_distinct_slots"] = n ? distinct / static_cast<double>(n) : 0.0;
      diversity["mean_entropy"] = n ? entropy / static_cast<double>(n) : 0.0;
      entry["diversity"] = std::move(diversity);
    }
    root["runs"].push_back(std::move(entry));
  }
  root["mean_jga"] = report.runs.empty() ? 0.0 : jga_sum / static_cast<double>(report.runs.size());
  return root.dump(2) + "\n";
}

void write_report(const RunReport& report, const fs::path& directory) {
  fs::create_directories(directory);
  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + path.string());
  };
  write(directory / "metrics.json", metrics_json(report));
  for (const SeedRun& run : report.runs) {
    std::string predictions;
    std::string candidates;
    for (const auto& p : run.predictions) {
      const auto it = run.dialogue_domains.find(p.dialogue_id);
      const std::set<std::string> domains = it == run.dialogue_domains.end() ? std::set<std::string>{} : it->second;
      predictions += prediction_to_json(p, domains).dump() + "\n";
      candidates += dump_to_json(p.dump).dump() + "\n";
    }
    const std::string suffix = "seed-" + std::to_string(run.seed) + ".jsonl";
    write(directory / ("predictions." + suffix), predictions);
    write(directory / ("candidates." + suffix), candidates);
  }
}

std::string evaluate_predictions_file(const fs::path& path, const std::vector<std::string>& domains) {
  std::ifstream in(path);
  if (!in) throw DataParse("cannot open " + path.string());
  Tables t;
  std::map<std::string, std::set<std::string>> dialogue_domains;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json node = json::parse(line);
      const TurnKey key{node.at("dialogue_id").get<std::string>(), node.at("turn").get<std::size_t>()};
      t.predictions[key] = state_from_json(node.at("predicted_state"));
      t.golds[key] = state_from_json(node.at("gold_state"));
      auto& ds = dialogue_domains[key.first];
      if (node.contains("domains")) {
        for (const auto& d : node.at("domains")) ds.insert(d.get<std::string>());
      } else {
        for (const auto& [slot, value] : t.golds[key]) ds.insert(slot.domain);
      }
    } catch (const json::exception& e) {
      throw DataParse(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::vector<std::string> scored = domains;
  if (scored.empty()) {
    std::set<std::string> all;
    for (const auto& [id, ds] : dialogue_domains) all.insert(ds.begin(), ds.end());
    scored.assign(all.begin(), all.end());
  }
  return score_json(t, scored, dialogue_domains).dump(2) + "\n";
}

PromptBundle dry_run_prompt(const ExperimentConfig& config, const ExperimentInputs& inputs) {
  if (inputs.test.empty() || inputs.test.front().turns.empty()) throw DataParse("no test turn to render");
  const auto ctx = prepare_seed(config, inputs, config.seeds.front(), needs_index(config));
  const Services services = ctx->services(inputs.schema, nullptr);
  const Dialogue& d = inputs.test.front();
  const TurnContext context{{}, d.turns.front().agent_utt, d.turns.front().user_utt};
  const ExampleSet selected =
      select_examples(context, turn_id(d.id, 0), config, services, config.seeds.front(), config.retrieval,
                      config.selection());
  return build_prompt_bundle(inputs.schema, prompt_examples(selected, ctx->pool), context);
}

std::string diversity_report(const ExperimentConfig& config, const ExperimentInputs& inputs,
                             const std::vector<double>& alphas) {
  if (config.mode == RunMode::kZero) throw PreconditionViolation("diversity report needs a selection pool");
  const std::uint64_t seed = config.seeds.front();
  const auto ctx = prepare_seed(config, inputs, seed, true);
  const Services services = ctx->services(inputs.schema, nullptr);

  struct Method {
    std::string name;
    RetrievalKind kind;
    double alpha;
    double distinct = 0.0;
    double entropy = 0.0;
  };
  std::vector<Method> methods{{"random", RetrievalKind::kRandom, 0.0}, {"topk", RetrievalKind::kTopK, 0.0}};
  for (double a : alphas) methods.push_back({"diverse", RetrievalKind::kDiverse, a});

  std::size_t turns = 0;
  for (const Dialogue& d : inputs.test) {
    DialogueState prev;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const TurnContext context{prev, d.turns[t].agent_utt, d.turns[t].user_utt};
      const std::string id = turn_id(d.id, t);
      for (Method& m : methods) {
        SelectionConfig selection = config.selection();
        selection.alpha = m.alpha;
        const ExampleSet selected = select_examples(context, id, config, services, seed, m.kind, selection);
        const auto deltas = deltas_of(prompt_examples(selected, ctx->pool));
        if (deltas.empty()) continue;
        m.distinct += static_cast<double>(diversity_distinct_slots(deltas));
        m.entropy += diversity_entropy(deltas);
      }
      ++turns;
      prev = d.turns[t].gold_state;
    }
  }
  ordered_json root;
  root["seed"] = seed;
  root["k"] = config.k;
  root["candidate_window"] = config.effective_window();
  root["turns"] = turns;
  root["methods"] = ordered_json::array();
  for (const Method& m : methods) {
    ordered_json entry;
    entry["name"] = m.name;
    if (m.kind == RetrievalKind::kDiverse) entry["alpha"] = m.alpha;
    entry["mean_distinct_slots"] = turns ? m.distinct / static_cast<double>(turns) : 0.0;
    entry["mean_entropy"] = turns ? m.entropy / static_cast<double>(turns) : 0.0;
    root["methods"].push_back(std::move(entry));
  }
  return root.dump(2) + "\n";
}

std::size_t export_pairs(const ExperimentConfig& config, const ExperimentInputs& inputs, std::uint64_t seed,
                         const fs::path& pairs_path, const fs::path& texts_path) {
  if (config.mode == RunMode::kZero) throw PreconditionViolation("pair export needs a training pool");
  const auto ctx = prepare_seed(config, inputs, seed, true, false);
  if (!ctx->index) throw PreconditionViolation("pair export needs a non-empty training pool");
  const auto pairs = export_contrastive_pairs(ctx->pool, *ctx->index);
  write_pairs_jsonl(pairs, pairs_path);

  std::ofstream out(texts_path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + texts_path.string());
  auto emit = [&](const std::string& id, const TurnContext& context) {
    ordered_json line;
    line["id"] = id;
    line["text"] = encode_context_text(context);
    out << line.dump() << '\n';
  };
  for (const Example& e : ctx->pool.examples()) emit(e.id, e.context);
  for (const Dialogue& d : inputs.test) {
    DialogueState prev;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      emit(turn_id(d.id, t), TurnContext{prev, d.turns[t].agent_utt, d.turns[t].user_utt});
      prev = d.turns[t].gold_state;
    }
  }
  if (!out) throw Error("cannot write " + texts_path.string());
  return pairs.size();
}

AuditReport audit_normalizer(const ExperimentConfig& config, const ExperimentInputs& inputs, std::uint64_t seed) {
  const auto ctx = prepare_seed(config, inputs, seed, false, false);
  const SurfaceCounts counts = gold_surface_counts(ctx->pool.dialogues());
  return ctx->normalizer->audit(audit_surfaces(inputs.ontology, config.mode == RunMode::kZero ? nullptr : &counts));
}

}  // namespace codedst
