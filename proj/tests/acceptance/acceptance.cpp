// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "codedst/completion_parser.hpp"
#include "codedst/experiment.hpp"
#include "codedst/normalizer.hpp"
#include "codedst/pmi.hpp"
#include "codedst/prompt.hpp"
#include "codedst/retrieval.hpp"
#include "codedst/state.hpp"
#include "fixtures.hpp"
#include "generators.hpp"
#include "mock_openai_server.hpp"
#include "scenario.hpp"

namespace {

using namespace codedst;  // NOLINT
using testing::Rng;
using Clock = std::chrono::steady_clock;

constexpr double kGreedyTolerance = 1e-9;
constexpr double kPmiTolerance = 1e-9;
constexpr double kMmrSeconds = 10.0;
constexpr double kEndToEndSeconds = 60.0;

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Failure : public std::exception {
 public:
  explicit Failure(std::string what) : what_(std::move(what)) {}
  const char* what() const noexcept override { return what_.c_str(); }

 private:
  std::string what_;
};

void expect(bool condition, const std::string& what) {
  if (!condition) throw Failure(what);
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> g;
  std::vector<double> v(dim);
  for (double& x : v) x = g(rng);
  return normalized(v);
}

ExampleIndex random_index(Rng& rng, std::size_t n, std::size_t dim) {
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("e" + std::to_string(1000 + i));
    vectors.push_back(random_unit(rng, dim));
  }
  return ExampleIndex(std::move(ids), std::move(vectors));
}

Outcome delta_algebra() {
  Rng rng(101);
  const auto& schema = testing::fixture_schema();
  for (int i = 0; i < 1000; ++i) {
    const auto prev = testing::random_state(rng, schema);
    const auto next = testing::random_state(rng, schema);
    expect(apply_state_change(prev, diff_states(prev, next)) == next, "round trip failed at pair " + std::to_string(i));
  }
  return {true, "1000 pairs exact"};
}

Outcome sim_f1_suite() {
  const SlotName area{"hotel", "area"};
  StateChange east, west, stars, ref_a, ref_b;
  east.set(area, Literal{"east"});
  west.set(area, Literal{"west"});
  stars.set({"hotel", "stars"}, Literal{"4"});
  ref_a.set({"taxi", "destination"}, Reference{{"hotel", "name"}});
  ref_b.set({"taxi", "destination"}, Reference{{"hotel", "name"}});
  expect(sim_f1(east, east) == 1.0, "identity");
  expect(sim_f1(east, stars) == 0.0, "disjoint");
  expect(sim_f1(east, west) == 0.5, "shared slot, different value");
  expect(sim_f1(ref_a, ref_b) == 1.0, "reference-literal invariance");
  Rng rng(102);
  for (int i = 0; i < 1000; ++i) {
    const auto a = testing::random_delta(rng, testing::fixture_schema());
    const auto b = testing::random_delta(rng, testing::fixture_schema());
    expect(sim_f1(a, b) == sim_f1(b, a), "symmetry at pair " + std::to_string(i));
  }
  return {true, "fixtures exact, 1000 symmetric pairs"};
}

Outcome mmr() {
  const auto start = Clock::now();
  Rng rng(103);
  for (int trial = 0; trial < 100; ++trial) {
    const auto index = random_index(rng, 120, 8);
    const auto q = random_unit(rng, 8);
    const auto picked = select_diverse_mmr(index, q, {10, 0.0, 100});
    const auto top = select_topk(index, q, 10);
    expect(picked.size() == top.size(), "alpha=0 size");
    for (std::size_t i = 0; i < top.size(); ++i) expect(picked[i].id == top[i].id, "alpha=0 order");
  }
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto index = random_index(rng, 150, 8);
    const auto q = random_unit(rng, 8);
    const SelectionConfig config{10, 0.3 + 0.01 * (trial % 40), 100};
    const auto picked = select_diverse_mmr(index, q, config);
    const auto window = index.nearest(q, config.candidate_window);
    std::vector<std::string> chosen;
    for (const auto& p : picked) {
      auto objective = [&](const ScoredId& c) {
        double penalty = 0.0;
        for (const auto& s : chosen) penalty += index.cosine(index.position(c.id), index.position(s));
        return c.score - config.alpha * penalty;
      };
      double best = -1e300;
      double mine = 0.0;
      for (const auto& c : window) {
        if (std::find(chosen.begin(), chosen.end(), c.id) != chosen.end()) continue;
        best = std::max(best, objective(c));
        if (c.id == p.id) mine = objective(c);
      }
      worst = std::max(worst, best - mine);
      expect(best - mine <= kGreedyTolerance, "greedy step not maximal");
      chosen.push_back(p.id);
    }
  }
  const std::vector<ScoredId> window{{"a", 0.9}, {"b", 0.8}, {"c", 0.5}};
  const double cos[3][3] = {{1, 0.95, 0}, {0.95, 1, 0}, {0, 0, 1}};
  const auto hand = greedy_mmr(window, [&](std::size_t i, std::size_t j) { return cos[i][j]; }, 2, 0.5);
  expect(hand.size() == 2 && hand[0].id == "a" && hand[1].id == "c", "hand fixture must pick {a, c}");
  const double elapsed = seconds_since(start);
  expect(elapsed < kMmrSeconds, "runtime " + std::to_string(elapsed) + " s");
  std::ostringstream detail;
  detail << "max greedy gap " << worst << ", " << elapsed << " s";
  return {true, detail.str()};
}

Outcome diversity() {
  Rng rng(104);
  const auto& schema = testing::fixture_schema();
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = 1 + testing::pick(rng, 10);
    std::vector<StateChange> deltas;
    for (std::size_t j = 0; j < k; ++j) deltas.push_back(testing::random_delta(rng, schema, 2));
    const auto distinct = diversity_distinct_slots(deltas);
    const auto h = diversity_entropy(deltas);
    expect(distinct >= 1 && distinct <= k, "distinct out of [1, k]");
    expect(h >= 0.0 && h <= std::log2(static_cast<double>(k)) + 1e-12, "entropy out of [0, log2 k]");
  }
  auto combo = [](std::initializer_list<const char*> slots) {
    StateChange d;
    for (const char* s : slots) d.set(SlotName::parse(s), Literal{"x"});
    return d;
  };
  const std::vector<StateChange> aabc{combo({"hotel-area"}), combo({"hotel-area"}), combo({"hotel-stars"}),
                                      combo({"hotel-area", "hotel-stars"})};
  expect(diversity_distinct_slots(aabc) == 3 && diversity_entropy(aabc) == 1.5, "[A,A,B,C] must give (3, 1.5)");

  // Synthetic pool: 20 slot combinations, 10 near-duplicate examples each.
  const auto slots = schema.all_slots();
  const std::size_t dim = 32;
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < 20; ++c) centers.push_back(random_unit(rng, dim));
  std::vector<std::string> ids;
  std::vector<std::vector<double>> vectors;
  std::map<std::string, StateChange> deltas;
  std::normal_distribution<double> noise(0.0, 0.15);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < 10; ++i) {
      std::vector<double> v = centers[c];
      for (double& x : v) x += noise(rng);
      const std::string id = "c" + std::to_string(100 + c) + "-" + std::to_string(i);
      ids.push_back(id);
      vectors.push_back(normalized(v));
      StateChange d;
      d.set(slots[c], Literal{"x"});
      deltas.emplace(id, std::move(d));
    }
  }
  const ExampleIndex index(std::move(ids), std::move(vectors));
  std::vector<std::vector<double>> queries;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> q(dim, 0.0);
    const auto& a = centers[testing::pick(rng, centers.size())];
    const auto& b = centers[testing::pick(rng, centers.size())];
    for (std::size_t j = 0; j < dim; ++j) q[j] = a[j] + 0.5 * b[j] + noise(rng);
    queries.push_back(normalized(q));
  }
  std::ostringstream detail;
  double previous = 0.0;
  for (const double alpha : {0.0, 0.2, 0.3, 0.5}) {
    double total = 0.0;
    for (const auto& q : queries) {
      std::vector<StateChange> chosen;
      for (const auto& e : select_diverse_mmr(index, q, {10, alpha, 100})) chosen.push_back(deltas.at(e.id));
      total += static_cast<double>(diversity_distinct_slots(chosen));
    }
    const double mean = total / static_cast<double>(queries.size());
    detail << "alpha " << alpha << ": " << mean << "; ";
    expect(mean >= previous, "mean distinct decreased: " + detail.str());
    previous = mean;
  }
  return {true, detail.str()};
}

Outcome round_trip() {
  Rng rng(105);
  const auto& schema = testing::fixture_schema();
  for (int i = 0; i < 1000; ++i) {
    const auto d = testing::random_delta(rng, schema);
    const auto parsed = parse_completion(canonicalize_completion(d), schema);
    expect(parsed.parsed() && parsed.delta() == d, "delta " + std::to_string(i) + " did not survive");
  }
  const auto coref = parse_completion("state.restaurant = find_restaurant(area = state.hotel.area)", schema);
  expect(coref.parsed(), "coreference string rejected");
  const auto& updates = coref.delta().updates();
  expect(updates.size() == 1 && coref.delta().removals().empty(), "coreference string shape");
  const auto* ref = std::get_if<Reference>(&updates.at({"restaurant", "area"}));
  expect(ref != nullptr && ref->target == SlotName{"hotel", "area"}, "coreference target");
  return {true, "1000 deltas exact, coreference parsed"};
}

ScoredCompletion candidate(std::string text, double cond, double prior) {
  ScoredCompletion c;
  c.canonical_text = std::move(text);
  c.cond_logprob = cond;
  c.prior_logprob = prior;
  return c;
}

Outcome pmi() {
  Rng rng(106);
  std::uniform_real_distribution<double> u(-30.0, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<ScoredCompletion> cs;
    for (std::size_t i = 0, n = 2 + testing::pick(rng, 4); i < n; ++i)
      cs.push_back(candidate("c" + std::to_string(i), u(rng), u(rng)));
    const auto best = pmi_beta_rank(cs, 0.0);
    for (const auto& c : cs) expect(cs[best].cond_logprob >= c.cond_logprob, "beta=0 is not likelihood ranking");
  }
  // Hand arithmetic: ln 10; ln .1 - .4 ln .01; ln .12 - .4 ln .5.
  std::vector<ScoredCompletion> one{candidate("a", std::log(0.1), std::log(0.01))};
  pmi_beta_rank(one, 1.0);
  expect(std::abs(one[0].pmi_score - 2.302585092994046) <= kPmiTolerance, "beta=1 fixture");
  std::vector<ScoredCompletion> two{candidate("first", std::log(0.1), std::log(0.01)),
                                    candidate("second", std::log(0.12), std::log(0.5))};
  expect(pmi_beta_rank(two, 0.4) == 0, "first must win despite lower cond");
  expect(std::abs(two[0].pmi_score - -0.460517018598809) <= kPmiTolerance, "beta=.4 first score");
  expect(std::abs(two[1].pmi_score - -1.8430046639761128) <= kPmiTolerance, "beta=.4 second score");

  const ClipConfig few = ClipConfig::few_shot();
  const std::vector<double> tiny{std::log(1e-9)};
  expect(clipped_logprob(tiny, few) == std::log(5e-7), "token floor");
  const std::vector<double> long_tail(5, std::log(0.01));
  expect(clipped_logprob(long_tail, few) == std::log(1e-7), "sequence floor");
  const std::vector<double> fine{std::log(0.5), std::log(0.5)};
  expect(std::abs(clipped_logprob(fine, few) - std::log(0.25)) <= kPmiTolerance, "unclipped sum");
  const ClipConfig zero = ClipConfig::zero_shot();
  expect(clipped_logprob(tiny, zero) == std::log(5e-4), "zero-shot token floor");
  const std::vector<double> three(3, std::log(1e-9));
  expect(clipped_logprob(three, zero) == std::log(1e-5), "zero-shot sequence floor");
  return {true, "100 sets, fixtures within 1e-9, floors at both levels"};
}

Outcome normalizer() {
  const SlotName people{"hotel", "book_people"};
  CanonicalMap::SlotForms forms;
  forms.canonical = {"1", "2", "3"};
  const CanonicalMap numbers({{people, forms}}, {});
  expect(numbers.link(people, "one") == std::optional<std::string>("1"), "\"one\" must link to \"1\"");
  CanonicalMap::SlotForms words;
  words.canonical = {"one", "two"};
  const CanonicalMap spelled({{people, words}}, {});
  expect(spelled.link(people, "1") == std::optional<std::string>("one"), "\"1\" must link to \"one\"");
  expect(fuzzy_ratio("abcd", "abce") == 75, "fuzzy_ratio fixture");

  const SlotName name{"hotel", "name"};
  CanonicalMap::SlotForms acorn;
  acorn.canonical = {"the acorn", "acorn hotel"};
  const CanonicalMap ambiguous({{name, acorn}}, {});
  expect(!ambiguous.audit({{name, {{"acorn", 1}}}}).ok(), "ambiguous fixture not flagged");

  const auto inputs = load_inputs(testing::fixture_config("unused"));
  const auto counts = gold_surface_counts(inputs.train);
  const auto map = build_canonical_map(inputs.schema, inputs.database, inputs.ontology, &counts);
  Rng rng(107);
  for (int i = 0; i < 500; ++i) {
    const auto d = testing::random_delta(rng, inputs.schema);
    const auto once = normalize_prediction(d, map);
    expect(normalize_prediction(once, map) == once, "not idempotent at delta " + std::to_string(i));
  }
  return {true, "aliases link both ways, ratio 75, ambiguity flagged, 500 deltas idempotent"};
}

double run_jga(const ExperimentConfig& config, const ExperimentInputs& inputs) {
  const auto lm = make_language_model(config, inputs);
  return nlohmann::json::parse(metrics_json(run_experiment(config, inputs, *lm)))["mean_jga"].get<double>();
}

Outcome end_to_end() {
  const auto start = Clock::now();
  testing::TempDir dir;
  auto config = testing::fixture_config(dir / "out");
  const auto inputs = load_inputs(config);
  std::ostringstream detail;

  const double gold = run_jga(config, inputs);
  detail << "gold " << gold;
  expect(gold == 1.0, "gold mock JGA " + std::to_string(gold));

  config.gateway.kind = "mock";
  config.gateway.mock_table = dir / "misspelled.json";
  testing::write_mock_table(inputs.test, inputs.schema, testing::misspelled, config.gateway.mock_table);
  const double misspelled = run_jga(config, inputs);
  detail << ", misspelled " << misspelled;
  expect(misspelled == 1.0, "misspelling mock JGA " + std::to_string(misspelled));

  // One spurious slot on turn 0 of the 3-turn train dialogue stays in the
  // carried state, so 3 of 16 turns are wrong.
  config.gateway.mock_table = dir / "single_error.json";
  testing::write_mock_table(inputs.test, inputs.schema, testing::single_error, config.gateway.mock_table);
  const double single = run_jga(config, inputs);
  detail << ", single error " << single;
  expect(single == 13.0 / 16.0, "single-error JGA " + std::to_string(single));

  const double elapsed = seconds_since(start);
  detail << ", " << elapsed << " s";
  expect(elapsed < kEndToEndSeconds, "runtime " + detail.str());
  return {true, detail.str()};
}

Outcome determinism() {
  testing::TempDir dir;
  auto config = testing::fixture_config(dir / "out");
  config.gateway.kind = "openai";
  config.gateway.retry_delay_ms = 1;
  config.paths.cache = dir / "cache.jsonl";
  config.seeds = {0, 1};
  const auto inputs = load_inputs(config);
  std::string live;
  {
    const auto oracle = make_oracle_model(inputs.test, inputs.schema);
    testing::MockOpenAIServer server(*oracle);
    config.gateway.endpoint = server.endpoint();
    const auto lm = make_language_model(config, inputs);
    live = metrics_json(run_experiment(config, inputs, *lm));
  }
  config.gateway.replay_only = true;
  for (int i = 0; i < 2; ++i) {
    const auto lm = make_language_model(config, inputs);
    expect(metrics_json(run_experiment(config, inputs, *lm)) == live, "replay metrics differ");
  }
  return {true, "two replays byte-identical to the live run"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"delta algebra round trip", delta_algebra},
      {"sim_f1 fixtures and symmetry", sim_f1_suite},
      {"mmr selection", mmr},
      {"diversity metrics", diversity},
      {"parser/renderer round trip", round_trip},
      {"pmi-beta scoring", pmi},
      {"normalizer", normalizer},
      {"end to end on fixture corpus", end_to_end},
      {"replay determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome outcome;
    try {
      outcome = check();
    } catch (const std::exception& e) {
      outcome = {false, e.what()};
    }
    std::cout << (outcome.ok ? "PASS " : "FAIL ") << name << ": " << outcome.detail << std::endl;
    if (!outcome.ok) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
