// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/normalizer.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "codedst/errors.hpp"

namespace codedst {

namespace {

constexpr std::array<std::string_view, 11> kNumberWords = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string word;
  while (in >> word) words.push_back(word);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Rewrites every number token to digit form (to_digits) or word form.
std::string swap_numbers(const std::string& text, bool to_digits) {
  auto words = split_words(text);
  for (auto& word : words) {
    for (std::size_t n = 0; n < kNumberWords.size(); ++n) {
      const auto digits = std::to_string(n);
      if (to_digits && word == kNumberWords[n]) word = digits;
      if (!to_digits && word == digits) word = std::string(kNumberWords[n]);
    }
  }
  return join_words(words);
}

bool ends_with_word(const std::string& text, const std::string& suffix) {
  return text.size() > suffix.size() + 1 && text.ends_with(suffix) &&
         text[text.size() - suffix.size() - 1] == ' ';
}

}  // namespace

const std::vector<std::string>& default_alias_suffixes() {
  static const std::vector<std::string> suffixes = {
      "hotel", "guest house", "guesthouse", "restaurant", "museum", "college",
      "church", "theatre",     "cinema",     "gallery",    "attraction"};
  return suffixes;
}

std::string fold(std::string_view text) {
  std::string out;
  bool space = false;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  }
  return out;
}

std::set<std::string> aliases(std::string_view surface, const std::vector<std::string>& suffixes) {
  std::set<std::string> out = {std::string(surface)};
  const auto base = fold(surface);
  out.insert(base);
  const auto core = base.starts_with("the ") ? base.substr(4) : base;

  std::set<std::string> cores = {core};
  bool has_suffix = false;
  for (const auto& suffix : suffixes) {
    if (ends_with_word(core, suffix)) {
      has_suffix = true;
      cores.insert(core.substr(0, core.size() - suffix.size() - 1));
    }
  }
  if (!has_suffix && !core.empty()) {
    for (const auto& suffix : suffixes) cores.insert(core + " " + suffix);
  }
  for (const auto& c : cores) {
    for (const auto& variant : {c, swap_numbers(c, true), swap_numbers(c, false)}) {
      if (variant.empty()) continue;
      out.insert(variant);
      out.insert("the " + variant);
    }
  }
  return out;
}

int fuzzy_ratio(std::string_view a, std::string_view b) {
  const auto x = fold(a);
  const auto y = fold(b);
  const auto total = x.size() + y.size();
  if (total == 0) return 100;
  // With insert/delete cost 1 and substitution cost 2, D = |a| + |b| - 2 LCS.
  std::vector<std::size_t> row(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diagonal = 0;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const auto above = row[j];
      row[j] = x[i - 1] == y[j - 1] ? diagonal + 1 : std::max(row[j], row[j - 1]);
      diagonal = above;
    }
  }
  const auto lcs = row[y.size()];
  // round-half-up of 100 * 2 LCS / total in integer arithmetic.
  return static_cast<int>((400 * lcs + total) / (2 * total));
}

std::optional<std::string> canonical_time(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos || colon == 0 || colon > 2 || text.size() != colon + 3) {
    return std::nullopt;
  }
  const auto digits = [](std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  const auto hours = text.substr(0, colon);
  const auto minutes = text.substr(colon + 1);
  if (!digits(hours) || !digits(minutes)) return std::nullopt;
  const int h = std::stoi(std::string(hours));
  const int m = std::stoi(std::string(minutes));
  if (h > 23 || m > 59) return std::nullopt;
  std::string out = h < 10 ? "0" + std::to_string(h) : std::to_string(h);
  return out + ":" + std::string(minutes);
}

std::string AuditReport::to_text() const {
  std::ostringstream out;
  out << "# links: " << links.size() << ", ambiguities: " << ambiguities.size() << "\n";
  for (const auto& a : ambiguities) {
    out << "AMBIGUOUS\t" << a.slot.str() << "\t" << a.surface << "\t";
    for (std::size_t i = 0; i < a.canonicals.size(); ++i) out << (i ? " | " : "") << a.canonicals[i];
    out << "\n";
  }
  for (const auto& l : links) out << "LINK\t" << l.slot.str() << "\t" << l.surface << "\t" << l.canonical << "\n";
  return out.str();
}

CanonicalMap::CanonicalMap(std::map<SlotName, SlotForms> slots, NormalizerOptions options)
    : slots_(std::move(slots)), options_(std::move(options)) {
  if (options_.suffixes.empty()) options_.suffixes = default_alias_suffixes();
}

std::vector<std::string> CanonicalMap::matches(const SlotName& slot, std::string_view surface) const {
  const auto it = slots_.find(slot);
  if (it == slots_.end()) return {};
  const auto key = std::make_pair(slot, std::string(surface));
  {
    std::lock_guard lock(cache_->mutex);
    if (const auto hit = cache_->matches.find(key); hit != cache_->matches.end()) return hit->second;
  }
  const auto& forms = it->second;
  const auto variants = aliases(surface, options_.suffixes);
  std::vector<std::string> found;

  if (forms.kind == ValueKind::kTime) {
    for (const auto& alias : variants) {
      if (auto time = canonical_time(alias)) {
        found.push_back(*time);
        break;
      }
    }
  } else if (forms.kind == ValueKind::kInteger && !forms.categorical) {
    for (const auto& alias : variants) {
      if (!alias.empty() && alias.size() <= 3 &&
          std::all_of(alias.begin(), alias.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        found.push_back(std::to_string(std::stoi(alias)));
        break;
      }
    }
  }
  if (found.empty()) {
    for (const auto& canonical : forms.canonical) {
      const auto folded = fold(canonical);
      for (const auto& alias : variants) {
        if (fuzzy_ratio(alias, folded) >= options_.link_threshold) {
          found.push_back(canonical);
          break;
        }
      }
    }
  }
  std::lock_guard lock(cache_->mutex);
  cache_->matches.emplace(key, found);
  return found;
}

std::optional<std::string> CanonicalMap::link(const SlotName& slot, std::string_view surface) const {
  auto found = matches(slot, surface);
  if (found.empty()) return std::nullopt;
  if (found.size() > 1) {
    std::string list;
    for (const auto& c : found) list += (list.empty() ? "" : " | ") + c;
    throw AmbiguousLink(slot.str() + " surface '" + std::string(surface) + "' matches " + list);
  }
  return found.front();
}

std::string CanonicalMap::preferred_surface(const SlotName& slot, const std::string& canonical) const {
  const auto it = slots_.find(slot);
  if (it != slots_.end()) {
    if (const auto p = it->second.preferred.find(canonical); p != it->second.preferred.end()) return p->second;
  }
  return canonical;
}

void CanonicalMap::set_preferred(const SlotName& slot, const std::string& canonical, std::string surface) {
  slots_[slot].preferred.insert_or_assign(canonical, std::move(surface));
}

AuditReport CanonicalMap::audit(const SurfaceCounts& surfaces) const {
  AuditReport report;
  for (const auto& [slot, counts] : surfaces) {
    for (const auto& [surface, count] : counts) {
      auto found = matches(slot, surface);
      if (found.size() == 1) {
        report.links.push_back({slot, surface, found.front()});
      } else if (found.size() > 1) {
        report.ambiguities.push_back({slot, surface, std::move(found)});
      }
    }
  }
  return report;
}

StateChange CanonicalMap::normalize(const StateChange& delta) const {
  StateChange out = delta;
  for (const auto& [slot, value] : delta.updates()) {
    const auto* literal = std::get_if<Literal>(&value);
    if (literal == nullptr) continue;
    const auto it = slots_.find(slot);
    if (it == slots_.end()) continue;
    std::string text = literal->text;
    if (it->second.kind == ValueKind::kTime) {
      if (auto time = canonical_time(fold(text))) text = *time;
    }
    std::optional<std::string> canonical;
    try {
      canonical = link(slot, text);
    } catch (const AmbiguousLink&) {
      canonical.reset();
    }
    if (canonical) text = preferred_surface(slot, *canonical);
    out.set(slot, Literal{std::move(text)});
  }
  return out;
}

SurfaceCounts audit_surfaces(const Ontology& ontology, const SurfaceCounts* gold_counts) {
  SurfaceCounts surfaces;
  for (const auto& [slot, forms] : ontology.surface_forms) {
    for (const auto& form : forms) surfaces[slot][form] += 1;
  }
  if (gold_counts != nullptr) {
    for (const auto& [slot, counts] : *gold_counts) {
      for (const auto& [surface, count] : counts) {
        if (surface != kDontCareText) surfaces[slot][surface] += count;
      }
    }
  }
  return surfaces;
}

CanonicalMap build_canonical_map(const CanonicalSchema& schema, const EntityDatabase& db,
                                 const Ontology& ontology, const SurfaceCounts* gold_counts,
                                 NormalizerOptions options) {
  std::set<std::string> addressed_names;
  for (const auto& [domain, entities] : db.domains) {
    for (const auto& entity : entities) {
      if (entity.address && !entity.address->empty()) addressed_names.insert(entity.name);
    }
  }

  std::map<SlotName, CanonicalMap::SlotForms> slots;
  for (const auto& domain : schema.domains()) {
    for (const auto& def : domain.slots) {
      CanonicalMap::SlotForms forms;
      forms.kind = def.kind;
      forms.categorical = def.categorical;
      if (def.categorical) {
        forms.canonical.insert(def.allowed_values.begin(), def.allowed_values.end());
      } else {
        if (const auto it = db.domains.find(domain.name); it != db.domains.end()) {
          for (const auto& entity : it->second) {
            if (def.name == "name") {
              forms.canonical.insert(entity.name);
            } else if (const auto attr = entity.attributes.find(def.name); attr != entity.attributes.end()) {
              forms.canonical.insert(attr->second);
            }
          }
        }
        if (def.kind == ValueKind::kLocation) forms.canonical.insert(addressed_names.begin(), addressed_names.end());
        if (def.kind == ValueKind::kBoolean) forms.canonical.insert({"yes", "no"});
      }
      slots.emplace(SlotName{domain.name, def.name}, std::move(forms));
    }
  }

  const bool strict = options.strict_audit;
  const auto pseudo = options.ontology_pseudo_count;
  CanonicalMap map(std::move(slots), std::move(options));

  // canonical -> surface -> smoothed count, per slot.
  std::map<SlotName, std::map<std::string, std::map<std::string, std::size_t>>> tallies;
  const auto tally = [&](const SlotName& slot, const std::string& surface, std::size_t count) {
    if (surface == kDontCareText) return;
    const auto found = map.matches(slot, surface);
    if (found.size() == 1) tallies[slot][found.front()][surface] += count;
  };
  if (gold_counts != nullptr) {
    for (const auto& [slot, counts] : *gold_counts) {
      for (const auto& [surface, count] : counts) tally(slot, surface, count);
    }
  }
  for (const auto& [slot, forms] : ontology.surface_forms) {
    for (const auto& form : forms) tally(slot, form, pseudo);
  }
  for (const auto& [slot, by_canonical] : tallies) {
    for (const auto& [canonical, counts] : by_canonical) {
      // Highest count; ties to the lexicographically smallest surface.
      const auto best = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) {
        return a.second < b.second;
      });
      map.set_preferred(slot, canonical, best->first);
    }
  }

  if (strict) {
    const auto report = map.audit(audit_surfaces(ontology, gold_counts));
    if (!report.ok()) throw AmbiguousLink("normalizer audit failed:\n" + report.to_text());
  }
  return map;
}

StateChange normalize_prediction(const StateChange& delta, const CanonicalMap& map) {
  return map.normalize(delta);
}

}  // namespace codedst
