// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

// Rule-based linking of predicted surface forms to canonical forms, and
// selection of the gold-style surface form to emit for each canonical form.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "codedst/schema.hpp"
#include "codedst/state.hpp"

namespace codedst {

using SurfaceCounts = std::map<SlotName, std::map<std::string, std::size_t>>;

struct NormalizerOptions {
  std::vector<std::string> suffixes;  // empty selects default_alias_suffixes()
  std::size_t ontology_pseudo_count = 10;
  int link_threshold = 90;
  /// Throw AmbiguousLink from build_canonical_map when the audit fails.
  bool strict_audit = true;
};

const std::vector<std::string>& default_alias_suffixes();

/// ASCII lowercase with runs of whitespace collapsed to one space and trimmed.
std::string fold(std::string_view text);

/// Acceptable rephrasings of a surface form: leading "the" toggled, one domain
/// suffix added or removed, number words zero..ten swapped with digits, case
/// folded. Contains the input itself.
std::set<std::string> aliases(std::string_view surface,
                              const std::vector<std::string>& suffixes = default_alias_suffixes());

/// round(100 * (|a| + |b| - D) / (|a| + |b|)), D the edit distance with
/// substitutions costing 2, over case-folded input; 100 for two empty strings.
int fuzzy_ratio(std::string_view a, std::string_view b);

/// "h:mm" or "hh:mm" with hours < 24 and minutes < 60, zero padded.
std::optional<std::string> canonical_time(std::string_view text);

struct AuditReport {
  struct Link {
    SlotName slot;
    std::string surface;
    std::string canonical;
  };
  struct Ambiguity {
    SlotName slot;
    std::string surface;
    std::vector<std::string> canonicals;
  };
  std::vector<Link> links;
  std::vector<Ambiguity> ambiguities;

  bool ok() const { return ambiguities.empty(); }
  std::string to_text() const;
};

class CanonicalMap {
 public:
  struct SlotForms {
    ValueKind kind = ValueKind::kText;
    bool categorical = false;
    std::set<std::string> canonical;                // explicit canonical forms
    std::map<std::string, std::string> preferred;   // canonical -> surface to emit
  };

  CanonicalMap(std::map<SlotName, SlotForms> slots, NormalizerOptions options);

  /// Every canonical form some alias of `surface` matches at the threshold.
  std::vector<std::string> matches(const SlotName& slot, std::string_view surface) const;

  /// The unique matching canonical form, or nullopt. Results are cached.
  /// Throws AmbiguousLink when several canonical forms match.
  std::optional<std::string> link(const SlotName& slot, std::string_view surface) const;

  /// Surface to emit for a canonical form; the form itself when nothing was
  /// observed.
  std::string preferred_surface(const SlotName& slot, const std::string& canonical) const;

  bool covers(const SlotName& slot) const { return slots_.contains(slot); }
  const std::map<SlotName, SlotForms>& slots() const { return slots_; }

  /// Links every given surface, collecting links and ambiguities.
  AuditReport audit(const SurfaceCounts& surfaces) const;

  /// Literal values replaced by the preferred surface of their canonical form;
  /// times padded to hh:mm; unlinked values, DontCare, references and
  /// removals untouched.
  StateChange normalize(const StateChange& delta) const;

  void set_preferred(const SlotName& slot, const std::string& canonical, std::string surface);

 private:
  std::map<SlotName, SlotForms> slots_;
  NormalizerOptions options_;
  struct Cache {
    std::mutex mutex;
    std::map<std::pair<SlotName, std::string>, std::vector<std::string>> matches;
  };
  std::unique_ptr<Cache> cache_ = std::make_unique<Cache>();
};

/// Canonical forms from schema values (categorical), database attributes
/// (non-categorical), names of entities with an address (location slots) and
/// the hh:mm pattern (time slots). Preferred surfaces come from gold counts
/// plus a pseudo-count for every ontology listing; pass no gold counts for
/// zero-shot runs.
CanonicalMap build_canonical_map(const CanonicalSchema& schema, const EntityDatabase& db,
                                 const Ontology& ontology, const SurfaceCounts* gold_counts,
                                 NormalizerOptions options = {});

/// Surfaces to audit: ontology listings plus gold surfaces.
SurfaceCounts audit_surfaces(const Ontology& ontology, const SurfaceCounts* gold_counts);

StateChange normalize_prediction(const StateChange& delta, const CanonicalMap& map);

}  // namespace codedst
