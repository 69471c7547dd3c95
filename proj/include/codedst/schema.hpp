// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "codedst/state.hpp"

namespace codedst {

enum class ValueKind { kText, kTime, kBoolean, kInteger, kLocation };

std::string_view to_string(ValueKind kind);
std::optional<ValueKind> parse_value_kind(std::string_view text);

struct SlotDef {
  std::string name;
  bool categorical = false;
  std::vector<std::string> allowed_values;  // non-empty iff categorical
  ValueKind kind = ValueKind::kText;
};

struct DomainDef {
  std::string name;
  std::vector<SlotDef> slots;
};

/// Domains and informable slots, in file order.
class CanonicalSchema {
 public:
  CanonicalSchema() = default;
  /// Validates the invariants; throws SchemaParse.
  explicit CanonicalSchema(std::vector<DomainDef> domains);

  const std::vector<DomainDef>& domains() const { return domains_; }
  const DomainDef* find_domain(std::string_view name) const;
  const SlotDef* find_slot(const SlotName& slot) const;
  bool contains(const SlotName& slot) const { return find_slot(slot) != nullptr; }
  std::vector<SlotName> all_slots() const;

 private:
  std::vector<DomainDef> domains_;
};

CanonicalSchema parse_schema(std::string_view json_text);
CanonicalSchema load_schema(const std::filesystem::path& path);

/// Observed surface forms per slot.
struct Ontology {
  std::map<SlotName, std::set<std::string>> surface_forms;
};

Ontology parse_ontology(std::string_view json_text);
Ontology load_ontology(const std::filesystem::path& path);

struct Entity {
  std::string name;
  std::optional<std::string> address;
  std::map<std::string, std::string> attributes;  // excludes name and address
};

/// Entity records per domain.
struct EntityDatabase {
  std::map<std::string, std::vector<Entity>> domains;
};

/// Accepts a single object {"domain": [records...]} or a directory holding one
/// "<domain>.json" array per domain.
EntityDatabase load_database(const std::filesystem::path& path);
EntityDatabase parse_database(std::string_view json_text);

/// Lowercase identifier usable as a code-level name: [a-z][a-z0-9_]*.
bool is_identifier(std::string_view text);

std::string read_file(const std::filesystem::path& path);

}  // namespace codedst
