// Copyright 2026 The codedst Authors
// SPDX-License-Identifier: Apache-2.0

#include "codedst/schema.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "codedst/errors.hpp"

namespace codedst {

using nlohmann::json;

namespace {

std::string attribute_text(const json& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer()) return std::to_string(value.get<long long>());
  if (value.is_boolean()) return value.get<bool>() ? "yes" : "no";
  return value.dump();
}

Entity parse_entity(const json& record) {
  if (!record.is_object() || !record.contains("name") || !record["name"].is_string() ||
      record["name"].get<std::string>().empty()) {
    throw DataParse("database record without a non-empty name");
  }
  Entity entity;
  entity.name = record["name"].get<std::string>();
  for (const auto& [key, value] : record.items()) {
    if (key == "name" || value.is_null()) continue;
    if (key == "address") {
      entity.address = attribute_text(value);
    } else if (value.is_string() || value.is_number() || value.is_boolean()) {
      entity.attributes.emplace(key, attribute_text(value));
    }
  }
  return entity;
}

std::vector<Entity> parse_entities(const json& array, const std::string& domain) {
  if (!array.is_array()) throw DataParse("database entry for '" + domain + "' is not an array");
  std::vector<Entity> out;
  out.reserve(array.size());
  for (const auto& record : array) out.push_back(parse_entity(record));
  return out;
}

}  // namespace

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::kText: return "text";
    case ValueKind::kTime: return "time";
    case ValueKind::kBoolean: return "boolean";
    case ValueKind::kInteger: return "integer";
    case ValueKind::kLocation: return "location";
  }
  return "text";
}

std::optional<ValueKind> parse_value_kind(std::string_view text) {
  for (auto kind : {ValueKind::kText, ValueKind::kTime, ValueKind::kBoolean, ValueKind::kInteger,
                    ValueKind::kLocation}) {
    if (to_string(kind) == text) return kind;
  }
  return std::nullopt;
}

bool is_identifier(std::string_view text) {
  if (text.empty() || text.front() < 'a' || text.front() > 'z') return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
  });
}

CanonicalSchema::CanonicalSchema(std::vector<DomainDef> domains) : domains_(std::move(domains)) {
  std::set<std::string> domain_names;
  for (const auto& domain : domains_) {
    if (!is_identifier(domain.name)) throw SchemaParse("invalid domain name '" + domain.name + "'");
    if (!domain_names.insert(domain.name).second) {
      throw SchemaParse("duplicate domain '" + domain.name + "'");
    }
    std::set<std::string> slot_names;
    for (const auto& slot : domain.slots) {
      if (!is_identifier(slot.name)) {
        throw SchemaParse("invalid slot name '" + domain.name + "-" + slot.name + "'");
      }
      if (!slot_names.insert(slot.name).second) {
        throw SchemaParse("duplicate slot '" + slot.name + "' in domain '" + domain.name + "'");
      }
      if (slot.categorical && slot.allowed_values.empty()) {
        throw SchemaParse("categorical slot '" + domain.name + "-" + slot.name + "' has no values");
      }
    }
  }
}

const DomainDef* CanonicalSchema::find_domain(std::string_view name) const {
  const auto it = std::find_if(domains_.begin(), domains_.end(),
                               [&](const DomainDef& d) { return d.name == name; });
  return it == domains_.end() ? nullptr : &*it;
}

const SlotDef* CanonicalSchema::find_slot(const SlotName& slot) const {
  const auto* domain = find_domain(slot.domain);
  if (domain == nullptr) return nullptr;
  const auto it = std::find_if(domain->slots.begin(), domain->slots.end(),
                               [&](const SlotDef& s) { return s.name == slot.slot; });
  return it == domain->slots.end() ? nullptr : &*it;
}

std::vector<SlotName> CanonicalSchema::all_slots() const {
  std::vector<SlotName> out;
  for (const auto& domain : domains_) {
    for (const auto& slot : domain.slots) out.push_back({domain.name, slot.name});
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataParse("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

CanonicalSchema parse_schema(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SchemaParse(std::string("schema is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("domains") || !doc["domains"].is_array()) {
    throw SchemaParse("schema must be an object with a 'domains' array");
  }
  std::vector<DomainDef> domains;
  try {
    for (const auto& d : doc["domains"]) {
      DomainDef domain;
      domain.name = d.at("name").get<std::string>();
      for (const auto& s : d.at("slots")) {
        SlotDef slot;
        slot.name = s.at("name").get<std::string>();
        slot.categorical = s.value("categorical", false);
        if (s.contains("values")) slot.allowed_values = s["values"].get<std::vector<std::string>>();
        const auto kind_text = s.value("kind", std::string("text"));
        const auto kind = parse_value_kind(kind_text);
        if (!kind) throw SchemaParse("unknown value kind '" + kind_text + "'");
        slot.kind = *kind;
        domain.slots.push_back(std::move(slot));
      }
      domains.push_back(std::move(domain));
    }
  } catch (const json::exception& e) {
    throw SchemaParse(std::string("malformed schema: ") + e.what());
  }
  return CanonicalSchema(std::move(domains));
}

CanonicalSchema load_schema(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataParse& e) {
    throw SchemaParse(e.what());
  }
  return parse_schema(text);
}

Ontology parse_ontology(std::string_view json_text) {
  Ontology ontology;
  try {
    const auto doc = json::parse(json_text);
    if (!doc.is_object()) throw DataParse("ontology must be a JSON object");
    for (const auto& [key, values] : doc.items()) {
      auto& forms = ontology.surface_forms[SlotName::parse(key)];
      for (const auto& v : values) forms.insert(v.get<std::string>());
    }
  } catch (const json::exception& e) {
    throw DataParse(std::string("malformed ontology: ") + e.what());
  }
  return ontology;
}

Ontology load_ontology(const std::filesystem::path& path) { return parse_ontology(read_file(path)); }

EntityDatabase parse_database(std::string_view json_text) {
  EntityDatabase db;
  try {
    const auto doc = json::parse(json_text);
    if (!doc.is_object()) throw DataParse("database must be a JSON object keyed by domain");
    for (const auto& [domain, records] : doc.items()) {
      db.domains[domain] = parse_entities(records, domain);
    }
  } catch (const json::exception& e) {
    throw DataParse(std::string("malformed database: ") + e.what());
  }
  return db;
}

EntityDatabase load_database(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return parse_database(read_file(path));
  EntityDatabase db;
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(path)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    const auto domain = file.stem().string();
    try {
      db.domains[domain] = parse_entities(json::parse(read_file(file)), domain);
    } catch (const json::exception& e) {
      throw DataParse("malformed database file " + file.string() + ": " + e.what());
    }
  }
  return db;
}

}  // namespace codedst
