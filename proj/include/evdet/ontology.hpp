#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evdet/common.hpp"

namespace evdet {

// One node of the event-type ontology.
struct EventType {
  std::string type_id;
  std::string name;
  std::string definition;
  std::optional<std::string> parent_id;
};

// A predicate roleset and the event types it can denote. A mapping with a
// single candidate is "clean"; anything larger yields partial labels.
struct RolesetMapping {
  std::string roleset_id;
  std::vector<std::string> candidate_type_ids;  // ordered, no duplicates

  bool clean() const { return candidate_type_ids.size() == 1; }
};

// The predicate lemma of a roleset id ("pay" in "pay.01"). Ids without a
// sense delimiter are returned whole.
std::string roleset_predicate(const std::string& roleset_id);

enum class HierarchyRelation { same, child, parent, sibling, unrelated };

const char* to_string(HierarchyRelation rel);

// Immutable after load; safe for concurrent reads. std::map keeps iteration
// order stable so downstream artifacts are reproducible.
class Ontology {
 public:
  Ontology() = default;
  Ontology(std::vector<EventType> types, std::vector<RolesetMapping> mappings);

  const std::map<std::string, EventType>& types() const { return types_; }
  const std::map<std::string, RolesetMapping>& mappings() const { return mappings_; }

  bool has_type(const std::string& type_id) const { return types_.count(type_id) > 0; }
  const EventType& type(const std::string& type_id) const;
  const RolesetMapping* find_mapping(const std::string& roleset_id) const;

  // Relation of b (gold) relative to a (prediction), one edge only:
  // "child" iff b's parent is a, "parent" iff a's parent is b, "sibling"
  // iff a != b and both share the same non-null parent.
  HierarchyRelation hierarchy_relation(const std::string& a, const std::string& b) const;

  // All rolesets whose candidates include type_id.
  std::vector<std::string> rolesets_of_type(const std::string& type_id) const;

 private:
  std::map<std::string, EventType> types_;
  std::map<std::string, RolesetMapping> mappings_;
};

// Declarative curation rules; curation is data, not code.
struct FilterRules {
  std::vector<std::string> deny_types;
  std::vector<std::string> deny_rolesets;
  int min_mentions = 0;
};

FilterRules filter_rules_from_json(const json& doc);

// Loads the JSON-lines ontology document: records {"kind":"type", ...} and
// {"kind":"mapping", ...}. Validates id uniqueness, reference closure,
// parent acyclicity, and non-empty definitions.
Ontology load_ontology(const std::filesystem::path& path, Warnings* warnings = nullptr);
Ontology ontology_from_records(const std::vector<json>& records, Warnings* warnings = nullptr);

void save_ontology(const std::filesystem::path& path, const Ontology& ont);

// Applies deny lists and the minimum-mention threshold. `roleset_mentions`
// supplies the observed mention count per roleset (absent = 0). Mappings are
// pruned of removed types; mappings left empty are dropped.
Ontology filter_ontology(const Ontology& ont, const FilterRules& rules,
                         const std::map<std::string, int>& roleset_mentions = {});

}  // namespace evdet
