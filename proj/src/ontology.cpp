#include "evdet/ontology.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace evdet {

std::string roleset_predicate(const std::string& roleset_id) {
  auto pos = roleset_id.rfind('.');
  if (pos == std::string::npos || pos == 0) return roleset_id;
  return roleset_id.substr(0, pos);
}

const char* to_string(HierarchyRelation rel) {
  switch (rel) {
    case HierarchyRelation::same: return "same";
    case HierarchyRelation::child: return "child";
    case HierarchyRelation::parent: return "parent";
    case HierarchyRelation::sibling: return "sibling";
    case HierarchyRelation::unrelated: return "unrelated";
  }
  return "unrelated";
}

Ontology::Ontology(std::vector<EventType> types, std::vector<RolesetMapping> mappings) {
  for (auto& t : types) types_.emplace(t.type_id, std::move(t));
  for (auto& m : mappings) mappings_.emplace(m.roleset_id, std::move(m));
}

const EventType& Ontology::type(const std::string& type_id) const {
  auto it = types_.find(type_id);
  if (it == types_.end()) throw ArgumentError("unknown type id: " + type_id);
  return it->second;
}

const RolesetMapping* Ontology::find_mapping(const std::string& roleset_id) const {
  auto it = mappings_.find(roleset_id);
  return it == mappings_.end() ? nullptr : &it->second;
}

HierarchyRelation Ontology::hierarchy_relation(const std::string& a, const std::string& b) const {
  const EventType& ta = type(a);
  const EventType& tb = type(b);
  if (a == b) return HierarchyRelation::same;
  if (tb.parent_id && *tb.parent_id == a) return HierarchyRelation::child;
  if (ta.parent_id && *ta.parent_id == b) return HierarchyRelation::parent;
  if (ta.parent_id && tb.parent_id && *ta.parent_id == *tb.parent_id) {
    return HierarchyRelation::sibling;
  }
  return HierarchyRelation::unrelated;
}

std::vector<std::string> Ontology::rolesets_of_type(const std::string& type_id) const {
  std::vector<std::string> out;
  for (const auto& [rid, mapping] : mappings_) {
    if (std::find(mapping.candidate_type_ids.begin(), mapping.candidate_type_ids.end(),
                  type_id) != mapping.candidate_type_ids.end()) {
      out.push_back(rid);
    }
  }
  return out;
}

FilterRules filter_rules_from_json(const json& doc) {
  FilterRules rules;
  if (doc.contains("deny_types")) {
    rules.deny_types = doc.at("deny_types").get<std::vector<std::string>>();
  }
  if (doc.contains("deny_rolesets")) {
    rules.deny_rolesets = doc.at("deny_rolesets").get<std::vector<std::string>>();
  }
  rules.min_mentions = doc.value("min_mentions", 0);
  return rules;
}

namespace {

// Walks parent links from every node; reports the first cycle found by
// naming its members.
void check_parent_acyclic(const std::map<std::string, EventType>& types) {
  // 0 = unvisited, 1 = on current path, 2 = done
  std::map<std::string, int> state;
  for (const auto& [id, t] : types) {
    if (state[id] != 0) continue;
    std::vector<std::string> path;
    std::string cur = id;
    while (true) {
      if (state[cur] == 2) break;
      if (state[cur] == 1) {
        // Found a cycle: collect path members from the first occurrence.
        auto it = std::find(path.begin(), path.end(), cur);
        std::ostringstream msg;
        msg << "cycle in parent graph: {";
        for (auto p = it; p != path.end(); ++p) {
          if (p != it) msg << ", ";
          msg << *p;
        }
        msg << "}";
        throw ValidationError(msg.str());
      }
      state[cur] = 1;
      path.push_back(cur);
      const EventType& t = types.at(cur);
      if (!t.parent_id) break;
      cur = *t.parent_id;
    }
    for (const auto& p : path) state[p] = 2;
  }
}

}  // namespace

Ontology ontology_from_records(const std::vector<json>& records, Warnings* warnings) {
  std::vector<EventType> types;
  std::vector<RolesetMapping> mappings;
  std::set<std::string> seen_types;
  std::set<std::string> seen_rolesets;

  size_t lineno = 0;
  for (const auto& rec : records) {
    ++lineno;
    const std::string where = "record " + std::to_string(lineno);
    if (!rec.is_object() || !rec.contains("kind")) {
      throw ParseError(where + ": missing \"kind\"");
    }
    const std::string kind = rec.at("kind").get<std::string>();
    if (kind == "type") {
      EventType t;
      try {
        t.type_id = rec.at("type_id").get<std::string>();
        t.name = rec.value("name", "");
        t.definition = rec.at("definition").get<std::string>();
      } catch (const json::exception& e) {
        throw ParseError(where + ": malformed type record: " + e.what());
      }
      if (rec.contains("parent_id") && !rec.at("parent_id").is_null()) {
        const json& par = rec.at("parent_id");
        if (par.is_array()) {
          // Multi-parent input: keep the first, record a warning.
          if (!par.empty()) {
            t.parent_id = par.at(0).get<std::string>();
            if (par.size() > 1) {
              warn(warnings, "type " + t.type_id + ": multiple parents listed; keeping " +
                                 *t.parent_id);
            }
          }
        } else {
          t.parent_id = par.get<std::string>();
        }
      }
      if (t.type_id.empty()) throw ParseError(where + ": empty type_id");
      if (t.definition.empty()) {
        throw ValidationError(where + ": type " + t.type_id + " has an empty definition");
      }
      if (!seen_types.insert(t.type_id).second) {
        throw ValidationError(where + ": duplicate type id " + t.type_id);
      }
      types.push_back(std::move(t));
    } else if (kind == "mapping") {
      RolesetMapping m;
      try {
        m.roleset_id = rec.at("roleset_id").get<std::string>();
        m.candidate_type_ids = rec.at("candidate_type_ids").get<std::vector<std::string>>();
      } catch (const json::exception& e) {
        throw ParseError(where + ": malformed mapping record: " + e.what());
      }
      if (m.candidate_type_ids.empty()) {
        throw ValidationError(where + ": mapping " + m.roleset_id + " has no candidates");
      }
      std::set<std::string> uniq(m.candidate_type_ids.begin(), m.candidate_type_ids.end());
      if (uniq.size() != m.candidate_type_ids.size()) {
        throw ValidationError(where + ": mapping " + m.roleset_id +
                              " lists duplicate candidates");
      }
      if (!seen_rolesets.insert(m.roleset_id).second) {
        throw ValidationError(where + ": duplicate roleset id " + m.roleset_id);
      }
      mappings.push_back(std::move(m));
    } else {
      throw ParseError(where + ": unknown record kind \"" + kind + "\"");
    }
  }

  // Reference closure.
  std::vector<std::string> unresolved;
  for (const auto& t : types) {
    if (t.parent_id && seen_types.count(*t.parent_id) == 0) unresolved.push_back(*t.parent_id);
  }
  for (const auto& m : mappings) {
    for (const auto& cid : m.candidate_type_ids) {
      if (seen_types.count(cid) == 0) unresolved.push_back(cid);
    }
  }
  if (!unresolved.empty()) {
    std::sort(unresolved.begin(), unresolved.end());
    unresolved.erase(std::unique(unresolved.begin(), unresolved.end()), unresolved.end());
    std::string msg = "unresolved type ids:";
    for (const auto& id : unresolved) msg += " " + id;
    throw ValidationError(msg);
  }

  Ontology ont(std::move(types), std::move(mappings));
  check_parent_acyclic(ont.types());
  return ont;
}

Ontology load_ontology(const std::filesystem::path& path, Warnings* warnings) {
  return ontology_from_records(read_jsonl(path), warnings);
}

void save_ontology(const std::filesystem::path& path, const Ontology& ont) {
  std::vector<json> records;
  for (const auto& [id, t] : ont.types()) {
    json rec{{"kind", "type"}, {"type_id", t.type_id}, {"name", t.name},
             {"definition", t.definition}};
    if (t.parent_id) rec["parent_id"] = *t.parent_id;
    records.push_back(std::move(rec));
  }
  for (const auto& [id, m] : ont.mappings()) {
    records.push_back(json{{"kind", "mapping"},
                           {"roleset_id", m.roleset_id},
                           {"candidate_type_ids", m.candidate_type_ids}});
  }
  write_jsonl(path, records);
}

Ontology filter_ontology(const Ontology& ont, const FilterRules& rules,
                         const std::map<std::string, int>& roleset_mentions) {
  std::set<std::string> denied_types(rules.deny_types.begin(), rules.deny_types.end());
  std::set<std::string> denied_rolesets(rules.deny_rolesets.begin(), rules.deny_rolesets.end());

  std::vector<EventType> types;
  for (const auto& [id, t] : ont.types()) {
    if (denied_types.count(id)) continue;
    EventType kept = t;
    // A removed parent leaves the child as a root rather than dangling.
    if (kept.parent_id && denied_types.count(*kept.parent_id)) kept.parent_id.reset();
    types.push_back(std::move(kept));
  }

  std::vector<RolesetMapping> mappings;
  for (const auto& [rid, m] : ont.mappings()) {
    if (denied_rolesets.count(rid)) continue;
    if (rules.min_mentions > 0) {
      auto it = roleset_mentions.find(rid);
      int count = it == roleset_mentions.end() ? 0 : it->second;
      if (count < rules.min_mentions) continue;
    }
    RolesetMapping kept;
    kept.roleset_id = rid;
    for (const auto& cid : m.candidate_type_ids) {
      if (!denied_types.count(cid)) kept.candidate_type_ids.push_back(cid);
    }
    if (!kept.candidate_type_ids.empty()) mappings.push_back(std::move(kept));
  }

  return Ontology(std::move(types), std::move(mappings));
}

}  // namespace evdet
