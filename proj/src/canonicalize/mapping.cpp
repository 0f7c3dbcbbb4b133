#include "medmsa/canonicalize/mapping.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

#include "medmsa/fsutil.hpp"
#include "medmsa/synthesis/pipeline.hpp"

namespace medmsa::canonicalize {
namespace {

// LM answer as a map, or nullopt when it is not a JSON object of strings.
std::optional<std::map<std::string, std::string>> parse_answer(const std::string& text) {
  auto open = text.find('{');
  auto close = text.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
  Json j = Json::parse(text.substr(open, close - open + 1), nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) return std::nullopt;
    out[normalize(k)] = normalize(v.get<std::string>());
  }
  return out;
}

// Follows a → b → c ... to a fixed point; a cycle resolves to its smallest
// member.
std::string chase(const std::string& start, const std::map<std::string, std::string>& next) {
  std::vector<std::string> seen{start};
  std::string cur = start;
  for (;;) {
    auto it = next.find(cur);
    if (it == next.end() || it->second == cur) return cur;
    cur = it->second;
    auto pos = std::find(seen.begin(), seen.end(), cur);
    if (pos != seen.end()) return *std::min_element(pos, seen.end());
    seen.push_back(cur);
  }
}

}  // namespace

const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::LM: return "LM";
    case Provenance::Override: return "Override";
    case Provenance::Identity: return "Identity";
  }
  return "Identity";
}

Provenance parse_provenance(const std::string& name) {
  if (name == "LM") return Provenance::LM;
  if (name == "Override") return Provenance::Override;
  if (name == "Identity") return Provenance::Identity;
  throw Error("SchemaError", "unknown provenance '" + name + "'");
}

const std::string& CategoryMapping::canonical(const std::string& raw) const {
  if (auto it = entries.find(raw); it != entries.end()) return it->second.canonical;
  if (auto it = entries.find(normalize(raw)); it != entries.end()) return it->second.canonical;
  throw UnmappedCategory(raw);
}

std::set<std::string> CategoryMapping::targets() const {
  std::set<std::string> out;
  for (const auto& [raw, e] : entries) out.insert(e.canonical);
  return out;
}

std::string normalize(const std::string& raw) {
  std::string out;
  bool space = false;
  for (char c : raw) {
    if (c == '_' || std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

bool is_catch_all(const std::string& canonical) { return canonical == "other"; }

std::set<std::string> categories(const std::vector<const ppl::SampleSet*>& sets, const std::string& query) {
  std::set<std::string> out;
  for (const auto* s : sets) {
    const auto* values = s->find(query);
    if (!values) continue;
    for (const auto& v : *values)
      if (v.is_string()) out.insert(v.as_string());
  }
  return out;
}

std::map<std::string, std::string> load_overrides(const std::filesystem::path& path) {
  Json j = Json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("BadOverrides", path.string() + " is not a JSON object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) {
    if (!v.is_string()) throw Error("BadOverrides", "override for '" + k + "' is not a string");
    out[normalize(k)] = normalize(v.get<std::string>());
  }
  return out;
}

CategoryMapping build_mapping(const std::set<std::string>& raw_categories, lm::Client& lm,
                              const std::string& prompt_template, const std::map<std::string, std::string>& overrides) {
  if (raw_categories.empty()) throw Error("BadInput", "no categories to map");
  CategoryMapping m;
  std::set<std::string> names;
  for (const auto& r : raw_categories) names.insert(normalize(r));

  Json list = Json::array();
  for (const auto& n : names) list.push_back(n);
  std::string prompt = synthesis::fill(prompt_template, {{"categories", list.dump()}});
  m.source_prompt_hash = lm::fixture_key(lm::Stage::Canonicalize, prompt);
  auto answer = parse_answer(lm.complete(lm::LmRequest::make(lm::Stage::Canonicalize, prompt), 0).text);
  if (!answer) {
    m.lm_unparsable = true;
    m.warnings.push_back("MappingUnparsable: LM answer is not a JSON object of strings; using identity mapping");
  }

  std::map<std::string, std::string> next;
  std::set<std::string> from_lm;
  if (answer) {
    for (const auto& [from, to] : *answer) {
      if (!names.contains(from) || from == to) continue;
      if (!names.contains(to)) {
        m.warnings.push_back("LM target '" + to + "' for '" + from + "' is not an input category; kept '" + from + "'");
        continue;
      }
      if (from == "heart attack") {
        m.warnings.push_back("LM remapped 'heart attack' to '" + to + "'; kept 'heart attack'");
        continue;
      }
      next[from] = to;
      from_lm.insert(from);
    }
  }
  for (const auto& [from, to] : overrides) next[from] = to;

  for (const auto& raw : raw_categories) {
    std::string n = normalize(raw);
    std::string canonical = chase(n, next);
    Provenance p = Provenance::Identity;
    if (canonical != n || overrides.contains(n)) {
      // Override if any hop on the chain came from the override file.
      p = Provenance::LM;
      for (std::string cur = n; cur != canonical;) {
        if (overrides.contains(cur)) {
          p = Provenance::Override;
          break;
        }
        auto it = next.find(cur);
        if (it == next.end()) break;
        cur = it->second;
      }
      if (overrides.contains(n)) p = Provenance::Override;
    } else if (answer && answer->contains(n)) {
      p = Provenance::LM;
    }
    m.entries[raw] = MappingEntry{canonical, p};
  }
  return m;
}

CategoryMapping extend_mapping(const CategoryMapping& base, const std::set<std::string>& raw_categories,
                               lm::Client& lm, const std::string& prompt_template,
                               const std::map<std::string, std::string>& overrides) {
  std::set<std::string> fresh;
  for (const auto& r : raw_categories) {
    try {
      base.canonical(r);
    } catch (const UnmappedCategory&) {
      fresh.insert(r);
    }
  }
  if (fresh.empty()) return base;
  // Map the new names together with the existing canonical names so the LM
  // can merge them into categories already in use.
  std::set<std::string> all = fresh;
  for (const auto& t : base.targets()) all.insert(t);
  CategoryMapping extra = build_mapping(all, lm, prompt_template, overrides);
  CategoryMapping out = base;
  for (const auto& r : fresh) {
    std::string target = extra.entries.at(r).canonical;
    // Land on the base's canonical name if the target already exists there.
    if (auto it = out.entries.find(target); it != out.entries.end()) target = it->second.canonical;
    out.entries[r] = MappingEntry{target, extra.entries.at(r).provenance};
  }
  out.warnings.insert(out.warnings.end(), extra.warnings.begin(), extra.warnings.end());
  out.lm_unparsable = out.lm_unparsable || extra.lm_unparsable;
  return out;
}

ppl::SampleSet apply_mapping(const ppl::SampleSet& set, const CategoryMapping& mapping, const std::string& query) {
  ppl::SampleSet out = set;
  for (std::size_t i = 0; i < out.query_names.size(); ++i) {
    if (out.query_names[i] != query) continue;
    for (auto& v : out.values[i])
      if (v.is_string()) v = ppl::Value(mapping.canonical(v.as_string()));
  }
  return out;
}

Json to_json(const CategoryMapping& m) {
  Json entries = Json::object();
  for (const auto& [raw, e] : m.entries)
    entries[raw] = Json{{"canonical", e.canonical}, {"provenance", provenance_name(e.provenance)}};
  return Json{{"entries", entries},
              {"source_prompt_hash", m.source_prompt_hash},
              {"lm_unparsable", m.lm_unparsable},
              {"warnings", m.warnings}};
}

CategoryMapping mapping_from_json(const Json& j) {
  try {
    CategoryMapping m;
    for (const auto& [raw, e] : j.at("entries").items())
      m.entries[raw] = MappingEntry{e.at("canonical").get<std::string>(),
                                    parse_provenance(e.at("provenance").get<std::string>())};
    m.source_prompt_hash = j.at("source_prompt_hash").get<std::string>();
    m.lm_unparsable = j.at("lm_unparsable").get<bool>();
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
    return m;
  } catch (const Json::exception& e) {
    throw Error("SchemaError", std::string("bad mapping JSON: ") + e.what());
  }
}

}  // namespace medmsa::canonicalize
