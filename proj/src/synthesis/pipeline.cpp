#include "medmsa/synthesis/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include "medmsa/fsutil.hpp"
#include "medmsa/ppl/program.hpp"

#ifndef MEDMSA_DEFAULT_DATA_DIR
#define MEDMSA_DEFAULT_DATA_DIR "data"
#endif

namespace medmsa::synthesis {
namespace {

constexpr const char* kCodeStart = "<START_LANGUAGE_TO_WEBPPL_CODE>";
constexpr const char* kCodeEnd = "<END_LANGUAGE_TO_WEBPPL_CODE>";
constexpr const char* kTraceStart = "<START_CONCEPT_TRACE>";
constexpr const char* kTraceEnd = "<END_CONCEPT_TRACE>";
constexpr const char* kModelStart = "<START_WEBPPL_MODEL>";
constexpr const char* kModelEnd = "<END_WEBPPL_MODEL>";

std::string trim(const std::string& s) {
  auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Text between two markers; a missing start means from the beginning and a
// missing end means to the end.
std::string between(const std::string& text, const std::string& start, const std::string& end) {
  auto b = text.find(start);
  b = b == std::string::npos ? 0 : b + start.size();
  auto e = text.find(end, b);
  return text.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

std::string strip_semicolons(std::string s) {
  s = trim(s);
  while (!s.empty() && s.back() == ';') s = trim(s.substr(0, s.size() - 1));
  return s;
}

bool is_identifier(const std::string& s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_' || s[0] == '$')) return false;
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; });
}

// Argument text of a `condition(X)` call, or nullopt.
std::optional<std::string> condition_argument(const std::string& text) {
  std::string t = strip_semicolons(text);
  if (t.empty()) return std::nullopt;
  try {
    auto e = ppl::parse_expression(t);
    const auto* call = ppl::ast::get_if<ppl::ast::Call>(*e);
    if (!call || call->args.size() != 1) return std::nullopt;
    const auto* id = ppl::ast::get_if<ppl::ast::Identifier>(*call->callee);
    if (!id || id->name != "condition") return std::nullopt;
    if (e->span.begin != 0 || e->span.end != t.size()) return std::nullopt;
    const auto& span = call->args.front()->span;
    return t.substr(span.begin, span.size());
  } catch (const Error&) {
    return std::nullopt;
  }
}

std::string strip_header(const std::string& text) {
  std::string out;
  bool header = true;
  for (const auto& line : lines_of(text)) {
    if (header && !line.empty() && line[0] == '#') continue;
    header = false;
    out += line + "\n";
  }
  return out;
}

void set_why(std::string* why, const std::string& msg) {
  if (why) *why = msg;
}

template <class T, class Parse>
std::vector<std::optional<T>> parse_all(const std::vector<lm::LmResponse>& responses, Parse parse,
                                        std::vector<std::string>& reasons) {
  std::vector<std::optional<T>> out;
  for (const auto& r : responses) {
    std::string why;
    out.push_back(parse(r.text, &why));
    reasons.push_back(why);
  }
  return out;
}

double score_artifact(const Vignette& v, const std::string& kind, const std::string& artifact, lm::Client& lm,
                      const PromptSet& prompts) {
  std::string prompt = fill(prompts.score, {{"kind", kind},
                                            {"sentences", format_sentences(v)},
                                            {"queries", format_queries(v)},
                                            {"artifact", artifact}});
  return parse_score(lm.complete(lm::LmRequest::make(lm::Stage::Score, prompt), 0).text);
}

// Index of the highest score; ties go to the lowest index.
template <class T>
std::size_t argmax(const std::vector<std::optional<T>>& items) {
  std::size_t best = items.size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i]) continue;
    if (best == items.size() || items[i]->lm_score > items[best]->lm_score) best = i;
  }
  return best;
}

std::string joined(const std::vector<std::string>& reasons) {
  std::string out;
  for (std::size_t i = 0; i < reasons.size(); ++i)
    out += (i ? "; " : "") + std::string("#") + std::to_string(i) + ": " + reasons[i];
  return out;
}

}  // namespace

std::filesystem::path default_data_dir() {
  if (const char* env = std::getenv("MEDMSA_DATA_DIR"); env && *env) return env;
  return MEDMSA_DEFAULT_DATA_DIR;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet p;
  p.translate = strip_header(read_file(dir / "translate.txt"));
  p.sketch = strip_header(read_file(dir / "sketch.txt"));
  p.code = strip_header(read_file(dir / "code.txt"));
  p.score = strip_header(read_file(dir / "score.txt"));
  p.canonicalize = strip_header(read_file(dir / "canonicalize.txt"));
  std::string all = p.translate + "\x1f" + p.sketch + "\x1f" + p.code + "\x1f" + p.score + "\x1f" + p.canonicalize;
  p.version = lm::fixture_key(lm::Stage::Translate, all).substr(0, 12);
  return p;
}

std::string fill(const std::string& tmpl, const std::vector<std::pair<std::string, std::string>>& values) {
  std::string out;
  std::size_t pos = 0;
  while (true) {
    auto open = tmpl.find("{{", pos);
    if (open == std::string::npos) break;
    auto close = tmpl.find("}}", open + 2);
    if (close == std::string::npos) break;
    std::string name = tmpl.substr(open + 2, close - open - 2);
    auto it = std::find_if(values.begin(), values.end(), [&](const auto& kv) { return kv.first == name; });
    if (it == values.end()) throw Error("PromptError", "no value for placeholder {{" + name + "}}");
    out += tmpl.substr(pos, open - pos);
    out += it->second;
    pos = close + 2;
  }
  out += tmpl.substr(pos);
  return out;
}

std::string format_sentences(const Vignette& v) {
  std::string out;
  for (std::size_t i = 0; i < v.sentences.size(); ++i) out += (i ? "\n" : "") + v.sentences[i];
  return out;
}

std::string format_queries(const Vignette& v) {
  std::string out;
  for (std::size_t i = 0; i < v.queries.size(); ++i)
    out += (i ? "\n" : "") + std::string("Query ") + std::to_string(i + 1) + ": " + v.queries[i];
  return out;
}

std::string format_translation(const Translation& t) {
  std::string out = "// CONDITIONS\n";
  for (const auto& s : t.condition_statements) out += s + "\n";
  for (const auto& s : t.skipped_sentences) out += "// SKIP: " + s + "\n";
  out += "\n// QUERIES\n";
  for (const auto& q : t.query_expressions) out += q + "\n";
  return out;
}

std::string format_sketch(const Sketch& s) {
  std::string out = s.prose + "\n\n" + kTraceStart + "\n";
  for (const auto& e : s.concept_trace) {
    out += "- " + e.variable + "\n";
    if (!e.depends_on.empty()) {
      out += "  - depends on: ";
      for (std::size_t i = 0; i < e.depends_on.size(); ++i) out += (i ? ", " : "") + e.depends_on[i];
      out += "\n";
    }
  }
  return out + kTraceEnd;
}

std::optional<Translation> parse_translation(const std::string& text, const Vignette& vignette, std::string* why) {
  Translation t;
  t.raw = text;
  enum class Section { None, Conditions, Queries } section = Section::None;
  for (const auto& raw_line : lines_of(between(text, kCodeStart, kCodeEnd))) {
    std::string line = trim(raw_line);
    if (line.empty() || line.starts_with("```")) continue;
    if (line.starts_with("//")) {
      std::string body = trim(line.substr(2));
      if (body == "CONDITIONS") {
        section = Section::Conditions;
      } else if (body == "QUERIES") {
        section = Section::Queries;
      } else if (body.starts_with("SKIP:")) {
        t.skipped_sentences.push_back(trim(body.substr(5)));
      }
      continue;
    }
    if (section == Section::Conditions) {
      auto arg = condition_argument(line);
      if (!arg) {
        set_why(why, "not a condition statement: " + line);
        return std::nullopt;
      }
      t.condition_statements.push_back("condition(" + *arg + ")");
      for (const auto& name : ppl::free_identifiers(*ppl::parse_expression(*arg))) t.required_functions.insert(name);
    } else if (section == Section::Queries) {
      std::string q = strip_semicolons(line);
      try {
        auto e = ppl::parse_expression(q);
        for (const auto& name : ppl::free_identifiers(*e)) t.required_functions.insert(name);
      } catch (const Error& e) {
        set_why(why, "query does not parse: " + q + " (" + e.what() + ")");
        return std::nullopt;
      }
      t.query_expressions.push_back(q);
    } else {
      set_why(why, "statement outside CONDITIONS/QUERIES: " + line);
      return std::nullopt;
    }
  }
  if (t.condition_statements.empty() && t.skipped_sentences.empty()) {
    set_why(why, "no condition statements");
    return std::nullopt;
  }
  if (t.query_expressions.size() != vignette.queries.size()) {
    set_why(why, "expected " + std::to_string(vignette.queries.size()) + " queries, got " +
                     std::to_string(t.query_expressions.size()));
    return std::nullopt;
  }
  return t;
}

std::optional<Sketch> parse_sketch(const std::string& text, const Translation& translation, std::string* why) {
  auto start = text.find(kTraceStart);
  if (start == std::string::npos) {
    set_why(why, "concept trace missing");
    return std::nullopt;
  }
  auto end = text.find(kTraceEnd, start);
  if (end == std::string::npos) {
    set_why(why, "concept trace not terminated");
    return std::nullopt;
  }
  Sketch s;
  s.raw = text;
  std::string prose = text.substr(0, start);
  if (auto p = prose.find("<START_SCRATCHPAD>"); p != std::string::npos) prose = prose.substr(p + 18);
  s.prose = trim(prose);
  std::string body = text.substr(start + std::string(kTraceStart).size(), end - start - std::string(kTraceStart).size());
  for (const auto& raw_line : lines_of(body)) {
    std::string line = trim(raw_line);
    if (!line.starts_with("-")) continue;
    line = trim(line.substr(1));
    if (line.starts_with("depends on:")) {
      if (s.concept_trace.empty()) {
        set_why(why, "dependency line before any variable");
        return std::nullopt;
      }
      std::string list = line.substr(11);
      std::istringstream in(list);
      std::string item;
      while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) s.concept_trace.back().depends_on.push_back(item);
      }
      continue;
    }
    if (!line.empty() && line.back() == ':') line.pop_back();
    if (!is_identifier(line)) {
      set_why(why, "not a variable name: " + line);
      return std::nullopt;
    }
    s.concept_trace.push_back(TraceEntry{line, {}});
  }
  std::set<std::string> declared;
  for (const auto& e : s.concept_trace) declared.insert(e.variable);
  for (const auto& e : s.concept_trace) {
    for (const auto& d : e.depends_on) {
      if (!declared.contains(d)) {
        set_why(why, "'" + e.variable + "' depends on undeclared '" + d + "'");
        return std::nullopt;
      }
    }
  }
  for (const auto& f : translation.required_functions) {
    if (!declared.contains(f)) {
      set_why(why, "required function '" + f + "' missing from the trace");
      return std::nullopt;
    }
  }
  return s;
}

double parse_score(const std::string& text) {
  static const std::regex re(R"(SCORE:\s*\**\s*([0-9]*\.?[0-9]+))");
  double score = 0;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
    score = std::stod((*it)[1].str());
    found = true;
  }
  if (!found) return 0;
  return std::clamp(score, 0.0, 1.0);
}

std::string extract_program(const std::string& text) {
  auto start = text.find(kModelStart);
  if (start == std::string::npos) throw DelimitersMissing("completion has no <START_WEBPPL_MODEL>");
  start += std::string(kModelStart).size();
  auto end = text.find(kModelEnd, start);
  if (end == std::string::npos) throw DelimitersMissing("completion has no <END_WEBPPL_MODEL>");
  return text.substr(start, end - start);
}

std::string patch_conditions(const std::string& source) {
  static const std::regex wrapper(R"(^\s*var\s+[A-Za-z_$][\w$]*\s*=\s*function\s*\(\s*\)\s*\{)");
  auto lines = lines_of(source);
  bool trailing_newline = !source.empty() && source.back() == '\n';

  // Brace depth at the start of each line, skipping strings and comments.
  std::vector<int> depth(lines.size(), 0);
  int d = 0;
  bool in_block_comment = false;
  int model_depth = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    depth[i] = d;
    const std::string& l = lines[i];
    if (d == 0 && !in_block_comment && std::regex_search(l, wrapper)) model_depth = 1;
    for (std::size_t j = 0; j < l.size(); ++j) {
      char c = l[j];
      if (in_block_comment) {
        if (c == '*' && j + 1 < l.size() && l[j + 1] == '/') {
          in_block_comment = false;
          ++j;
        }
        continue;
      }
      if (c == '/' && j + 1 < l.size() && l[j + 1] == '/') break;
      if (c == '/' && j + 1 < l.size() && l[j + 1] == '*') {
        in_block_comment = true;
        ++j;
      } else if (c == '\'' || c == '"') {
        for (++j; j < l.size() && l[j] != c; ++j)
          if (l[j] == '\\') ++j;
      } else if (c == '{') {
        ++d;
      } else if (c == '}') {
        --d;
      }
    }
  }

  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line.compare(first, 2, "//") == 0 && depth[i] == model_depth) {
      std::string body = trim(line.substr(first + 2));
      if (condition_argument(body)) line = line.substr(0, first) + body;
    }
    out += line;
    if (i + 1 < lines.size() || trailing_newline) out += "\n";
  }
  return out;
}

Translation translate(const Vignette& vignette, lm::Client& lm, const PromptSet& prompts, std::size_t n,
                      std::uint64_t first_index) {
  std::string prompt =
      fill(prompts.translate, {{"sentences", format_sentences(vignette)}, {"queries", format_queries(vignette)}});
  auto responses = lm.complete_many(lm::LmRequest::make(lm::Stage::Translate, prompt), n, first_index);
  std::vector<std::string> reasons;
  auto parsed = parse_all<Translation>(
      responses, [&](const std::string& text, std::string* why) { return parse_translation(text, vignette, why); },
      reasons);
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (!parsed[i]) continue;
    parsed[i]->chosen_index = i;
    if (n > 1) parsed[i]->lm_score = score_artifact(vignette, "translation", format_translation(*parsed[i]), lm, prompts);
  }
  std::size_t best = argmax(parsed);
  if (best == parsed.size()) throw NoParsableCandidate("no translation parsed: " + joined(reasons));
  return *parsed[best];
}

Sketch sketch(const Vignette& vignette, const Translation& translation, lm::Client& lm, const PromptSet& prompts,
              std::size_t n, std::uint64_t first_index) {
  std::string prompt = fill(prompts.sketch, {{"sentences", format_sentences(vignette)},
                                             {"queries", format_queries(vignette)},
                                             {"translation", format_translation(translation)}});
  auto responses = lm.complete_many(lm::LmRequest::make(lm::Stage::Sketch, prompt), n, first_index);
  std::vector<std::string> reasons;
  auto parsed = parse_all<Sketch>(
      responses, [&](const std::string& text, std::string* why) { return parse_sketch(text, translation, why); },
      reasons);
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    if (!parsed[i]) continue;
    parsed[i]->chosen_index = i;
    if (n > 1) parsed[i]->lm_score = score_artifact(vignette, "sketch", format_sketch(*parsed[i]), lm, prompts);
  }
  std::size_t best = argmax(parsed);
  if (best == parsed.size()) throw NoParsableCandidate("no sketch parsed: " + joined(reasons));
  return *parsed[best];
}

std::string synthesize_program(const Vignette& vignette, const Translation& translation, const Sketch& sk,
                               lm::Client& lm, const PromptSet& prompts, std::uint64_t sample_index) {
  std::string record = "{";
  for (std::size_t i = 0; i < translation.query_expressions.size(); ++i)
    record += (i ? ", " : "") + query_key(i) + ": " + translation.query_expressions[i];
  record += "}";
  std::string prompt = fill(prompts.code, {{"sentences", format_sentences(vignette)},
                                           {"queries", format_queries(vignette)},
                                           {"translation", format_translation(translation)},
                                           {"sketch", format_sketch(sk)},
                                           {"query_record", record}});
  return extract_program(lm.complete(lm::LmRequest::make(lm::Stage::SynthesizeCode, prompt), sample_index).text);
}

CheckResult check_candidate(const std::string& source, const Vignette& vignette, lm::Client& lm,
                            const PromptSet& prompts, const SynthesisConfig& config, std::uint64_t seed,
                            std::uint64_t stream) {
  CheckResult r;
  r.semantic_score = score_artifact(vignette, "model", source, lm, prompts);
  if (r.semantic_score < config.semantic_threshold) {
    r.status = CandidateStatus::SemanticRejected;
    r.failed_stage = "semantic";
    return r;
  }

  std::optional<ppl::Program> program;
  try {
    program.emplace(ppl::parse(source));
  } catch (const Error& e) {
    r.status = CandidateStatus::ParseFailed;
    r.failed_stage = "parse";
    r.diagnostics.push_back(ppl::diagnostic_from(e));
    return r;
  }
  r.diagnostics = ppl::validate(*program);
  for (std::size_t i = 0; i < vignette.queries.size(); ++i) {
    std::string key = query_key(i);
    bool found = std::any_of(program->queries().begin(), program->queries().end(),
                             [&](const ppl::Query& q) { return q.name == key; });
    if (!found)
      r.diagnostics.push_back(ppl::Diagnostic{"MissingQuery", "model does not return '" + key + "'", 0, 0});
  }
  if (!r.diagnostics.empty()) {
    r.status = CandidateStatus::ValidateFailed;
    r.failed_stage = "validate";
    return r;
  }

  ppl::SampleOptions init;
  init.target_samples = 1;
  init.budget = config.init_budget;
  init.seed = seed;
  init.stream = stream;
  try {
    auto set = ppl::rejection_sample(*program, init);
    r.init_proposals = set.proposed_count;
    if (set.accepted_count == 0) {
      r.status = CandidateStatus::BudgetFailed;
      r.failed_stage = "init";
      r.diagnostics.push_back(ppl::Diagnostic{
          "BudgetExhausted", "no sample accepted after " + std::to_string(set.proposed_count) + " proposals", 0, 0});
      return r;
    }
  } catch (const ppl::RuntimeError& e) {
    r.status = CandidateStatus::BudgetFailed;
    r.failed_stage = "init";
    r.diagnostics.push_back(ppl::diagnostic_from(e));
    return r;
  }
  r.status = CandidateStatus::Compiled;
  return r;
}

std::uint64_t init_stream(std::size_t candidate_index) { return (std::uint64_t{1} << 32) + candidate_index; }
std::uint64_t sample_stream(std::size_t candidate_index) { return candidate_index; }

namespace {

ModelCandidate run_candidate(std::size_t slot, const Vignette& vignette, std::uint64_t seed,
                             const SynthesisConfig& config, lm::Client& lm, const PromptSet& prompts,
                             const std::optional<Translation>& shared, const ProgressFn& progress) {
  ModelCandidate c;
  c.index = slot + 1;
  auto report = [&](const std::string& stage) {
    if (progress) progress(c.index, stage);
  };
  auto fail = [&](const std::string& stage, const Error& e) {
    c.status = CandidateStatus::ParseFailed;
    c.failed_stage = stage;
    c.diagnostics.push_back(ppl::Diagnostic{e.code(), e.what(), 0, 0});
    report("done");
    return c;
  };

  report("translate");
  try {
    c.translation = shared ? *shared : translate(vignette, lm, prompts, config.translations, slot * config.translations);
  } catch (const NoParsableCandidate& e) {
    return fail("translate", e);
  }

  report("sketch");
  try {
    c.sketch = sketch(vignette, *c.translation, lm, prompts, config.sketches, slot * config.sketches);
  } catch (const NoParsableCandidate& e) {
    return fail("sketch", e);
  }

  report("code");
  std::optional<DelimitersMissing> last_error;
  for (std::size_t i = 0; i < config.code_completions && c.source.empty(); ++i) {
    try {
      c.source = synthesize_program(vignette, *c.translation, *c.sketch, lm, prompts, slot * config.code_completions + i);
    } catch (const DelimitersMissing& e) {
      last_error = e;
    }
  }
  if (c.source.empty() && last_error) return fail("code", *last_error);
  c.patched_source = patch_conditions(c.source);

  report("checks");
  auto check = check_candidate(c.patched_source, vignette, lm, prompts, config, seed, init_stream(c.index));
  c.status = check.status;
  c.semantic_score = check.semantic_score;
  c.failed_stage = check.failed_stage;
  c.diagnostics = check.diagnostics;
  c.init_proposals = check.init_proposals;

  if (c.status == CandidateStatus::Compiled) {
    report("sampling");
    ppl::SampleOptions o;
    o.target_samples = config.samples;
    o.budget = config.sample_budget;
    o.seed = seed;
    o.stream = sample_stream(c.index);
    o.model_id = std::to_string(c.index);
    try {
      c.sample_set = ppl::rejection_sample(ppl::parse(c.patched_source), o);
      if (config.deterministic_timing) c.sample_set->wall_time = 0;
      if (c.sample_set->accepted_count == 0)
        c.diagnostics.push_back(ppl::Diagnostic{"NoAcceptedSamples", "sampling accepted no samples", 0, 0});
    } catch (const ppl::RuntimeError& e) {
      c.failed_stage = "sample";
      c.diagnostics.push_back(ppl::diagnostic_from(e));
    }
  }
  report("done");
  return c;
}

}  // namespace

SynthesisRun run_pipeline(const Vignette& vignette, std::size_t k, std::uint64_t seed, const SynthesisConfig& config,
                          lm::Client& lm, const PromptSet& prompts, const ProgressFn& progress) {
  if (k == 0) throw Error("BadConfig", "k must be at least 1");
  SynthesisRun run;
  run.vignette = vignette;
  run.k = k;
  run.seed = seed;
  run.config = config;
  run.prompt_version = prompts.version;
  run.candidates.resize(k);

  std::optional<Translation> shared;
  if (config.share_translation) shared = translate(vignette, lm, prompts, config.translations, 0);

  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, k);
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      std::size_t slot = next++;
      if (slot >= k) return;
      {
        std::lock_guard lock(error_mu);
        if (error) return;
      }
      try {
        run.candidates[slot] = run_candidate(slot, vignette, seed, config, lm, prompts, shared, progress);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return run;
}

}  // namespace medmsa::synthesis
