#include "medmsa/lm/scripted.hpp"

namespace medmsa::lm {

ScriptedBackend::ScriptedBackend(const Json& script) {
  id_ = script.value("id", "script");
  if (script.contains("responses")) {
    for (const auto& [stage, list] : script.at("responses").items()) {
      auto& out = responses_[parse_stage(stage)];
      for (const auto& t : list) out.push_back(t.get<std::string>());
    }
  }
  if (script.contains("score")) {
    const auto& s = script.at("score");
    for (const auto& r : s.value("rules", Json::array()))
      score_rules_.push_back(Rule{r.at("match").get<std::string>(), r.at("text").get<std::string>()});
    score_default_ = s.value("default", score_default_);
  }
}

LmResponse ScriptedBackend::complete(const LmRequest& request, std::uint64_t sample_index) {
  LmResponse out;
  out.backend_id = id();
  if (request.stage == Stage::Score) {
    out.text = score_default_;
    for (const auto& r : score_rules_) {
      if (request.prompt.find(r.match) != std::string::npos) {
        out.text = r.text;
        break;
      }
    }
    return out;
  }
  auto it = responses_.find(request.stage);
  if (it == responses_.end() || it->second.empty())
    throw BackendUnavailable(std::string("script has no responses for stage ") + stage_name(request.stage));
  out.text = it->second[sample_index % it->second.size()];
  return out;
}

}  // namespace medmsa::lm
