#pragma once

#include <map>
#include <string>
#include <vector>

#include "medmsa/json.hpp"
#include "medmsa/lm/client.hpp"

namespace medmsa::lm {

// Offline backend that answers from a script, used to author fixtures in
// record mode and to drive tests without fixtures. Script shape:
//   {"id": "...",
//    "responses": {"translate": [...], "sketch": [...], "code": [...],
//                  "canonicalize": [...]},
//    "score": {"rules": [{"match": "...", "text": "SCORE: 0.1"}],
//              "default": "SCORE: 0.8"}}
// Generative stages answer responses[stage][sample_index % size]. Score
// answers the first rule whose `match` occurs in the prompt.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(const Json& script);

  std::string id() const override { return "scripted:" + id_; }
  LmResponse complete(const LmRequest& request, std::uint64_t sample_index) override;

 private:
  struct Rule {
    std::string match;
    std::string text;
  };
  std::string id_;
  std::map<Stage, std::vector<std::string>> responses_;
  std::vector<Rule> score_rules_;
  std::string score_default_ = "SCORE: 0.5";
};

}  // namespace medmsa::lm
