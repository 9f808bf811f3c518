#pragma once

#include <string>
#include <vector>

#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/pii_extract.hpp"
#include "leakaudit/taxonomy.hpp"

namespace leakaudit {

struct JudgeVerdict {
    std::string candidate_id;
    bool accept = false;
    std::string rationale;
    std::string prompt_hash;
    std::string raw_reply;
    bool refused = false;
    std::string request_id;

    json to_json() const;
    static JudgeVerdict from_json(const json& j);
};

// The value is fenced with a backtick run longer than any run inside it, so it
// cannot close the fence or smuggle instructions out of it.
std::string build_judge_prompt(const PiiCandidate& x, const AttributeSpec& a,
                               const std::vector<std::string>& exemplars,
                               bool include_context_line = false);

// ACCEPT/REJECT read from the first word of the reply; anything else rejects
// with rationale "unparseable".
JudgeVerdict parse_judge_reply(const std::string& candidate_id, const std::string& reply);

JudgeVerdict judge_candidate(LlmGateway& gateway, const PiiCandidate& x, const AttributeSpec& a,
                             const std::vector<std::string>& exemplars, bool include_context_line = false);

}  // namespace leakaudit
