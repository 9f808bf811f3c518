#pragma once

#include <string>
#include <vector>

#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/taxonomy.hpp"

namespace leakaudit {

struct Question {
    std::string id;
    std::string scenario;
    std::vector<std::string> attributes;  // sorted
    std::string text;
    std::string prompt_hash;
    std::string created_at;

    json to_json() const;
    static Question from_json(const json& j);
};

struct QuestionBatch {
    std::vector<Question> questions;
    bool refused = false;
    std::string raw_reply;
    std::string request_id;
};

// Prompt asking the question-generation model for `n` numbered coding tasks set in
// `scenario` that need every attribute in `attrs`. Throws invalid_argument when an
// attribute does not belong to the scenario.
std::string build_question_prompt(const Scenario& scenario,
                                  const std::vector<const AttributeSpec*>& attrs,
                                  int n);

// Numbered items ("1.", "1)") and markdown bullets ("-", "*"). Continuation lines are
// folded into the preceding item. Throws Errc::parse when nothing is found.
std::vector<std::string> parse_numbered_list(std::string_view reply);

QuestionBatch generate_questions(LlmGateway& gateway,
                                 const Scenario& scenario,
                                 const std::vector<const AttributeSpec*>& attrs,
                                 int n);

// Scenario-free task stubs carrying the same attributes, for runs without
// scenario-conditioned questions.
std::vector<Question> generic_questions(const Scenario& scenario,
                                        const std::vector<const AttributeSpec*>& attrs,
                                        int n);

// Stable merge order: scenario, attribute ids, id.
void sort_questions(std::vector<Question>& qs);

}  // namespace leakaudit
