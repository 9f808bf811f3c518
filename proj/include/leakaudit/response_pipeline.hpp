#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "leakaudit/hint_bundle.hpp"
#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/question_gen.hpp"
#include "leakaudit/taxonomy.hpp"

namespace leakaudit {

struct CodeBlock {
    std::string language;
    std::string body;
    std::size_t offset = 0;  // byte offset of body within the reply
};

struct CodeResponse {
    std::string question_id;
    std::string raw_text;
    std::vector<CodeBlock> code_blocks;
    bool refused = false;
    bool no_code = false;
    std::string request_id;

    json to_json() const;
    static CodeResponse from_json(const json& j);
};

struct CandidateFunction {
    std::string id;
    std::string question_id;
    std::string name;
    std::string body;
    std::pair<std::size_t, std::size_t> span;  // into CodeResponse::raw_text
    std::vector<std::string> attributes;        // sorted

    json to_json() const;
    static CandidateFunction from_json(const json& j);
};

struct TestCase {
    std::string id;
    std::string function_id;
    std::string question_id;
    int index = 1;
    std::string raw_text;
    bool accepted = true;

    json to_json() const;
    static TestCase from_json(const json& j);
};

// Fenced ``` regions; an unterminated fence runs to the end of the text.
std::vector<CodeBlock> extract_code_blocks(std::string_view text);

// A function-shaped region of a code block. Offsets are byte offsets into the
// scanned text; [start, end) covers decorators/annotations, signature and body.
struct FunctionUnit {
    std::string name;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t body_start = 0;  // first byte after the signature
};

bool looks_like_python(std::string_view code, std::string_view language);

// Lenient unit scanner: indentation-based for Python, brace-matching otherwise
// (string and comment contents are ignored while matching). Nested functions
// stay inside their enclosing unit.
std::vector<FunctionUnit> scan_functions(std::string_view code, std::string_view language);

// True when the unit body holds nothing but pass/.../TODO/not-implemented stubs.
bool is_placeholder_body(std::string_view body, bool python);

// Attribute ids whose keywords appear among the subword tokens of `text`.
std::vector<std::string> attributes_referenced(std::string_view text, const TaxonomySet& taxonomy);

CodeResponse generate_code(LlmGateway& gateway, const Question& q);

// Units from the non-refused response's code blocks that reference at least one
// attribute; imports, constants and placeholder stubs never survive.
std::vector<CandidateFunction> extract_functions(const CodeResponse& c, const TaxonomySet& taxonomy);

enum class TestPromptKind { UnitTests, ExampleData };

std::string_view to_string(TestPromptKind k);

std::string build_test_prompt(const CandidateFunction& g, const HintBundle& hints, int m);
// Second turn used when test-case generation is ablated: asks for realistic
// example input data instead of unit tests.
std::string build_example_data_prompt(const CandidateFunction& g, const HintBundle& hints, int m);

// Splits a reply into at most m units: test functions (or it()/test() blocks) in
// fenced code, falling back to whole assertion-bearing blocks. ExampleData mode
// takes every fenced block (or the whole reply) as a unit.
std::vector<std::string> split_test_units(std::string_view reply, int m, TestPromptKind kind);

struct TestGeneration {
    std::vector<TestCase> tests;
    bool refused = false;
    int requested = 0;
    int delivered = 0;
    std::string request_id;
};

TestGeneration generate_tests(LlmGateway& gateway, const CandidateFunction& g,
                              const std::string& prompt, int m,
                              TestPromptKind kind = TestPromptKind::UnitTests);

}  // namespace leakaudit
