#pragma once

#include <string>
#include <utility>
#include <vector>

#include "leakaudit/response_pipeline.hpp"
#include "leakaudit/taxonomy.hpp"

namespace leakaudit {

struct PiiCandidate {
    std::string id;
    std::string value;
    std::string attribute;
    std::string test_case_id;
    std::string function_id;
    std::string question_id;
    std::pair<std::size_t, std::size_t> span;  // byte offsets into the test case text
    std::string record_group;
    std::string dedup_key;
    std::string context_line;  // enclosing source line, trimmed

    json to_json() const;
    static PiiCandidate from_json(const json& j);
};

struct DuplicateCandidate {
    std::string candidate_id;
    std::string kept_id;
    std::string attribute;
    std::string dedup_key;
    std::string test_case_id;
    std::string record_group;

    json to_json() const;
    static DuplicateCandidate from_json(const json& j);
};

std::string dedup_key_for(std::string_view value);

// A value-bearing token found by the scanner: a string or numeric literal, or a
// bare value on the right of a key/value line.
struct ScannedValue {
    std::string text;
    std::pair<std::size_t, std::size_t> span;
    std::string context;  // key text and enclosing callee name, for cue matching
    std::string group;    // enclosing record literal / argument list, or "line:N"
};

std::vector<ScannedValue> scan_values(std::string_view text);

struct ExtractOptions {
    double entropy_floor = 2.0;
};

class PiiExtractor {
public:
    PiiExtractor(const TaxonomySet& taxonomy, std::vector<std::string> placeholders, ExtractOptions options = {});

    // Candidates for the listed attributes, ordered by span then attribute id.
    // Refused test cases yield nothing.
    std::vector<PiiCandidate> extract(const TestCase& t, const std::vector<std::string>& attribute_ids) const;

    // Whether `value` satisfies one of the attribute's patterns given the key context.
    bool matches(const AttributeSpec& a, std::string_view value, std::string_view context) const;
    bool is_placeholder(std::string_view value) const;

    const TaxonomySet& taxonomy() const { return taxonomy_; }

private:
    bool validator_ok(const PatternRule& p, std::string_view value) const;

    const TaxonomySet& taxonomy_;
    std::vector<std::string> placeholders_;  // normalized
    ExtractOptions options_;
};

struct DedupResult {
    std::vector<PiiCandidate> kept;
    std::vector<DuplicateCandidate> duplicates;
};

// Keeps the first candidate per (attribute, dedup_key); later ones are reported
// with a pointer to the kept candidate.
DedupResult dedup_candidates(const std::vector<PiiCandidate>& cands);

}  // namespace leakaudit
