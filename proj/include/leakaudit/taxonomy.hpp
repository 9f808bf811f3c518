#pragma once

#include <memory>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "leakaudit/common.hpp"

namespace leakaudit {

enum class PrivacyCategory { Identifiable, Private, Secret };

std::string_view to_string(PrivacyCategory c);
PrivacyCategory category_from_string(std::string_view s);

// A declarative structural rule. A value matches when the regex matches (whole
// literal, or any substring when `search` is set), its length is within
// [min_len, max_len], the optional validator accepts it, and, when `cues` is
// nonempty, one of the cues appears in the key context.
struct PatternRule {
    std::string regex;
    std::vector<std::string> cues;
    std::size_t min_len = 1;
    std::size_t max_len = 256;
    std::string validator;  // "", "luhn", "entropy", "phone_digits"
    bool search = false;
    bool icase = false;
    std::shared_ptr<const std::regex> compiled;

    bool requires_cue() const { return !cues.empty(); }
};

enum class MaskKind { Email, Digits, Ends };

struct MaskPolicy {
    MaskKind kind = MaskKind::Ends;
    std::size_t keep_prefix = 2;
    std::size_t keep_suffix = 2;
    std::size_t mask_count = 4;  // Digits only
    bool keep_separators = true;
    std::string separators = " -_@.";
};

struct Scenario {
    std::string id;
    std::string name;
    std::string description;
};

struct AttributeSpec {
    std::string id;
    PrivacyCategory category = PrivacyCategory::Identifiable;
    std::vector<std::string> scenarios;  // sorted
    std::string description;
    std::vector<PatternRule> patterns;
    std::vector<std::string> keywords;  // cue words for code-level references
    std::string slot_symbol;
    std::vector<std::string> seed_exemplars;
    MaskPolicy mask_policy;

    bool in_scenario(std::string_view scenario_id) const;
    // Pattern cues plus keywords, deduplicated.
    std::vector<std::string> all_cues() const;
};

class TaxonomySet {
public:
    TaxonomySet() = default;
    TaxonomySet(std::vector<Scenario> scenarios, std::vector<AttributeSpec> attributes);

    const std::vector<Scenario>& scenarios() const { return scenarios_; }
    const std::vector<AttributeSpec>& attributes() const { return attributes_; }

    const AttributeSpec* find_attribute(std::string_view id) const;
    const AttributeSpec& attribute(std::string_view id) const;  // throws not_found
    const Scenario* find_scenario(std::string_view id) const;
    const Scenario& scenario(std::string_view id) const;  // throws unknown_scenario

    // Attributes whose scenario list contains `scenario_id`, ordered by id.
    std::vector<const AttributeSpec*> attributes_for_scenario(std::string_view scenario_id) const;

    std::vector<PrivacyCategory> categories() const;

private:
    std::vector<Scenario> scenarios_;
    std::vector<AttributeSpec> attributes_;  // sorted by id
};

TaxonomySet load_taxonomy(const json& doc);
TaxonomySet load_taxonomy_file(const std::string& path);

// Path of the bundled default document (data/taxonomy.json).
std::string default_data_dir();
TaxonomySet load_default_taxonomy();

bool luhn_valid(std::string_view digits_with_separators);

}  // namespace leakaudit
