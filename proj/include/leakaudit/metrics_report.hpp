#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "leakaudit/taxonomy.hpp"
#include "leakaudit/verification.hpp"

namespace leakaudit {

// Raw quotient num*1000/den; 0 when den is 0.
double permille(double num, double den);
// One decimal, half-up.
double round1(double x);
std::string format1(double x);

// Everything the report needs, as read back from a run store.
struct RunSnapshot {
    std::string run_id;
    std::map<std::string, std::int64_t> planned_tests;   // per attribute
    std::map<std::string, std::int64_t> accepted_tests;  // per attribute
    std::vector<std::string> accepted_test_ids;
    std::vector<CandidateRecord> records;
    std::vector<DuplicateCandidate> duplicates;
    std::int64_t elicitation_requests = 0;
    std::int64_t refused_requests = 0;
};

struct AttributeFunnel {
    std::int64_t planned_tests = 0;
    std::int64_t accepted = 0;
    std::int64_t extracted = 0;
    std::int64_t judge_passed = 0;
    std::int64_t search_zero = 0;
    std::int64_t search_overflow = 0;
    std::int64_t search_in_range = 0;
    std::int64_t confirmed = 0;
    std::int64_t potential = 0;
    std::int64_t rejected = 0;
    std::int64_t pending_review = 0;

    double permille_accepted() const { return permille(static_cast<double>(confirmed), static_cast<double>(accepted)); }
    double permille_total() const { return permille(static_cast<double>(confirmed), static_cast<double>(planned_tests)); }
    void add(const AttributeFunnel& o);
    json to_json() const;
};

struct Funnel {
    std::map<std::string, AttributeFunnel> attributes;
    AttributeFunnel total;
};

Funnel funnel_counts(const RunSnapshot& run);

struct LeakedElement {
    std::string attribute;
    PrivacyCategory category = PrivacyCategory::Identifiable;
    std::string record_group;
};

// One accepted test case and the confirmed values found in it.
struct TestCaseLeaks {
    std::string test_case_id;
    std::vector<LeakedElement> elements;
};

// Accepted test cases with their confirmed elements. Duplicates of a confirmed
// value count in the test case they were found in.
std::vector<TestCaseLeaks> leak_units(const RunSnapshot& run, const TaxonomySet& taxonomy);

// Permille of units holding at least `level` confirmed elements of `category`
// (every category when absent).
double leak_proportion(const std::vector<TestCaseLeaks>& units, std::optional<PrivacyCategory> category, int level);
// Permille of units where at least `level` confirmed elements of `category` share
// one record group.
double interconnected_leakage(const std::vector<TestCaseLeaks>& units, std::optional<PrivacyCategory> category,
                              int level);

struct Comparison {
    std::int64_t tp = 0, fp = 0, fn = 0;
    double pp = 0, pr = 0, pf1 = 0;  // 0..100
    json to_json() const;
};

using ConfirmedKey = std::pair<std::string, std::string>;  // (attribute, dedup_key)

Comparison compare_sets(const std::set<ConfirmedKey>& run, const std::set<ConfirmedKey>& reference);
std::set<ConfirmedKey> confirmed_keys(const RunSnapshot& run);
Comparison compare_runs(const RunSnapshot& run, const RunSnapshot& reference);

struct ConfirmedItem {
    std::string candidate_id;
    std::string attribute;
    std::string masked_value;
    std::string dedup_key;
    std::int64_t hit_count = 0;
};

struct RunReport {
    std::string run_id;
    std::string generated_at;
    Funnel funnel;
    double reject_rate = 0.0;  // fraction of elicitation requests refused
    std::int64_t elicitation_requests = 0;
    std::int64_t refused_requests = 0;
    std::map<std::string, std::map<int, double>> lp;  // category (or "All") -> L -> permille
    std::map<std::string, std::map<int, double>> il;
    std::vector<ConfirmedItem> confirmed;  // sorted by attribute, masked value
    std::vector<std::string> notes;

    json to_json() const;
};

RunReport build_report(const RunSnapshot& run, const TaxonomySet& taxonomy);

enum class ReportFormat { Json, Markdown, Csv };

ReportFormat report_format_from_string(std::string_view s);  // throws unknown_format
std::string emit_report(const RunReport& report, ReportFormat format);
std::string render_comparison(const Comparison& c, ReportFormat format);

}  // namespace leakaudit
