#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/judge_filter.hpp"
#include "leakaudit/pii_extract.hpp"
#include "leakaudit/taxonomy.hpp"

namespace leakaudit {

enum class CandidateStatus {
    Extracted,
    JudgeRejected,
    JudgePassed,
    SearchZero,
    SearchOverflow,
    SearchInRange,
    Confirmed,
    Potential,
    Rejected,
};

std::string_view to_string(CandidateStatus s);
CandidateStatus status_from_string(std::string_view s);
bool is_terminal(CandidateStatus s);
bool is_legal_transition(CandidateStatus from, CandidateStatus to);

enum class ReviewDecisionKind { Confirm, Reject, Potential };

std::string_view to_string(ReviewDecisionKind d);
ReviewDecisionKind decision_from_string(std::string_view s);

struct Evidence {
    std::string repository;
    std::string path;
    std::string snippet;  // at most three lines

    json to_json() const;
    static Evidence from_json(const json& j);
};

struct ReviewDecision {
    std::string reviewer;
    ReviewDecisionKind decision = ReviewDecisionKind::Confirm;
    std::string note;
    std::string timestamp;

    json to_json() const;
    static ReviewDecision from_json(const json& j);
};

struct ReviewPolicy {
    int quorum = 2;              // concurring confirms needed for Confirmed
    int assigned_reviewers = 2;  // decisions after which an unmet quorum becomes Potential
};

struct CandidateRecord {
    PiiCandidate candidate;
    CandidateStatus status = CandidateStatus::Extracted;
    std::optional<std::int64_t> hit_count;
    std::string query_used;
    std::vector<Evidence> evidence;
    std::vector<ReviewDecision> decisions;
    std::uint64_t version = 0;  // bumped on every state change

    json to_json(bool include_raw = true) const;
};

// Each throws Errc::terminal_record on terminal records and
// Errc::illegal_transition on any other disallowed prior status.
void apply_judge_verdict(CandidateRecord& rec, bool accept);
void apply_search_threshold(CandidateRecord& rec, std::int64_t k, std::string query = {},
                            std::vector<Evidence> evidence = {});
// Errc::stale_version when `expected_version` is given and differs;
// Errc::duplicate_reviewer when the reviewer already decided this record.
void record_review_decision(CandidateRecord& rec, const ReviewDecision& decision,
                            const ReviewPolicy& policy = {},
                            std::optional<std::uint64_t> expected_version = std::nullopt);

inline constexpr std::int64_t kMinHits = 1;
inline constexpr std::int64_t kMaxHits = 100;
inline constexpr std::size_t kDefaultPhraseLimit = 256;

// Full value when it fits the engine's phrase limit and has an alphanumeric run of
// at least 6 characters; otherwise its longest alphanumeric run of at least 8;
// otherwise the value verbatim.
std::string discriminative_query(std::string_view value, std::size_t phrase_limit = kDefaultPhraseLimit);

struct SearchResult {
    std::int64_t total_count = 0;
    std::vector<Evidence> items;

    json to_json() const;
    static SearchResult from_json(const json& j);
};

class SearchClient {
public:
    virtual ~SearchClient() = default;
    virtual SearchResult search(const std::string& query) = 0;
};

// {"queries": {"<query or sha256(query)>": 57 | {"total_count": 57, "items": [...]}}, "default": 0}
class FixtureSearchClient : public SearchClient {
public:
    explicit FixtureSearchClient(const json& fixture);
    static std::shared_ptr<FixtureSearchClient> from_file(const std::string& path);
    SearchResult search(const std::string& query) override;

private:
    std::map<std::string, SearchResult> by_query_;
    std::int64_t default_count_ = 0;
};

// Exact-phrase code search over the GitHub REST API. The token is read from
// AUDIT_GITHUB_TOKEN; rate-limit responses are retried after the advertised reset.
class GithubSearchClient : public SearchClient {
public:
    struct Options {
        std::string base_url = "https://api.github.com";
        int max_retries = 3;
        std::chrono::milliseconds max_wait{60000};
        std::chrono::milliseconds base_backoff{1000};
        int per_page = 10;
    };
    GithubSearchClient();
    explicit GithubSearchClient(Options options);
    SearchResult search(const std::string& query) override;

private:
    Options options_;
};

class CachingSearchClient : public SearchClient {
public:
    explicit CachingSearchClient(std::shared_ptr<SearchClient> inner);
    SearchResult search(const std::string& query) override;
    std::size_t upstream_calls() const { return upstream_calls_; }

private:
    std::shared_ptr<SearchClient> inner_;
    std::mutex mu_;
    std::map<std::string, SearchResult> cache_;
    std::size_t upstream_calls_ = 0;
};

std::int64_t github_hit_count(SearchClient& client, const std::string& query);

std::string mask_value(std::string_view value, const AttributeSpec& a);
std::string mask_value(std::string_view value, const MaskPolicy& policy);

// Replaces every occurrence of `raw` inside `text` by `masked`.
std::string redact(std::string_view text, std::string_view raw, std::string_view masked);

}  // namespace leakaudit
