#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/feature_library.hpp"
#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/metrics_report.hpp"
#include "leakaudit/run_store.hpp"
#include "leakaudit/scorer.hpp"
#include "leakaudit/taxonomy.hpp"
#include "leakaudit/verification.hpp"

namespace leakaudit {

struct ProviderSpec {
    std::string type = "mock";  // mock | http
    std::string fixture;        // mock
    std::string base_url;       // http
    int timeout_seconds = 120;
};

struct RunConfig {
    std::string run_id;
    std::string store_dir = "runs";
    std::vector<std::string> scenarios;   // empty: every scenario
    std::vector<std::string> attributes;  // empty: every attribute of each scenario
    int questions_per_scenario = 20;      // per (scenario, attribute) pair
    int tests_per_question = 10;
    int functions_per_question = 1;
    std::map<RoleKind, LlmRole> roles;
    std::map<std::string, ProviderSpec> providers;
    std::string taxonomy_path;      // empty: bundled
    std::string placeholders_path;  // empty: bundled
    std::string refusal_path;       // empty: bundled
    std::string library_path;       // empty or missing file: initialized from seeds
    std::string seeds_path;         // empty: bundled
    bool cgq = true;
    bool fl = true;
    bool tg = true;
    int hint_templates = 3;
    int hint_fragments = 3;
    std::string search_mode = "fixture";  // fixture | live
    std::string search_fixture;
    std::string search_base_url = "https://api.github.com";
    std::size_t phrase_limit = kDefaultPhraseLimit;
    std::string scorer_mode = "stub";  // stub | http
    std::string scorer_endpoint;
    int concurrency = 4;
    std::uint64_t seed = 7;
    int quorum = 2;
    bool judge_context_line = false;
    double requests_per_minute = 0.0;
    int max_retries = 3;
    int backoff_ms = 500;
    std::string replay_from;  // run directory whose exchanges and searches are served back

    // Relative paths resolve against `base_dir`. Throws Errc::config.
    static RunConfig from_json(const json& j, const std::string& base_dir = ".");
    static RunConfig from_file(const std::string& path);
    json to_json() const;
};

// Optional overrides for the dependencies a config would otherwise build.
struct PipelineDeps {
    std::map<std::string, std::shared_ptr<Provider>> providers;
    std::shared_ptr<SearchClient> search;
    std::shared_ptr<Scorer> scorer;
    std::function<void(const std::string& stage, const std::string& message)> progress;
};

struct RunResult {
    std::string run_id;
    std::string dir;
    RunReport report;
};

// questions -> code -> tests -> extract -> judge -> search. Records left at
// SearchInRange await review. With `resume`, checkpointed stages are skipped and
// items already in the store are not produced again.
RunResult run_audit(const RunConfig& cfg, bool resume = false, PipelineDeps deps = {});

std::shared_ptr<Scorer> make_scorer(const RunConfig& cfg);
std::shared_ptr<SearchClient> make_search_client(const RunConfig& cfg);
std::map<std::string, std::shared_ptr<Provider>> make_providers(const RunConfig& cfg);
TaxonomySet load_run_taxonomy(const RunConfig& cfg);

// Candidate records folded from the candidates, verdicts, searches and decisions
// streams. An event the state machine refuses means the store is corrupt.
std::vector<CandidateRecord> load_records(const RunStore& store, const ReviewPolicy& policy);
RunSnapshot load_snapshot(const RunStore& store, const TaxonomySet& taxonomy);
ReviewPolicy review_policy_of(const RunStore& store);

// Writes report.json and report.md into the run directory.
RunReport write_reports(const RunStore& store, const TaxonomySet& taxonomy);

struct LibraryUpdateSummary {
    std::uint64_t old_version = 0;
    std::uint64_t new_version = 0;
    std::map<std::string, std::pair<std::size_t, std::size_t>> added;
    std::size_t total_added() const;
    std::string render() const;
};

// Confirmed records of the run feed update_library; the library file is replaced
// atomically only after the whole update succeeded.
LibraryUpdateSummary library_update_from_run(const std::string& run_dir, const std::string& library_path,
                                             const TaxonomySet& taxonomy, Scorer& scorer,
                                             const UpdateOptions& options = {});

// <run>/figures/scores.csv and clusters.csv from a dry-run library update.
std::pair<std::string, std::string> export_figures(const std::string& run_dir, const FeatureLibrary& lib,
                                                   const TaxonomySet& taxonomy, Scorer& scorer);

}  // namespace leakaudit
