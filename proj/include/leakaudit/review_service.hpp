#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "leakaudit/run_store.hpp"
#include "leakaudit/taxonomy.hpp"
#include "leakaudit/verification.hpp"

namespace leakaudit {

struct ReviewFilter {
    std::optional<CandidateStatus> status;
    std::optional<std::string> attribute;
    std::optional<PrivacyCategory> category;
    std::size_t page = 1;
    std::size_t per_page = 50;
};

// Review state of one run: records folded from its store, decisions appended to
// it. Holds the store's writer lock while alive.
class ReviewService {
public:
    struct Options {
        bool allow_unmask = false;  // expose raw values on the detail endpoint
    };

    ReviewService(const std::string& run_dir, const TaxonomySet& taxonomy, Options options);
    ReviewService(const std::string& run_dir, const TaxonomySet& taxonomy) : ReviewService(run_dir, taxonomy, Options{}) {}

    const std::string& run_id() const { return store_->run_id(); }

    json list(const ReviewFilter& filter) const;
    json get(const std::string& id) const;  // throws not_found
    std::uint64_t version(const std::string& id) const;
    // Applies and persists a decision; see record_review_decision for errors.
    json decide(const std::string& id, const ReviewDecision& decision,
                std::optional<std::uint64_t> expected_version = std::nullopt);
    json summary() const;
    // Regenerates report.json and report.md from the store.
    void write_reports() const;

private:
    json view(const CandidateRecord& r, bool detail) const;
    const CandidateRecord& find(const std::string& id) const;

    std::unique_ptr<RunStore> store_;
    const TaxonomySet& taxonomy_;
    Options options_;
    ReviewPolicy policy_;
    mutable std::mutex mu_;
    std::vector<CandidateRecord> records_;
};

// Applies recorded decisions from a JSON array or JSON Lines file of
// {candidate_id, reviewer, decision, note}. Returns the number applied.
std::size_t apply_decisions_file(ReviewService& service, const std::string& path);

// HTTP front end: GET /api/candidates, GET /api/candidates/{id},
// POST /api/candidates/{id}/decision (If-Match: "<version>"), GET /api/runs/{id}/summary,
// plus optional static assets at /.
class ReviewServer {
public:
    ReviewServer(ReviewService& service, std::string static_dir = {});
    ~ReviewServer();

    // Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host, int port);
    // Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread thread_;
};

}  // namespace leakaudit
