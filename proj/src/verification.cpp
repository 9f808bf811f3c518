#include "leakaudit/verification.hpp"

#include <algorithm>
#include <cctype>

namespace leakaudit {

std::string_view to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::Extracted: return "Extracted";
        case CandidateStatus::JudgeRejected: return "JudgeRejected";
        case CandidateStatus::JudgePassed: return "JudgePassed";
        case CandidateStatus::SearchZero: return "SearchZero";
        case CandidateStatus::SearchOverflow: return "SearchOverflow";
        case CandidateStatus::SearchInRange: return "SearchInRange";
        case CandidateStatus::Confirmed: return "Confirmed";
        case CandidateStatus::Potential: return "Potential";
        case CandidateStatus::Rejected: return "Rejected";
    }
    return "Extracted";
}

CandidateStatus status_from_string(std::string_view s) {
    for (auto st : {CandidateStatus::Extracted, CandidateStatus::JudgeRejected, CandidateStatus::JudgePassed,
                    CandidateStatus::SearchZero, CandidateStatus::SearchOverflow, CandidateStatus::SearchInRange,
                    CandidateStatus::Confirmed, CandidateStatus::Potential, CandidateStatus::Rejected})
        if (to_string(st) == s) return st;
    throw Error(Errc::invalid_argument, "unknown status '" + std::string(s) + "'");
}

bool is_terminal(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::JudgeRejected:
        case CandidateStatus::SearchZero:
        case CandidateStatus::SearchOverflow:
        case CandidateStatus::Confirmed:
        case CandidateStatus::Potential:
        case CandidateStatus::Rejected:
            return true;
        default:
            return false;
    }
}

bool is_legal_transition(CandidateStatus from, CandidateStatus to) {
    using S = CandidateStatus;
    switch (from) {
        case S::Extracted: return to == S::JudgeRejected || to == S::JudgePassed;
        case S::JudgePassed: return to == S::SearchZero || to == S::SearchOverflow || to == S::SearchInRange;
        case S::SearchInRange: return to == S::Confirmed || to == S::Potential || to == S::Rejected;
        default: return false;
    }
}

std::string_view to_string(ReviewDecisionKind d) {
    switch (d) {
        case ReviewDecisionKind::Confirm: return "confirm";
        case ReviewDecisionKind::Reject: return "reject";
        case ReviewDecisionKind::Potential: return "potential";
    }
    return "confirm";
}

ReviewDecisionKind decision_from_string(std::string_view s) {
    if (s == "confirm") return ReviewDecisionKind::Confirm;
    if (s == "reject") return ReviewDecisionKind::Reject;
    if (s == "potential") return ReviewDecisionKind::Potential;
    throw Error(Errc::invalid_argument, "unknown decision '" + std::string(s) + "'");
}

json Evidence::to_json() const { return {{"repository", repository}, {"path", path}, {"snippet", snippet}}; }

Evidence Evidence::from_json(const json& j) {
    return {j.value("repository", std::string{}), j.value("path", std::string{}), j.value("snippet", std::string{})};
}

json ReviewDecision::to_json() const {
    return {{"reviewer", reviewer}, {"decision", std::string(to_string(decision))}, {"note", note}, {"timestamp", timestamp}};
}

ReviewDecision ReviewDecision::from_json(const json& j) {
    ReviewDecision d;
    d.reviewer = j.at("reviewer").get<std::string>();
    d.decision = decision_from_string(j.at("decision").get<std::string>());
    d.note = j.value("note", std::string{});
    d.timestamp = j.value("timestamp", std::string{});
    return d;
}

json CandidateRecord::to_json(bool include_raw) const {
    json evidence_json = json::array();
    for (const auto& e : evidence) evidence_json.push_back(e.to_json());
    json decisions_json = json::array();
    for (const auto& d : decisions) decisions_json.push_back(d.to_json());
    json j{{"id", candidate.id},
           {"attribute", candidate.attribute},
           {"status", std::string(to_string(status))},
           {"hit_count", hit_count ? json(*hit_count) : json(nullptr)},
           {"decisions", decisions_json},
           {"version", version}};
    if (include_raw) {
        j["candidate"] = candidate.to_json();
        j["query_used"] = query_used;
        j["evidence"] = evidence_json;
    }
    return j;
}

namespace {

void transition(CandidateRecord& rec, CandidateStatus to) {
    if (is_terminal(rec.status))
        throw Error(Errc::terminal_record, "record " + rec.candidate.id + " is " + std::string(to_string(rec.status)));
    if (!is_legal_transition(rec.status, to))
        throw Error(Errc::illegal_transition, std::string(to_string(rec.status)) + " -> " + std::string(to_string(to)));
    rec.status = to;
    ++rec.version;
}

}  // namespace

void apply_judge_verdict(CandidateRecord& rec, bool accept) {
    transition(rec, accept ? CandidateStatus::JudgePassed : CandidateStatus::JudgeRejected);
}

void apply_search_threshold(CandidateRecord& rec, std::int64_t k, std::string query, std::vector<Evidence> evidence) {
    if (k < 0) throw Error(Errc::invalid_argument, "negative hit count");
    CandidateStatus to = k < kMinHits   ? CandidateStatus::SearchZero
                         : k > kMaxHits ? CandidateStatus::SearchOverflow
                                        : CandidateStatus::SearchInRange;
    transition(rec, to);
    rec.hit_count = k;
    rec.query_used = std::move(query);
    if (evidence.size() > 10) evidence.resize(10);
    rec.evidence = std::move(evidence);
}

void record_review_decision(CandidateRecord& rec, const ReviewDecision& decision, const ReviewPolicy& policy,
                            std::optional<std::uint64_t> expected_version) {
    if (is_terminal(rec.status))
        throw Error(Errc::terminal_record, "record " + rec.candidate.id + " is " + std::string(to_string(rec.status)));
    if (rec.status != CandidateStatus::SearchInRange)
        throw Error(Errc::illegal_transition, "review requires SearchInRange, record is " + std::string(to_string(rec.status)));
    if (expected_version && *expected_version != rec.version)
        throw Error(Errc::stale_version, "expected version " + std::to_string(*expected_version) + ", record is at " +
                                             std::to_string(rec.version));
    for (const auto& d : rec.decisions)
        if (d.reviewer == decision.reviewer)
            throw Error(Errc::duplicate_reviewer, decision.reviewer + " already decided " + rec.candidate.id);

    rec.decisions.push_back(decision);
    ++rec.version;

    const auto confirms = std::count_if(rec.decisions.begin(), rec.decisions.end(),
                                        [](const auto& d) { return d.decision == ReviewDecisionKind::Confirm; });
    const bool any_reject = std::any_of(rec.decisions.begin(), rec.decisions.end(),
                                        [](const auto& d) { return d.decision == ReviewDecisionKind::Reject; });
    if (any_reject) {
        rec.status = CandidateStatus::Rejected;
    } else if (confirms >= policy.quorum) {
        rec.status = CandidateStatus::Confirmed;
    } else if (static_cast<int>(rec.decisions.size()) >= std::max(policy.assigned_reviewers, 1)) {
        rec.status = CandidateStatus::Potential;
    }
}

std::string discriminative_query(std::string_view value, std::size_t phrase_limit) {
    std::size_t best_start = 0, best_len = 0;
    std::size_t i = 0;
    while (i < value.size()) {
        if (!std::isalnum(static_cast<unsigned char>(value[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < value.size() && std::isalnum(static_cast<unsigned char>(value[j]))) ++j;
        if (j - i > best_len) {
            best_len = j - i;
            best_start = i;
        }
        i = j;
    }
    if (value.size() <= phrase_limit && best_len >= 6) return std::string(value);
    if (best_len >= 8) return std::string(value.substr(best_start, best_len));
    return std::string(value);
}

json SearchResult::to_json() const {
    json items_json = json::array();
    for (const auto& e : items) items_json.push_back(e.to_json());
    return {{"total_count", total_count}, {"items", items_json}};
}

SearchResult SearchResult::from_json(const json& j) {
    SearchResult r;
    if (j.is_number_integer()) {
        r.total_count = j.get<std::int64_t>();
        return r;
    }
    r.total_count = j.value("total_count", std::int64_t{0});
    for (const auto& e : j.value("items", json::array())) r.items.push_back(Evidence::from_json(e));
    return r;
}

FixtureSearchClient::FixtureSearchClient(const json& fixture) {
    const json queries = fixture.value("queries", json::object());
    for (const auto& [q, v] : queries.items()) by_query_[q] = SearchResult::from_json(v);
    default_count_ = fixture.value("default", std::int64_t{0});
}

std::shared_ptr<FixtureSearchClient> FixtureSearchClient::from_file(const std::string& path) {
    try {
        return std::make_shared<FixtureSearchClient>(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(Errc::config, path + ": " + e.what());
    }
}

SearchResult FixtureSearchClient::search(const std::string& query) {
    if (auto it = by_query_.find(query); it != by_query_.end()) return it->second;
    if (auto it = by_query_.find(sha256_hex(query)); it != by_query_.end()) return it->second;
    return SearchResult{default_count_, {}};
}

CachingSearchClient::CachingSearchClient(std::shared_ptr<SearchClient> inner) : inner_(std::move(inner)) {}

SearchResult CachingSearchClient::search(const std::string& query) {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(query); it != cache_.end()) return it->second;
        ++upstream_calls_;
    }
    SearchResult r = inner_->search(query);
    std::lock_guard lock(mu_);
    cache_.emplace(query, r);
    return r;
}

std::int64_t github_hit_count(SearchClient& client, const std::string& query) { return client.search(query).total_count; }

namespace {

std::string mask_ends(std::string_view value, const MaskPolicy& p) {
    const std::size_t n = value.size();
    if (n <= 2) return std::string(value);
    const std::size_t min_masked = std::max<std::size_t>(1, n / 4);
    std::size_t pre = std::min(p.keep_prefix, n);
    std::size_t suf = std::min(p.keep_suffix, n);
    while (pre + suf + min_masked > n) {
        if (suf > 0) --suf;
        else if (pre > 0) --pre;
        else break;
    }
    std::string out(value);
    bool starred = false;
    for (std::size_t i = pre; i < n - suf; ++i) {
        if (p.keep_separators && p.separators.find(out[i]) != std::string::npos) continue;
        out[i] = '*';
        starred = true;
    }
    if (!starred) {
        // middle held only separators
        for (std::size_t i = pre; i < n - suf; ++i) out[i] = '*';
    }
    return out;
}

std::string mask_email(std::string_view value, const MaskPolicy& p) {
    auto at = value.rfind('@');
    if (at == std::string_view::npos || at == 0) return mask_ends(value, p);
    std::string_view local = value.substr(0, at);
    const std::size_t half = (local.size() + 1) / 2;
    std::size_t keep = std::min(p.keep_prefix, half);
    if (keep >= local.size()) keep = local.size() - 1;
    std::string out(local.substr(0, keep));
    out.append(local.size() - keep, '*');
    out.append(value.substr(at));
    return out;
}

std::string mask_digits(std::string_view value, const MaskPolicy& p) {
    auto is_pos = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '*'; };
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < value.size(); ++i)
        if (is_pos(value[i])) positions.push_back(i);
    const std::size_t d = positions.size();
    if (d == 0) return mask_ends(value, p);
    if (value.size() <= 2) return std::string(value);
    const std::size_t start = std::min(p.keep_prefix, d > p.mask_count ? d - p.mask_count : 0);
    const std::size_t count = std::max<std::size_t>(1, std::min(p.mask_count, d - start));
    const std::size_t first = positions[start];
    const std::size_t last = positions[std::min(d - 1, start + count - 1)];
    std::string out(value.substr(0, first));
    if (p.keep_separators) {
        for (std::size_t i = first; i <= last; ++i) out.push_back(is_pos(value[i]) ? '*' : value[i]);
    } else {
        out.append(count, '*');
    }
    out.append(value.substr(last + 1));
    return out;
}

}  // namespace

std::string mask_value(std::string_view value, const MaskPolicy& policy) {
    if (value.size() <= 2) return std::string(value);
    switch (policy.kind) {
        case MaskKind::Email: return mask_email(value, policy);
        case MaskKind::Digits: return mask_digits(value, policy);
        case MaskKind::Ends: return mask_ends(value, policy);
    }
    return mask_ends(value, policy);
}

std::string mask_value(std::string_view value, const AttributeSpec& a) { return mask_value(value, a.mask_policy); }

std::string redact(std::string_view text, std::string_view raw, std::string_view masked) {
    if (raw.empty()) return std::string(text);
    std::string out;
    std::size_t pos = 0;
    for (;;) {
        auto hit = text.find(raw, pos);
        if (hit == std::string_view::npos) break;
        out.append(text.substr(pos, hit - pos));
        out.append(masked);
        pos = hit + raw.size();
    }
    out.append(text.substr(pos));
    return out;
}

}  // namespace leakaudit
