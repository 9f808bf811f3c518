#include "leakaudit/review_service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "leakaudit/metrics_report.hpp"
#include "leakaudit/pipeline.hpp"

namespace leakaudit {

ReviewService::ReviewService(const std::string& run_dir, const TaxonomySet& taxonomy, Options options)
    : store_(RunStore::open(run_dir, true)), taxonomy_(taxonomy), options_(options) {
    policy_ = review_policy_of(*store_);
    records_ = load_records(*store_, policy_);
}

const CandidateRecord& ReviewService::find(const std::string& id) const {
    for (const auto& r : records_)
        if (r.candidate.id == id) return r;
    throw Error(Errc::not_found, "no candidate " + id);
}

json ReviewService::view(const CandidateRecord& r, bool detail) const {
    const auto& a = taxonomy_.attribute(r.candidate.attribute);
    const std::string masked = mask_value(r.candidate.value, a);
    const std::string masked_query = r.query_used == r.candidate.value ? masked : mask_value(r.query_used, a);
    auto safe = [&](const std::string& text) {
        std::string t = redact(text, r.candidate.value, masked);
        return r.query_used.empty() ? t : redact(t, r.query_used, masked_query);
    };
    json evidence = json::array();
    for (const auto& e : r.evidence) evidence.push_back({{"repository", e.repository}, {"path", safe(e.path)}, {"snippet", safe(e.snippet)}});
    json decisions = json::array();
    for (const auto& d : r.decisions) {
        json dj = d.to_json();
        dj["note"] = safe(d.note);
        decisions.push_back(dj);
    }
    json j{{"id", r.candidate.id},
           {"run_id", store_->run_id()},
           {"attribute", a.id},
           {"category", std::string(to_string(a.category))},
           {"description", a.description},
           {"masked_value", masked},
           {"status", std::string(to_string(r.status))},
           {"terminal", is_terminal(r.status)},
           {"hit_count", r.hit_count ? json(*r.hit_count) : json(nullptr)},
           {"query_used", masked_query},
           {"evidence", evidence},
           {"decisions", decisions},
           {"version", r.version}};
    if (detail) {
        j["test_case_id"] = r.candidate.test_case_id;
        j["record_group"] = r.candidate.record_group;
        j["context_line"] = options_.allow_unmask ? r.candidate.context_line : safe(r.candidate.context_line);
        if (options_.allow_unmask) j["value"] = r.candidate.value;
    }
    return j;
}

json ReviewService::list(const ReviewFilter& f) const {
    std::lock_guard lock(mu_);
    if (f.page < 1 || f.per_page < 1 || f.per_page > 500) throw Error(Errc::invalid_argument, "page must be >= 1, per_page 1..500");
    std::vector<const CandidateRecord*> hits;
    for (const auto& r : records_) {
        if (f.status && r.status != *f.status) continue;
        if (f.attribute && r.candidate.attribute != *f.attribute) continue;
        if (f.category && taxonomy_.attribute(r.candidate.attribute).category != *f.category) continue;
        hits.push_back(&r);
    }
    json items = json::array();
    const std::size_t from = (f.page - 1) * f.per_page;
    for (std::size_t i = from; i < std::min(hits.size(), from + f.per_page); ++i) items.push_back(view(*hits[i], false));
    return {{"items", items}, {"page", f.page}, {"per_page", f.per_page}, {"total", hits.size()}};
}

json ReviewService::get(const std::string& id) const {
    std::lock_guard lock(mu_);
    return view(find(id), true);
}

std::uint64_t ReviewService::version(const std::string& id) const {
    std::lock_guard lock(mu_);
    return find(id).version;
}

json ReviewService::decide(const std::string& id, const ReviewDecision& decision,
                           std::optional<std::uint64_t> expected_version) {
    if (trim(decision.reviewer).empty()) throw Error(Errc::invalid_argument, "reviewer is required");
    std::lock_guard lock(mu_);
    CandidateRecord* rec = nullptr;
    for (auto& r : records_)
        if (r.candidate.id == id) rec = &r;
    if (!rec) throw Error(Errc::not_found, "no candidate " + id);
    CandidateRecord next = *rec;
    ReviewDecision d = decision;
    if (d.timestamp.empty()) d.timestamp = now_iso8601();
    record_review_decision(next, d, policy_, expected_version);
    json data = d.to_json();
    data["candidate_id"] = id;
    store_->append("decisions", content_id({id, d.reviewer}), data);
    *rec = std::move(next);
    return view(*rec, false);
}

json ReviewService::summary() const {
    std::lock_guard lock(mu_);
    RunSnapshot snap = load_snapshot(*store_, taxonomy_);
    return build_report(snap, taxonomy_).to_json();
}

void ReviewService::write_reports() const {
    std::lock_guard lock(mu_);
    leakaudit::write_reports(*store_, taxonomy_);
}

std::size_t apply_decisions_file(ReviewService& service, const std::string& path) {
    const std::string content = read_file(path);
    std::vector<json> items;
    try {
        const std::string t = trim(content);
        if (!t.empty() && t.front() == '[') {
            for (const auto& j : json::parse(t)) items.push_back(j);
        } else {
            for (const auto& line : split_lines(content))
                if (!trim(line).empty()) items.push_back(json::parse(line));
        }
    } catch (const json::exception& e) {
        throw Error(Errc::malformed, path + ": " + e.what());
    }
    std::size_t n = 0;
    for (const auto& j : items) {
        ReviewDecision d;
        try {
            d.reviewer = j.at("reviewer").get<std::string>();
            d.decision = decision_from_string(j.at("decision").get<std::string>());
            d.note = j.value("note", std::string{});
            d.timestamp = j.value("timestamp", std::string{});
            service.decide(j.at("candidate_id").get<std::string>(), d);
        } catch (const json::exception& e) {
            throw Error(Errc::malformed, path + ": " + e.what());
        }
        ++n;
    }
    return n;
}

struct ReviewServer::Impl {
    httplib::Server server;
};

namespace {

int http_status_for(Errc c) {
    switch (c) {
        case Errc::not_found: return 404;
        case Errc::invalid_argument:
        case Errc::malformed:
        case Errc::parse: return 400;
        case Errc::stale_version:
        case Errc::duplicate_reviewer:
        case Errc::terminal_record:
        case Errc::illegal_transition: return 409;
        case Errc::store_locked: return 423;
        default: return 500;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e, std::optional<std::uint64_t> version = std::nullopt) {
    json body{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (version) body["version"] = *version;
    send_json(res, http_status_for(e.code()), body);
}

std::optional<std::uint64_t> parse_if_match(const std::string& raw) {
    std::string v = trim(raw);
    if (v.rfind("W/", 0) == 0) v = v.substr(2);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) return std::nullopt;
    return std::stoull(v);
}

std::size_t parse_count(const std::string& v, const char* name) {
    if (v.empty() || v.size() > 9 || v.find_first_not_of("0123456789") != std::string::npos)
        throw Error(Errc::invalid_argument, std::string(name) + " must be a positive integer");
    return std::stoul(v);
}

}  // namespace

ReviewServer::ReviewServer(ReviewService& svc, std::string static_dir) : impl_(std::make_unique<Impl>()) {
    auto& s = impl_->server;
    s.Get("/api/candidates", [&svc](const httplib::Request& req, httplib::Response& res) {
        try {
            ReviewFilter f;
            if (req.has_param("status")) f.status = status_from_string(req.get_param_value("status"));
            if (req.has_param("attribute")) f.attribute = req.get_param_value("attribute");
            if (req.has_param("category")) f.category = category_from_string(req.get_param_value("category"));
            if (req.has_param("page")) f.page = parse_count(req.get_param_value("page"), "page");
            if (req.has_param("per_page")) f.per_page = parse_count(req.get_param_value("per_page"), "per_page");
            send_json(res, 200, svc.list(f));
        } catch (const Error& e) {
            send_error(res, Error(e.code() == Errc::not_found ? Errc::invalid_argument : e.code(), e.what()));
        }
    });
    s.Get(R"(/api/candidates/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        try {
            json j = svc.get(req.matches[1]);
            res.set_header("ETag", "\"" + std::to_string(j.at("version").get<std::uint64_t>()) + "\"");
            send_json(res, 200, j);
        } catch (const Error& e) {
            send_error(res, e);
        }
    });
    s.Post(R"(/api/candidates/([^/]+)/decision)", [&svc](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        std::optional<std::uint64_t> current;
        try {
            current = svc.version(id);
            if (!req.has_header("If-Match")) {
                send_json(res, 428, {{"error", "precondition_required"}, {"message", "If-Match header with the record version is required"},
                                     {"version", *current}});
                return;
            }
            auto expected = parse_if_match(req.get_header_value("If-Match"));
            if (!expected) throw Error(Errc::invalid_argument, "If-Match must hold a record version");
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::exception& e) {
                throw Error(Errc::invalid_argument, std::string("body is not JSON: ") + e.what());
            }
            if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string() ||
                !body.contains("reviewer") || !body["reviewer"].is_string())
                throw Error(Errc::invalid_argument, "body needs decision and reviewer strings");
            ReviewDecision d;
            d.reviewer = body["reviewer"].get<std::string>();
            d.decision = decision_from_string(body["decision"].get<std::string>());
            d.note = body.contains("note") && body["note"].is_string() ? body["note"].get<std::string>() : "";
            json view = svc.decide(id, d, expected);
            res.set_header("ETag", "\"" + std::to_string(view.at("version").get<std::uint64_t>()) + "\"");
            send_json(res, 200, view);
        } catch (const Error& e) {
            send_error(res, e, current);
        }
    });
    s.Get(R"(/api/runs/([^/]+)/summary)", [&svc](const httplib::Request& req, httplib::Response& res) {
        try {
            if (req.matches[1] != svc.run_id()) throw Error(Errc::not_found, "this service serves run " + svc.run_id());
            send_json(res, 200, svc.summary());
        } catch (const Error& e) {
            send_error(res, e);
        }
    });
    if (!static_dir.empty() && !s.set_mount_point("/", static_dir))
        throw Error(Errc::config, "static asset directory " + static_dir + " does not exist");
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(Errc::config, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void ReviewServer::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) throw Error(Errc::config, "cannot listen on " + host + ":" + std::to_string(port));
}

void ReviewServer::stop() {
    if (impl_) impl_->server.stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace leakaudit
