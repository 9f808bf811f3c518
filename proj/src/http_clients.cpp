#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/scorer.hpp"
#include "leakaudit/verification.hpp"

namespace leakaudit {

namespace {

// "https://host:port/prefix" -> ("https://host:port", "/prefix")
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(Errc::config, "base URL needs a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    std::string prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

std::unique_ptr<httplib::Client> make_client(const std::string& host, int timeout_seconds) {
    auto cli = std::make_unique<httplib::Client>(host);
    cli->set_connection_timeout(std::min(timeout_seconds, 30), 0);
    cli->set_read_timeout(timeout_seconds, 0);
    cli->set_write_timeout(timeout_seconds, 0);
    cli->set_follow_location(true);
    return cli;
}

std::string env_or_empty(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    return v ? std::string(v) : std::string{};
}

json parse_body(const httplib::Result& res, const std::string& what) {
    try {
        return json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(Errc::protocol, what + ": response is not JSON: " + e.what());
    }
}

}  // namespace

HttpProvider::HttpProvider(std::string provider_id, std::string base_url, int timeout_seconds)
    : provider_id_(std::move(provider_id)), base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {}

ProviderResponse HttpProvider::send(const ProviderRequest& request) {
    const std::string key_env = provider_key_env(provider_id_);
    const std::string key = env_or_empty(key_env);
    if (key.empty()) throw Error(Errc::auth, key_env + " is not set");
    auto [host, prefix] = split_base_url(base_url_);
    auto cli = make_client(host, timeout_seconds_);
    json body{{"model", request.model}, {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
    if (request.decoding.temperature) body["temperature"] = *request.decoding.temperature;
    if (request.decoding.max_tokens) body["max_tokens"] = *request.decoding.max_tokens;
    httplib::Headers headers{{"Authorization", "Bearer " + key}};
    auto res = cli->Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw Error(Errc::unreachable, provider_id_ + ": " + httplib::to_string(res.error()));
    if (res->status == 401 || res->status == 403) throw Error(Errc::auth, provider_id_ + ": HTTP " + std::to_string(res->status));
    if (res->status == 429) {
        if (res->body.find("insufficient_quota") != std::string::npos) throw Error(Errc::quota, provider_id_ + ": quota exhausted");
        throw Error(Errc::rate_limited, provider_id_ + ": HTTP 429");
    }
    if (res->status >= 500) throw Error(Errc::unreachable, provider_id_ + ": HTTP " + std::to_string(res->status));
    if (res->status != 200) throw Error(Errc::protocol, provider_id_ + ": HTTP " + std::to_string(res->status));
    json j = parse_body(res, provider_id_);
    try {
        const json& msg = j.at("choices").at(0).at("message");
        std::string text = msg.contains("content") && msg["content"].is_string() ? msg["content"].get<std::string>() : "";
        return {std::move(text), std::move(j)};
    } catch (const json::exception& e) {
        throw Error(Errc::protocol, provider_id_ + ": unexpected completion shape: " + e.what());
    }
}

GithubSearchClient::GithubSearchClient() : GithubSearchClient(Options{}) {}

GithubSearchClient::GithubSearchClient(Options options) : options_(std::move(options)) {}

SearchResult GithubSearchClient::search(const std::string& query) {
    const std::string token = env_or_empty("AUDIT_GITHUB_TOKEN");
    if (token.empty()) throw Error(Errc::auth, "AUDIT_GITHUB_TOKEN is not set");
    auto [host, prefix] = split_base_url(options_.base_url);
    auto cli = make_client(host, 30);
    std::string phrase = "\"";
    for (char c : query) {
        if (c == '"') phrase += "\\\"";
        else phrase.push_back(c);
    }
    phrase += "\"";
    const httplib::Params params{{"q", phrase}, {"per_page", std::to_string(options_.per_page)}};
    const httplib::Headers headers{{"Authorization", "Bearer " + token},
                                   {"Accept", "application/vnd.github.text-match+json"},
                                   {"User-Agent", "leakaudit"}};
    for (int attempt = 0;; ++attempt) {
        auto res = cli->Get(prefix + "/search/code", params, headers);
        std::chrono::milliseconds wait = options_.base_backoff * (1 << std::min(attempt, 10));
        bool retry = false;
        Errc failure = Errc::unreachable;
        std::string detail;
        if (!res) {
            retry = true;
            detail = httplib::to_string(res.error());
        } else if (res->status == 401) {
            throw Error(Errc::auth, "GitHub rejected the token");
        } else if (res->status == 403 || res->status == 429) {
            const bool limited = res->get_header_value("X-RateLimit-Remaining") == "0" || res->status == 429 ||
                                 res->has_header("Retry-After");
            if (!limited) throw Error(Errc::auth, "GitHub search forbidden: HTTP " + std::to_string(res->status));
            retry = true;
            failure = Errc::rate_limited;
            detail = "rate limited";
            if (res->has_header("Retry-After")) {
                wait = std::chrono::seconds(std::atoll(res->get_header_value("Retry-After").c_str()));
            } else if (res->has_header("X-RateLimit-Reset")) {
                const auto reset = std::atoll(res->get_header_value("X-RateLimit-Reset").c_str());
                const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                                     std::chrono::system_clock::now().time_since_epoch())
                                     .count();
                wait = std::chrono::seconds(std::max<long long>(1, reset - now));
            }
        } else if (res->status >= 500) {
            retry = true;
            detail = "HTTP " + std::to_string(res->status);
        } else if (res->status != 200) {
            throw Error(Errc::protocol, "GitHub search: HTTP " + std::to_string(res->status));
        } else {
            json j = parse_body(res, "GitHub search");
            SearchResult r;
            try {
                r.total_count = j.at("total_count").get<std::int64_t>();
                for (const auto& item : j.value("items", json::array())) {
                    Evidence e;
                    e.repository = item.value("repository", json::object()).value("full_name", std::string{});
                    e.path = item.value("path", std::string{});
                    const auto tm = item.value("text_matches", json::array());
                    if (!tm.empty()) e.snippet = tm[0].value("fragment", std::string{});
                    r.items.push_back(std::move(e));
                }
            } catch (const json::exception& e) {
                throw Error(Errc::protocol, std::string("GitHub search: ") + e.what());
            }
            return r;
        }
        if (!retry || attempt >= options_.max_retries || wait > options_.max_wait)
            throw Error(failure, "GitHub search: " + detail);
        std::this_thread::sleep_for(wait);
    }
}

HttpScorerClient::HttpScorerClient(std::string endpoint, int timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {}

json HttpScorerClient::info() {
    std::lock_guard lock(mu_);
    if (info_) return *info_;
    auto [host, prefix] = split_base_url(endpoint_);
    auto cli = make_client(host, timeout_seconds_);
    auto res = cli->Get(prefix + "/info");
    if (!res) throw Error(Errc::unreachable, "scorer: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::unreachable, "scorer /info: HTTP " + std::to_string(res->status));
    json j = parse_body(res, "scorer /info");
    if (!j.contains("scorer_id") || !j["scorer_id"].is_string() || !j.contains("dim") || !j["dim"].is_number_unsigned())
        throw Error(Errc::protocol, "scorer /info lacks scorer_id or dim");
    info_ = j;
    return j;
}

std::string HttpScorerClient::scorer_id() { return info().at("scorer_id").get<std::string>(); }

std::size_t HttpScorerClient::dim() { return info().at("dim").get<std::size_t>(); }

TokenScoreSeq HttpScorerClient::score_sequence(const std::string& text) {
    auto [host, prefix] = split_base_url(endpoint_);
    auto cli = make_client(host, timeout_seconds_);
    auto res = cli->Post(prefix + "/score_sequence", json{{"text", text}}.dump(), "application/json");
    if (!res) throw Error(Errc::unreachable, "scorer: " + httplib::to_string(res.error()));
    if (res->status == 413 || res->status == 400) throw Error(Errc::invalid_argument, "scorer rejected the text: " + res->body);
    if (res->status != 200) throw Error(Errc::unreachable, "scorer /score_sequence: HTTP " + std::to_string(res->status));
    json j = parse_body(res, "scorer /score_sequence");
    TokenScoreSeq seq;
    seq.text = text;
    try {
        seq.scorer_id = j.at("scorer_id").get<std::string>();
        for (const auto& t : j.at("tokens")) {
            ScoredToken tok;
            tok.start = utf8_byte_offset(text, t.at("start").get<std::size_t>());
            tok.end = utf8_byte_offset(text, t.at("end").get<std::size_t>());
            tok.text = t.value("text", std::string{});
            if (tok.end < tok.start) throw Error(Errc::protocol, "scorer token span reversed");
            seq.tokens.push_back(std::move(tok));
        }
        for (const auto& v : j.at("nll")) {
            if (!v.is_number()) throw Error(Errc::protocol, "scorer score is not a number");
            seq.nll.push_back(v.get<double>());
        }
    } catch (const json::exception& e) {
        throw Error(Errc::protocol, std::string("scorer /score_sequence: ") + e.what());
    }
    seq.validate();
    return seq;
}

std::vector<double> HttpScorerClient::embed(const std::string& text) {
    const std::size_t expected = dim();
    auto [host, prefix] = split_base_url(endpoint_);
    auto cli = make_client(host, timeout_seconds_);
    auto res = cli->Post(prefix + "/embed", json{{"text", text}}.dump(), "application/json");
    if (!res) throw Error(Errc::unreachable, "scorer: " + httplib::to_string(res.error()));
    if (res->status == 413 || res->status == 400) throw Error(Errc::invalid_argument, "scorer rejected the text: " + res->body);
    if (res->status != 200) throw Error(Errc::unreachable, "scorer /embed: HTTP " + std::to_string(res->status));
    json j = parse_body(res, "scorer /embed");
    std::vector<double> v;
    try {
        for (const auto& x : j.at("vector")) v.push_back(x.get<double>());
        if (j.at("dim").get<std::size_t>() != v.size()) throw Error(Errc::protocol, "scorer /embed dim disagrees with vector");
    } catch (const json::exception& e) {
        throw Error(Errc::protocol, std::string("scorer /embed: ") + e.what());
    }
    if (v.size() != expected)
        throw Error(Errc::protocol, "scorer /embed returned " + std::to_string(v.size()) + " dims, /info says " +
                                        std::to_string(expected));
    for (double x : v)
        if (!std::isfinite(x)) throw Error(Errc::protocol, "scorer /embed returned a non-finite value");
    return v;
}

}  // namespace leakaudit
