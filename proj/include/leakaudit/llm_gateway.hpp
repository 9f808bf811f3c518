#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "leakaudit/common.hpp"

namespace leakaudit {

enum class RoleKind { QuestionGen, Test, Judge };

std::string_view to_string(RoleKind r);
RoleKind role_from_string(std::string_view s);

struct DecodingParams {
    std::optional<double> temperature;  // absent = provider default
    std::optional<int> max_tokens;
};

struct LlmRole {
    RoleKind id = RoleKind::Test;
    std::string provider;
    std::string model;
    DecodingParams decoding;
};

struct LlmReply {
    std::string text;
    bool refused = false;
    double latency_ms = 0.0;
    json raw;
    std::string request_id;
};

struct ProviderRequest {
    RoleKind role = RoleKind::Test;
    std::string model;
    std::string prompt;
    DecodingParams decoding;
};

struct ProviderResponse {
    std::string text;
    json raw;
};

// Transport backends. Implementations throw Error with Errc::unreachable or
// Errc::rate_limited for transient failures (retried by the gateway) and
// Errc::auth / Errc::quota / Errc::protocol for permanent ones.
class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderResponse send(const ProviderRequest& request) = 0;
};

// Canned replies. Fixture JSON:
//   {"rules": [{"role": "Test", "contains": "..." | ["...", ...], "reply": "...",
//               "fail": "auth" | "quota" | "unreachable" | "rate_limited"}],
//    "default_reply": "..."}
// The first rule whose role (if given) and every `contains` substring match wins.
class MockProvider : public Provider {
public:
    struct Rule {
        std::optional<RoleKind> role;
        std::vector<std::string> contains;
        std::string reply;
        std::optional<Errc> fail;
    };

    MockProvider() = default;
    explicit MockProvider(std::vector<Rule> rules, std::string default_reply = {});
    static std::shared_ptr<MockProvider> from_json(const json& fixture);
    static std::shared_ptr<MockProvider> from_file(const std::string& path);

    ProviderResponse send(const ProviderRequest& request) override;

    std::size_t calls() const { return calls_.load(); }

private:
    std::vector<Rule> rules_;
    std::string default_reply_;
    std::atomic<std::size_t> calls_{0};
};

struct Exchange {
    std::string request_id;
    RoleKind role = RoleKind::Test;
    std::string provider;
    std::string model;
    std::string prompt;
    std::string prompt_hash;
    std::string reply;
    bool refused = false;
    double latency_ms = 0.0;
    std::optional<std::string> error;
    json raw;

    json to_json() const;
    static Exchange from_json(const json& j);
};

// Serves recorded exchanges back, keyed by (role, prompt hash) in recorded order.
class ReplayProvider : public Provider {
public:
    explicit ReplayProvider(const std::vector<Exchange>& exchanges);
    ProviderResponse send(const ProviderRequest& request) override;

private:
    std::mutex mu_;
    std::map<std::pair<RoleKind, std::string>, std::deque<Exchange>> by_key_;
};

// Chat-completion style HTTP backend. The API key comes from AUDIT_<PROVIDER>_KEY.
class HttpProvider : public Provider {
public:
    HttpProvider(std::string provider_id, std::string base_url, int timeout_seconds = 120);
    ProviderResponse send(const ProviderRequest& request) override;

private:
    std::string provider_id_;
    std::string base_url_;
    int timeout_seconds_;
};

std::string provider_key_env(std::string_view provider_id);

class RefusalDetector {
public:
    RefusalDetector();  // built-in phrase list
    explicit RefusalDetector(const std::vector<std::string>& patterns, bool code_overrides = true);
    static RefusalDetector from_file(const std::string& path, bool code_overrides = true);

    // Empty text, a phrase match without any fenced code, or a missing code block
    // when `code_requested` is set all count as refusals.
    bool detect(std::string_view text, bool code_requested = false) const;

private:
    std::vector<std::regex> patterns_;
    bool code_overrides_ = true;
};

bool has_fenced_code(std::string_view text);

class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute);  // <= 0 disables limiting
    void acquire();

private:
    std::mutex mu_;
    double capacity_;
    double tokens_;
    double refill_per_sec_;
    std::chrono::steady_clock::time_point last_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_backoff{500};
};

class LlmGateway {
public:
    using Recorder = std::function<void(const Exchange&)>;

    LlmGateway(std::map<RoleKind, LlmRole> roles,
               std::map<std::string, std::shared_ptr<Provider>> providers,
               RefusalDetector refusal = RefusalDetector(),
               RetryPolicy retry = {},
               double requests_per_minute = 0.0,
               Recorder recorder = {});

    LlmReply complete(RoleKind role, const std::string& prompt, bool code_requested = false);

    const LlmRole& role(RoleKind r) const;
    const RefusalDetector& refusal_detector() const { return refusal_; }

private:
    std::map<RoleKind, LlmRole> roles_;
    std::map<std::string, std::shared_ptr<Provider>> providers_;
    std::map<std::string, std::unique_ptr<RateLimiter>> limiters_;
    RefusalDetector refusal_;
    RetryPolicy retry_;
    Recorder recorder_;
    std::mutex seen_mu_;
    std::map<std::pair<RoleKind, std::string>, std::uint64_t> seen_;
};

}  // namespace leakaudit
