#include "leakaudit/llm_gateway.hpp"

#include <algorithm>
#include <thread>

namespace leakaudit {

std::string_view to_string(RoleKind r) {
    switch (r) {
        case RoleKind::QuestionGen: return "QuestionGen";
        case RoleKind::Test: return "Test";
        case RoleKind::Judge: return "Judge";
    }
    return "Test";
}

RoleKind role_from_string(std::string_view s) {
    if (s == "QuestionGen") return RoleKind::QuestionGen;
    if (s == "Test") return RoleKind::Test;
    if (s == "Judge") return RoleKind::Judge;
    throw Error(Errc::config, "unknown role '" + std::string(s) + "'");
}

namespace {

Errc fail_from_string(const std::string& s) {
    if (s == "auth") return Errc::auth;
    if (s == "quota") return Errc::quota;
    if (s == "unreachable") return Errc::unreachable;
    if (s == "rate_limited") return Errc::rate_limited;
    throw Error(Errc::config, "unknown mock failure '" + s + "'");
}

bool is_transient(Errc c) { return c == Errc::unreachable || c == Errc::rate_limited; }

}  // namespace

MockProvider::MockProvider(std::vector<Rule> rules, std::string default_reply)
    : rules_(std::move(rules)), default_reply_(std::move(default_reply)) {}

std::shared_ptr<MockProvider> MockProvider::from_json(const json& fixture) {
    std::vector<Rule> rules;
    for (const auto& r : fixture.value("rules", json::array())) {
        Rule rule;
        if (r.contains("role")) rule.role = role_from_string(r.at("role").get<std::string>());
        if (r.contains("contains")) {
            const auto& c = r.at("contains");
            if (c.is_string()) rule.contains.push_back(c.get<std::string>());
            else rule.contains = c.get<std::vector<std::string>>();
        }
        rule.reply = r.value("reply", std::string{});
        if (r.contains("fail")) rule.fail = fail_from_string(r.at("fail").get<std::string>());
        rules.push_back(std::move(rule));
    }
    return std::make_shared<MockProvider>(std::move(rules), fixture.value("default_reply", std::string{}));
}

std::shared_ptr<MockProvider> MockProvider::from_file(const std::string& path) {
    try {
        return from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(Errc::config, path + ": " + e.what());
    }
}

ProviderResponse MockProvider::send(const ProviderRequest& request) {
    ++calls_;
    for (const auto& rule : rules_) {
        if (rule.role && *rule.role != request.role) continue;
        bool all = std::all_of(rule.contains.begin(), rule.contains.end(), [&](const std::string& needle) {
            return request.prompt.find(needle) != std::string::npos;
        });
        if (!all) continue;
        if (rule.fail) throw Error(*rule.fail, "mock provider configured to fail");
        return {rule.reply, json{{"mock", true}}};
    }
    return {default_reply_, json{{"mock", true}, {"default", true}}};
}

json Exchange::to_json() const {
    json j{{"request_id", request_id}, {"role", std::string(to_string(role))},
           {"provider", provider},     {"model", model},
           {"prompt", prompt},         {"prompt_hash", prompt_hash},
           {"reply", reply},           {"refused", refused},
           {"latency_ms", latency_ms}, {"raw", raw}};
    j["error"] = error ? json(*error) : json(nullptr);
    return j;
}

Exchange Exchange::from_json(const json& j) {
    Exchange e;
    e.request_id = j.at("request_id").get<std::string>();
    e.role = role_from_string(j.at("role").get<std::string>());
    e.provider = j.value("provider", std::string{});
    e.model = j.value("model", std::string{});
    e.prompt = j.at("prompt").get<std::string>();
    e.prompt_hash = j.at("prompt_hash").get<std::string>();
    e.reply = j.value("reply", std::string{});
    e.refused = j.value("refused", false);
    e.latency_ms = j.value("latency_ms", 0.0);
    if (j.contains("error") && !j.at("error").is_null()) e.error = j.at("error").get<std::string>();
    e.raw = j.value("raw", json());
    return e;
}

ReplayProvider::ReplayProvider(const std::vector<Exchange>& exchanges) {
    for (const auto& e : exchanges) {
        if (e.error) continue;
        by_key_[{e.role, e.prompt_hash}].push_back(e);
    }
}

ProviderResponse ReplayProvider::send(const ProviderRequest& request) {
    std::lock_guard lock(mu_);
    auto it = by_key_.find({request.role, sha256_hex(request.prompt)});
    if (it == by_key_.end() || it->second.empty())
        throw Error(Errc::protocol, "no recorded exchange for this prompt (replay miss)");
    Exchange e = std::move(it->second.front());
    it->second.pop_front();
    return {e.reply, json{{"replayed_from", e.request_id}}};
}

std::string provider_key_env(std::string_view provider_id) {
    std::string name = "AUDIT_";
    for (char c : provider_id)
        name.push_back(std::isalnum(static_cast<unsigned char>(c))
                           ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                           : '_');
    return name + "_KEY";
}

namespace {

const std::vector<std::string>& builtin_refusals() {
    static const std::vector<std::string> kPatterns = {
        R"(\bI (?:can't|cannot|won't|am unable to|am not able to) (?:help|assist|provide|generate|create|share|comply))",
        R"(\b(?:sorry|apologi[sz]e)\b.*\b(?:can't|cannot|unable|not able)\b)",
        R"(\bI must (?:decline|refuse)\b)",
        R"(\bagainst (?:my|our) (?:guidelines|policy|policies)\b)",
    };
    return kPatterns;
}

std::vector<std::regex> compile_all(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    for (const auto& p : patterns) {
        try {
            out.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
        } catch (const std::regex_error& e) {
            throw Error(Errc::config, "bad refusal pattern '" + p + "': " + e.what());
        }
    }
    return out;
}

}  // namespace

bool has_fenced_code(std::string_view text) {
    auto open = text.find("```");
    if (open == std::string_view::npos) return false;
    return text.find("```", open + 3) != std::string_view::npos;
}

RefusalDetector::RefusalDetector() : patterns_(compile_all(builtin_refusals())) {}

RefusalDetector::RefusalDetector(const std::vector<std::string>& patterns, bool code_overrides)
    : patterns_(compile_all(patterns)), code_overrides_(code_overrides) {}

RefusalDetector RefusalDetector::from_file(const std::string& path, bool code_overrides) {
    return RefusalDetector(read_list_file(path), code_overrides);
}

bool RefusalDetector::detect(std::string_view text, bool code_requested) const {
    if (trim(text).empty()) return true;
    const bool code = has_fenced_code(text);
    if (code && code_overrides_) return false;
    const std::string s(text);
    for (const auto& re : patterns_)
        if (std::regex_search(s, re)) return true;
    return code_requested && !code;
}

RateLimiter::RateLimiter(double requests_per_minute)
    : capacity_(std::max(1.0, requests_per_minute / 60.0)),
      tokens_(capacity_),
      refill_per_sec_(requests_per_minute / 60.0),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (refill_per_sec_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + elapsed * refill_per_sec_);
        if (tokens_ >= 1.0) {
            tokens_ -= 1.0;
            return;
        }
        auto wait = std::chrono::duration<double>((1.0 - tokens_) / refill_per_sec_);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

LlmGateway::LlmGateway(std::map<RoleKind, LlmRole> roles,
                       std::map<std::string, std::shared_ptr<Provider>> providers,
                       RefusalDetector refusal, RetryPolicy retry, double requests_per_minute,
                       Recorder recorder)
    : roles_(std::move(roles)),
      providers_(std::move(providers)),
      refusal_(std::move(refusal)),
      retry_(retry),
      recorder_(std::move(recorder)) {
    for (const auto& [kind, role] : roles_) {
        if (!providers_.count(role.provider))
            throw Error(Errc::config, "role " + std::string(to_string(kind)) + " bound to unknown provider '" +
                                          role.provider + "'");
        if (!limiters_.count(role.provider))
            limiters_.emplace(role.provider, std::make_unique<RateLimiter>(requests_per_minute));
    }
}

const LlmRole& LlmGateway::role(RoleKind r) const {
    auto it = roles_.find(r);
    if (it == roles_.end()) throw Error(Errc::config, "role " + std::string(to_string(r)) + " not configured");
    return it->second;
}

LlmReply LlmGateway::complete(RoleKind kind, const std::string& prompt, bool code_requested) {
    const LlmRole& r = role(kind);
    if (prompt.empty()) throw Error(Errc::invalid_argument, "empty prompt");
    Provider& provider = *providers_.at(r.provider);

    Exchange ex;
    ex.role = kind;
    ex.provider = r.provider;
    ex.model = r.model;
    ex.prompt = prompt;
    ex.prompt_hash = sha256_hex(prompt);
    std::uint64_t occurrence = 0;
    {
        std::lock_guard lock(seen_mu_);
        occurrence = seen_[{kind, ex.prompt_hash}]++;
    }
    ex.request_id = content_id({to_string(kind), ex.prompt_hash, std::to_string(occurrence)});

    ProviderRequest request{kind, r.model, prompt, r.decoding};
    auto started = std::chrono::steady_clock::now();
    for (int attempt = 0;; ++attempt) {
        limiters_.at(r.provider)->acquire();
        try {
            ProviderResponse resp = provider.send(request);
            ex.reply = std::move(resp.text);
            ex.raw = std::move(resp.raw);
            break;
        } catch (const Error& e) {
            if (is_transient(e.code()) && attempt < retry_.max_retries) {
                std::this_thread::sleep_for(retry_.base_backoff * (1 << attempt));
                continue;
            }
            ex.error = e.what();
            ex.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
            if (recorder_) recorder_(ex);
            throw;
        }
    }
    ex.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    ex.refused = refusal_.detect(ex.reply, code_requested);
    if (recorder_) recorder_(ex);

    return LlmReply{ex.reply, ex.refused, ex.latency_ms, ex.raw, ex.request_id};
}

}  // namespace leakaudit
