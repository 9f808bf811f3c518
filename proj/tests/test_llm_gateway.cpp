#include <gtest/gtest.h>

#include <cstdlib>

#include "leakaudit/llm_gateway.hpp"
#include "leakaudit/taxonomy.hpp"

using namespace leakaudit;

namespace {

std::map<RoleKind, LlmRole> roles_on(const std::string& provider) {
    std::map<RoleKind, LlmRole> roles;
    for (RoleKind r : {RoleKind::QuestionGen, RoleKind::Test, RoleKind::Judge}) roles[r] = LlmRole{r, provider, "m", {}};
    return roles;
}

RefusalDetector bundled_refusals() { return RefusalDetector::from_file(default_data_dir() + "/refusal_phrases.txt"); }

class FlakyProvider : public Provider {
public:
    explicit FlakyProvider(int failures, Errc code) : failures_(failures), code_(code) {}
    ProviderResponse send(const ProviderRequest&) override {
        ++calls;
        if (failures_-- > 0) throw Error(code_, "flaky");
        return {"fine", json::object()};
    }
    int calls = 0;

private:
    int failures_;
    Errc code_;
};

}  // namespace

TEST(MockProvider, FirstMatchingRuleWins) {
    auto mock = MockProvider::from_json(json::parse(R"({
        "rules": [
            {"role": "Judge", "contains": "value", "reply": "ACCEPT judge"},
            {"role": "Test", "contains": ["Write", "function"], "reply": "```python\ndef f():\n    return 1\n```"},
            {"contains": "Write", "reply": "second"}
        ],
        "default_reply": "fallback"})"));
    EXPECT_EQ(mock->send({RoleKind::Test, "m", "Write a function", {}}).text.substr(0, 3), "```");
    EXPECT_EQ(mock->send({RoleKind::QuestionGen, "m", "Write a function", {}}).text, "second");
    EXPECT_EQ(mock->send({RoleKind::Judge, "m", "the value", {}}).text, "ACCEPT judge");
    EXPECT_EQ(mock->send({RoleKind::Judge, "m", "nothing", {}}).text, "fallback");
    EXPECT_EQ(mock->calls(), 4u);
}

TEST(MockProvider, ScriptedFailure) {
    auto mock = MockProvider::from_json(json::parse(R"({"rules": [{"contains": "x", "fail": "auth"}]})"));
    try {
        mock->send({RoleKind::Judge, "m", "x", {}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth);
    }
}

TEST(Gateway, CodeQuestionReturnsFixtureReply) {
    auto mock = std::make_shared<MockProvider>(
        std::vector<MockProvider::Rule>{{RoleKind::Test, {"validate_email"}, "```python\ndef validate_email(a):\n    return '@' in a\n```", {}}});
    std::vector<Exchange> recorded;
    LlmGateway gw(roles_on("mock"), {{"mock", mock}}, bundled_refusals(), {}, 0.0,
                  [&](const Exchange& e) { recorded.push_back(e); });
    LlmReply r = gw.complete(RoleKind::Test, "Write validate_email(addr).", true);
    EXPECT_FALSE(r.refused);
    EXPECT_NE(r.text.find("def validate_email"), std::string::npos);
    ASSERT_EQ(recorded.size(), 1u);
    EXPECT_EQ(recorded[0].prompt_hash, sha256_hex("Write validate_email(addr)."));
    EXPECT_EQ(recorded[0].request_id, r.request_id);
}

TEST(Gateway, RefusalReplyFlagged) {
    auto mock = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "I can't help with personal data.");
    LlmGateway gw(roles_on("mock"), {{"mock", mock}}, bundled_refusals());
    EXPECT_TRUE(gw.complete(RoleKind::Test, "prompt").refused);
}

TEST(Gateway, RequestIdsAreDeterministicPerPrompt) {
    auto mock = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, "ok");
    LlmGateway a(roles_on("mock"), {{"mock", mock}});
    LlmGateway b(roles_on("mock"), {{"mock", mock}});
    a.complete(RoleKind::Judge, "other");
    const auto first = a.complete(RoleKind::Judge, "p").request_id;
    EXPECT_EQ(first, b.complete(RoleKind::Judge, "p").request_id);
    EXPECT_NE(first, a.complete(RoleKind::Judge, "p").request_id);
}

TEST(Gateway, TransientErrorsRetried) {
    auto flaky = std::make_shared<FlakyProvider>(2, Errc::unreachable);
    LlmGateway gw(roles_on("p"), {{"p", flaky}}, RefusalDetector(), RetryPolicy{3, std::chrono::milliseconds(1)});
    EXPECT_EQ(gw.complete(RoleKind::Judge, "x").text, "fine");
    EXPECT_EQ(flaky->calls, 3);
}

TEST(Gateway, RetriesAreBounded) {
    auto flaky = std::make_shared<FlakyProvider>(10, Errc::rate_limited);
    LlmGateway gw(roles_on("p"), {{"p", flaky}}, RefusalDetector(), RetryPolicy{2, std::chrono::milliseconds(1)});
    EXPECT_THROW(gw.complete(RoleKind::Judge, "x"), Error);
    EXPECT_EQ(flaky->calls, 3);
}

TEST(Gateway, AuthFailureNotRetried) {
    auto flaky = std::make_shared<FlakyProvider>(1, Errc::auth);
    LlmGateway gw(roles_on("p"), {{"p", flaky}}, RefusalDetector(), RetryPolicy{3, std::chrono::milliseconds(1)});
    try {
        gw.complete(RoleKind::Judge, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth);
    }
    EXPECT_EQ(flaky->calls, 1);
}

TEST(Gateway, HttpProviderWithoutKeyIsAuthFailure) {
    ::unsetenv("AUDIT_NOKEYPROVIDER_KEY");
    auto http = std::make_shared<HttpProvider>("nokeyprovider", "http://127.0.0.1:9", 1);
    LlmGateway gw(roles_on("nokeyprovider"), {{"nokeyprovider", http}});
    try {
        gw.complete(RoleKind::Judge, "x");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::auth);
    }
    EXPECT_EQ(provider_key_env("open-ai"), "AUDIT_OPEN_AI_KEY");
}

TEST(Gateway, UnknownProviderBindingIsConfigError) {
    EXPECT_THROW(LlmGateway(roles_on("ghost"), {}), Error);
}

TEST(Gateway, EmptyPromptRejected) {
    auto mock = std::make_shared<MockProvider>();
    LlmGateway gw(roles_on("mock"), {{"mock", mock}});
    EXPECT_THROW(gw.complete(RoleKind::Test, ""), Error);
}

TEST(Replay, ServesRecordedRepliesInOrder) {
    Exchange a, b;
    a.role = b.role = RoleKind::Judge;
    a.prompt = b.prompt = "p";
    a.prompt_hash = b.prompt_hash = sha256_hex("p");
    a.reply = "first";
    b.reply = "second";
    a.request_id = "1";
    b.request_id = "2";
    ReplayProvider replay({a, b});
    EXPECT_EQ(replay.send({RoleKind::Judge, "m", "p", {}}).text, "first");
    EXPECT_EQ(replay.send({RoleKind::Judge, "m", "p", {}}).text, "second");
    EXPECT_THROW(replay.send({RoleKind::Judge, "m", "p", {}}), Error);
    EXPECT_THROW(replay.send({RoleKind::Test, "m", "p", {}}), Error);
}

TEST(Exchange, JsonRoundTrip) {
    Exchange e;
    e.request_id = "r";
    e.role = RoleKind::QuestionGen;
    e.provider = "mock";
    e.model = "m";
    e.prompt = "p";
    e.prompt_hash = sha256_hex("p");
    e.reply = "x";
    e.error = "boom";
    Exchange back = Exchange::from_json(e.to_json());
    EXPECT_EQ(back.role, RoleKind::QuestionGen);
    EXPECT_EQ(back.error, e.error);
    EXPECT_EQ(back.reply, "x");
}

TEST(Refusal, PhraseList) {
    RefusalDetector d = bundled_refusals();
    EXPECT_TRUE(d.detect("Sorry, I cannot generate personal information."));
    EXPECT_FALSE(d.detect("```def f(x): return x```"));
    EXPECT_TRUE(d.detect(""));
    EXPECT_TRUE(d.detect("   \n"));
    EXPECT_FALSE(d.detect("Sure, here is the function."));
    EXPECT_TRUE(d.detect("Sure, here is the function.", true));
    EXPECT_FALSE(d.detect("I can't help with that, but here:\n```py\nx = 1\n```\n"));
}

TEST(Refusal, BuiltinListMatchesToo) {
    RefusalDetector d;
    EXPECT_TRUE(d.detect("I must decline this request."));
    EXPECT_FALSE(d.detect("Done."));
}

TEST(RateLimiter, DisabledIsImmediate) {
    RateLimiter r(0.0);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 1000; ++i) r.acquire();
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(1));
}

TEST(RateLimiter, BurstThenWait) {
    RateLimiter r(600.0);  // 10 per second, burst of 10
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 12; ++i) r.acquire();
    EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(150));
}
