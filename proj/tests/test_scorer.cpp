#include <gtest/gtest.h>

#include <thread>

#include <httplib.h>

#include "leakaudit/scorer.hpp"

using namespace leakaudit;

namespace {

std::vector<std::string> texts(const TokenScoreSeq& s) {
    std::vector<std::string> out;
    for (const auto& t : s.tokens) out.push_back(t.text);
    return out;
}

// Local stand-in for the scorer service. Offsets are code points.
class ScorerStub {
public:
    explicit ScorerStub(std::size_t dim = 4, std::size_t info_dim = 4) {
        server_.Get("/info", [info_dim](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"scorer_id", "stub-http"}, {"dim", info_dim}}.dump(), "application/json");
        });
        server_.Post("/score_sequence", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string text = json::parse(req.body).at("text").get<std::string>();
            if (text.size() > 1000) {
                res.status = 413;
                return;
            }
            // "é a": tokens "é" [0,1) and " a" [1,3) in code points
            json body{{"scorer_id", "stub-http"},
                      {"tokens", {{{"text", "é"}, {"start", 0}, {"end", 1}}, {{"text", " a"}, {"start", 1}, {"end", 3}}}},
                      {"nll", bad_scores ? json{1.0} : json{1.0, 7.5}}};
            res.set_content(body.dump(), "application/json");
        });
        server_.Post("/embed", [dim](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"vector", std::vector<double>(dim, 0.5)}, {"dim", dim}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~ScorerStub() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    bool bad_scores = false;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return Errc::config;
}

}  // namespace

TEST(StubTokenize, IdentifiersAndPunctuation) {
    StubScorer s;
    auto seq = s.score_sequence("email: a@b.co");
    EXPECT_EQ(texts(seq), (std::vector<std::string>{"email", ":", " a", "@", "b", ".", "co"}));
    auto assign = s.score_sequence("a = 1");
    EXPECT_EQ(texts(assign), (std::vector<std::string>{"a", " =", " 1"}));
}

TEST(StubTokenize, SpansReconstructText) {
    StubScorer s;
    for (const std::string text : {"user.email = 'li.ming@qq.com'", "  x\n\ty ", "\"unterminated", "é → ü"}) {
        auto seq = s.score_sequence(text);
        std::string joined;
        for (const auto& t : seq.tokens) {
            EXPECT_EQ(text.substr(t.start, t.end - t.start), t.text);
            joined += t.text;
        }
        EXPECT_EQ(joined, text);
        EXPECT_NO_THROW(seq.validate());
    }
}

TEST(StubScores, LiteralsScoreHigh) {
    StubScorer s;
    std::vector<bool> literal;
    auto toks = StubScorer::tokenize("x = \"a@b.co\"", &literal);
    auto seq = s.score_sequence("x = \"a@b.co\"");
    ASSERT_EQ(toks.size(), seq.nll.size());
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (literal[i]) {
            EXPECT_GE(seq.nll[i], 5.0);
            EXPECT_LE(seq.nll[i], 10.0);
        } else {
            EXPECT_GE(seq.nll[i], 0.5);
            EXPECT_LE(seq.nll[i], 2.5);
        }
    }
    EXPECT_FALSE(literal[0]);
    EXPECT_TRUE(literal[4]);
}

TEST(StubScores, Deterministic) {
    StubScorer a, b;
    EXPECT_EQ(a.score_sequence("phone = '+86 138 1108 5305'").nll, b.score_sequence("phone = '+86 138 1108 5305'").nll);
}

TEST(ScoreTokens, EmptyTextNoBackendCall) {
    HttpScorerClient client("http://127.0.0.1:9", 1);
    auto seq = score_tokens(client, "", "i1");
    EXPECT_TRUE(seq.tokens.empty());
    EXPECT_TRUE(seq.nll.empty());
    EXPECT_EQ(seq.instance_id, "i1");
}

TEST(ScoreTokens, OversizeRejected) {
    StubScorer s;
    EXPECT_EQ(code_of([&] { score_tokens(s, std::string(1000000, 'a')); }), Errc::invalid_argument);
}

TEST(Embed, DeterministicAndSimilarityOrdered) {
    StubScorer s;
    EXPECT_EQ(s.embed("email: a@b.co"), s.embed("email: a@b.co"));
    EXPECT_EQ(s.embed("x").size(), StubScorer::kDim);
    const auto a = s.embed("user.email = ⟨EMAIL⟩");
    const auto b = s.embed("USER.EMAIL = ⟨EMAIL⟩");
    const auto c = s.embed("+86 138 4411 5022");
    EXPECT_NEAR(cosine_similarity(a, b), 1.0, 1e-9);
    EXPECT_GT(cosine_similarity(s.embed("email: ⟨EMAIL⟩"), s.embed("EMAIL = ⟨EMAIL⟩")),
              cosine_similarity(s.embed("email: ⟨EMAIL⟩"), c));
    EXPECT_EQ(code_of([&] { cosine_similarity({1, 0}, {1, 0, 0}); }), Errc::dimension_mismatch);
}

TEST(Validate, ProtocolErrors) {
    TokenScoreSeq s;
    s.text = "ab cd";
    s.tokens = {{"ab", 0, 2}, {" cd", 2, 5}};
    s.nll = {1.0, 2.0};
    EXPECT_NO_THROW(s.validate());
    auto bad = s;
    bad.nll = {1.0};
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
    bad = s;
    bad.nll[1] = -1;
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
    bad = s;
    bad.nll[0] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
    bad = s;
    bad.tokens = {{"cd", 3, 5}, {"ab", 0, 2}};
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
    bad = s;
    bad.tokens = {{"a", 0, 1}, {"cd", 3, 5}};
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
    bad = s;
    bad.tokens[1].end = 9;
    EXPECT_EQ(code_of([&] { bad.validate(); }), Errc::protocol);
}

TEST(HttpScorer, CodePointOffsetsBecomeBytes) {
    ScorerStub stub;
    HttpScorerClient client(stub.url());
    EXPECT_EQ(client.scorer_id(), "stub-http");
    EXPECT_EQ(client.dim(), 4u);
    auto seq = client.score_sequence("é a");
    ASSERT_EQ(seq.tokens.size(), 2u);
    EXPECT_EQ(seq.tokens[0].start, 0u);
    EXPECT_EQ(seq.tokens[0].end, 2u);
    EXPECT_EQ(seq.tokens[1].start, 2u);
    EXPECT_EQ(seq.tokens[1].end, 4u);
    EXPECT_EQ(seq.nll, (std::vector<double>{1.0, 7.5}));
    EXPECT_EQ(client.embed("x").size(), 4u);
}

TEST(HttpScorer, MismatchedScoresRejected) {
    ScorerStub stub;
    stub.bad_scores = true;
    HttpScorerClient client(stub.url());
    EXPECT_EQ(code_of([&] { client.score_sequence("é a"); }), Errc::protocol);
}

TEST(HttpScorer, DimensionDisagreementRejected) {
    ScorerStub stub(3, 4);
    HttpScorerClient client(stub.url());
    EXPECT_EQ(code_of([&] { client.embed("x"); }), Errc::protocol);
}

TEST(HttpScorer, OversizeAndUnreachable) {
    ScorerStub stub;
    HttpScorerClient client(stub.url());
    EXPECT_EQ(code_of([&] { client.score_sequence(std::string(2000, 'a')); }), Errc::invalid_argument);
    HttpScorerClient down("http://127.0.0.1:9", 1);
    EXPECT_EQ(code_of([&] { down.score_sequence("a"); }), Errc::unreachable);
}

TEST(CachingScorer, MemoizesEmbeddings) {
    auto inner = std::make_shared<StubScorer>();
    CachingScorer c(inner);
    EXPECT_EQ(c.embed("abc"), inner->embed("abc"));
    EXPECT_EQ(c.embed("abc"), c.embed("abc"));
    EXPECT_EQ(c.scorer_id(), "stub-v1");
}
