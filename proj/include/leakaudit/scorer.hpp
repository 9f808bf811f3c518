#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/common.hpp"

namespace leakaudit {

struct ScoredToken {
    std::string text;
    std::size_t start = 0;  // byte offsets into the scored text
    std::size_t end = 0;
};

struct TokenScoreSeq {
    std::string instance_id;
    std::string text;
    std::vector<ScoredToken> tokens;
    std::vector<double> nll;
    std::string scorer_id;

    // Throws Errc::protocol unless |tokens| = |nll|, every score is finite and
    // non-negative, spans are ordered, in range and separated only by whitespace.
    void validate() const;
    json to_json() const;
};

// Masked-LM backend: pseudo-NLL per token and a pooled embedding.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::string scorer_id() = 0;
    virtual std::size_t dim() = 0;
    virtual TokenScoreSeq score_sequence(const std::string& text) = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

// Deterministic stand-in for the model. Tokens carry their leading whitespace;
// identifier runs and single punctuation characters are separate tokens, also
// inside string literals. Structural tokens score in [0.5, 2.5], string and
// numeric literal tokens in [5, 10]. Embeddings sum keyed pseudo-random vectors
// of the lowercased character trigrams, so similar strings embed nearby.
class StubScorer : public Scorer {
public:
    static constexpr std::size_t kDim = 256;
    static constexpr std::size_t kMaxLen = 100000;

    std::string scorer_id() override { return "stub-v1"; }
    std::size_t dim() override { return kDim; }
    TokenScoreSeq score_sequence(const std::string& text) override;
    std::vector<double> embed(const std::string& text) override;

    static std::vector<ScoredToken> tokenize(std::string_view text, std::vector<bool>* literal = nullptr);
};

// Client for the scorer service wire protocol (POST /score_sequence, POST /embed,
// GET /info). Token offsets on the wire are code-point offsets.
class HttpScorerClient : public Scorer {
public:
    explicit HttpScorerClient(std::string endpoint, int timeout_seconds = 60);
    std::string scorer_id() override;
    std::size_t dim() override;
    TokenScoreSeq score_sequence(const std::string& text) override;
    std::vector<double> embed(const std::string& text) override;

    json info();

private:
    std::string endpoint_;
    int timeout_seconds_;
    std::mutex mu_;
    std::optional<json> info_;
};

// Memoizes embeddings by text.
class CachingScorer : public Scorer {
public:
    explicit CachingScorer(std::shared_ptr<Scorer> inner);
    std::string scorer_id() override { return inner_->scorer_id(); }
    std::size_t dim() override { return inner_->dim(); }
    TokenScoreSeq score_sequence(const std::string& text) override { return inner_->score_sequence(text); }
    std::vector<double> embed(const std::string& text) override;

private:
    std::shared_ptr<Scorer> inner_;
    std::mutex mu_;
    std::map<std::string, std::vector<double>> cache_;
};

// Empty text yields an empty sequence without a backend call.
TokenScoreSeq score_tokens(Scorer& scorer, const std::string& text, const std::string& instance_id = {});

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace leakaudit
