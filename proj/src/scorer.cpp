#include "leakaudit/scorer.hpp"

#include <cctype>
#include <cmath>

namespace leakaudit {

void TokenScoreSeq::validate() const {
    if (tokens.size() != nll.size())
        throw Error(Errc::protocol, std::to_string(nll.size()) + " scores for " + std::to_string(tokens.size()) + " tokens");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (!std::isfinite(nll[i]) || nll[i] < 0) throw Error(Errc::protocol, "score " + std::to_string(i) + " out of range");
        if (t.start < pos || t.end < t.start || t.end > text.size())
            throw Error(Errc::protocol, "token " + std::to_string(i) + " span out of order");
        for (std::size_t k = pos; k < t.start; ++k)
            if (!std::isspace(static_cast<unsigned char>(text[k])))
                throw Error(Errc::protocol, "non-whitespace gap before token " + std::to_string(i));
        pos = t.end;
    }
}

json TokenScoreSeq::to_json() const {
    json toks = json::array();
    for (const auto& t : tokens) toks.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
    return {{"instance_id", instance_id}, {"text", text}, {"tokens", toks}, {"nll", nll}, {"scorer_id", scorer_id}};
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double unit_of(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

std::size_t cp_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

bool ident_char(unsigned char c) { return std::isalnum(c) || c == '_'; }

}  // namespace

std::vector<ScoredToken> StubScorer::tokenize(std::string_view text, std::vector<bool>* literal) {
    std::vector<ScoredToken> out;
    if (literal) literal->clear();
    char quote = 0;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const std::size_t start = i;
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == n) {
            if (out.empty()) {
                out.push_back({std::string(text.substr(start)), start, n});
                if (literal) literal->push_back(false);
            } else {
                out.back().text.append(text.substr(start));
                out.back().end = n;
            }
            break;
        }
        const unsigned char c = static_cast<unsigned char>(text[i]);
        bool lit = false;
        if (quote) {
            lit = true;
            if (c == static_cast<unsigned char>(quote)) {
                quote = 0;
                ++i;
            } else if (c == '\\') {
                ++i;
                if (i < n) i += cp_len(static_cast<unsigned char>(text[i]));
            } else if (ident_char(c)) {
                while (i < n && ident_char(static_cast<unsigned char>(text[i]))) ++i;
            } else {
                i += cp_len(c);
            }
        } else if (c == '\'' || c == '"' || c == '`') {
            quote = static_cast<char>(c);
            lit = true;
            ++i;
        } else if (ident_char(c)) {
            lit = std::isdigit(c) != 0;
            while (i < n && ident_char(static_cast<unsigned char>(text[i]))) ++i;
        } else {
            i += cp_len(c);
        }
        i = std::min(i, n);
        out.push_back({std::string(text.substr(start, i - start)), start, i});
        if (literal) literal->push_back(lit);
    }
    return out;
}

TokenScoreSeq StubScorer::score_sequence(const std::string& text) {
    if (text.size() > kMaxLen) throw Error(Errc::invalid_argument, "text exceeds " + std::to_string(kMaxLen) + " bytes");
    TokenScoreSeq seq;
    seq.text = text;
    seq.scorer_id = scorer_id();
    std::vector<bool> literal;
    seq.tokens = tokenize(text, &literal);
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        std::uint64_t state = fnv1a(trim(seq.tokens[i].text)) ^ (static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ULL);
        const double u = unit_of(splitmix(state));
        seq.nll.push_back(literal[i] ? 5.0 + 5.0 * u : 0.5 + 2.0 * u);
    }
    return seq;
}

std::vector<double> StubScorer::embed(const std::string& text) {
    if (text.size() > kMaxLen) throw Error(Errc::invalid_argument, "text exceeds " + std::to_string(kMaxLen) + " bytes");
    std::vector<double> v(kDim, 0.0);
    if (text.empty()) return v;
    const std::string lower = to_lower(text);
    auto add_gram = [&](std::string_view g) {
        std::uint64_t state = fnv1a(g);
        for (auto& x : v) x += 2.0 * unit_of(splitmix(state)) - 1.0;
    };
    if (lower.size() < 3) {
        add_gram(lower);
    } else {
        for (std::size_t i = 0; i + 3 <= lower.size(); ++i) add_gram(std::string_view(lower).substr(i, 3));
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (auto& x : v) x /= norm;
    return v;
}

CachingScorer::CachingScorer(std::shared_ptr<Scorer> inner) : inner_(std::move(inner)) {}

std::vector<double> CachingScorer::embed(const std::string& text) {
    {
        std::lock_guard lock(mu_);
        if (auto it = cache_.find(text); it != cache_.end()) return it->second;
    }
    auto v = inner_->embed(text);
    std::lock_guard lock(mu_);
    cache_.emplace(text, v);
    return v;
}

TokenScoreSeq score_tokens(Scorer& scorer, const std::string& text, const std::string& instance_id) {
    TokenScoreSeq seq;
    if (!text.empty()) seq = scorer.score_sequence(text);
    seq.text = text;
    seq.instance_id = instance_id;
    seq.validate();
    return seq;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw Error(Errc::dimension_mismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace leakaudit
