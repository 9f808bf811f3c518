#include "leakaudit/pii_extract.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>
#include <set>

namespace leakaudit {

json PiiCandidate::to_json() const {
    return {{"id", id},
            {"value", value},
            {"attribute", attribute},
            {"test_case_id", test_case_id},
            {"function_id", function_id},
            {"question_id", question_id},
            {"span", {span.first, span.second}},
            {"record_group", record_group},
            {"dedup_key", dedup_key},
            {"context_line", context_line}};
}

PiiCandidate PiiCandidate::from_json(const json& j) {
    PiiCandidate c;
    c.id = j.at("id").get<std::string>();
    c.value = j.at("value").get<std::string>();
    c.attribute = j.at("attribute").get<std::string>();
    c.test_case_id = j.at("test_case_id").get<std::string>();
    c.function_id = j.value("function_id", std::string{});
    c.question_id = j.value("question_id", std::string{});
    c.span = {j.at("span").at(0).get<std::size_t>(), j.at("span").at(1).get<std::size_t>()};
    c.record_group = j.at("record_group").get<std::string>();
    c.dedup_key = j.at("dedup_key").get<std::string>();
    c.context_line = j.value("context_line", std::string{});
    return c;
}

json DuplicateCandidate::to_json() const {
    return {{"candidate_id", candidate_id}, {"kept_id", kept_id},           {"attribute", attribute},
            {"dedup_key", dedup_key},       {"test_case_id", test_case_id}, {"record_group", record_group}};
}

DuplicateCandidate DuplicateCandidate::from_json(const json& j) {
    return {j.at("candidate_id").get<std::string>(), j.at("kept_id").get<std::string>(),
            j.at("attribute").get<std::string>(),    j.at("dedup_key").get<std::string>(),
            j.value("test_case_id", std::string{}),  j.value("record_group", std::string{})};
}

std::string dedup_key_for(std::string_view value) {
    return sha256_hex(to_lower(collapse_whitespace(value))).substr(0, 32);
}

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

struct Open {
    char ch;
    std::size_t offset;
    std::string callee;
};

std::size_t line_number(std::string_view text, std::size_t pos) {
    return static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n')) + 1;
}

}  // namespace

std::vector<ScannedValue> scan_values(std::string_view text) {
    std::vector<ScannedValue> out;
    std::vector<Open> stack;
    const std::size_t n = text.size();
    // start of the current "item" (after the last delimiter) for context purposes
    std::size_t item_start = 0;

    auto group_of = [&](std::size_t pos) -> std::string {
        for (auto it = stack.rbegin(); it != stack.rend(); ++it)
            if (it->ch == '{' || it->ch == '(') return "@" + std::to_string(it->offset);
        return "line:" + std::to_string(line_number(text, pos));
    };
    auto callee_of = [&]() -> std::string {
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            if (it->ch == '[') continue;
            return it->ch == '(' ? it->callee : std::string{};
        }
        return {};
    };
    auto context_for = [&](std::size_t value_start) {
        std::string ctx(text.substr(item_start, value_start - std::min(item_start, value_start)));
        auto callee = callee_of();
        if (!callee.empty()) ctx = callee + " " + ctx;
        return ctx;
    };
    auto next_non_space = [&](std::size_t k) {
        while (k < n && (text[k] == ' ' || text[k] == '\t')) ++k;
        return k;
    };

    std::size_t i = 0;
    while (i < n) {
        char c = text[i];
        // comments
        if ((c == '#' && (i + 1 >= n || text[i + 1] == ' ' || text[i + 1] == '#' || text[i + 1] == '!')) ||
            (c == '/' && i + 1 < n && text[i + 1] == '/')) {
            auto e = text.find('\n', i);
            i = e == std::string_view::npos ? n : e;
            continue;
        }
        if (c == '/' && i + 1 < n && text[i + 1] == '*') {
            auto e = text.find("*/", i + 2);
            i = e == std::string_view::npos ? n : e + 2;
            continue;
        }
        if (c == '"' || c == '\'' || c == '`') {
            const bool triple = i + 2 < n && text[i + 1] == c && text[i + 2] == c;
            const std::size_t qlen = triple ? 3 : 1;
            const std::size_t content_start = i + qlen;
            std::size_t k = content_start;
            bool closed = false;
            while (k < n) {
                if (text[k] == '\\') {
                    k += 2;
                    continue;
                }
                if (triple ? text.substr(k, 3) == std::string(3, c) : text[k] == c) {
                    closed = true;
                    break;
                }
                if (!triple && c != '`' && text[k] == '\n') break;
                ++k;
            }
            if (!closed) {
                ++i;
                continue;
            }
            const std::size_t content_end = k;
            std::size_t after = next_non_space(k + qlen);
            const bool is_key = after < n && text[after] == ':' && !(after + 1 < n && text[after + 1] == ':');
            if (!is_key && content_end > content_start) {
                out.push_back({std::string(text.substr(content_start, content_end - content_start)),
                               {content_start, content_end},
                               context_for(i),
                               group_of(i)});
            }
            i = k + qlen;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) && (i == 0 || !ident_char(text[i - 1]))) {
            std::size_t k = i;
            while (k < n && (std::isdigit(static_cast<unsigned char>(text[k])) || text[k] == '_' ||
                             (text[k] == '.' && k + 1 < n && std::isdigit(static_cast<unsigned char>(text[k + 1])))))
                ++k;
            if (k < n && ident_char(text[k])) {  // 0x.., 12px, etc.
                while (k < n && ident_char(text[k])) ++k;
                i = k;
                continue;
            }
            out.push_back({std::string(text.substr(i, k - i)), {i, k}, context_for(i), group_of(i)});
            i = k;
            continue;
        }
        if (c == '(' || c == '{' || c == '[') {
            std::string callee;
            if (c == '(') {
                std::size_t e = i;
                while (e > 0 && (text[e - 1] == ' ' || text[e - 1] == '\t')) --e;
                std::size_t b = e;
                while (b > 0 && (ident_char(text[b - 1]) || text[b - 1] == '.')) --b;
                callee = std::string(text.substr(b, e - b));
            }
            stack.push_back({c, i, callee});
            item_start = i + 1;
            ++i;
            continue;
        }
        if (c == ')' || c == '}' || c == ']') {
            if (!stack.empty()) stack.pop_back();
            item_start = i + 1;
            ++i;
            continue;
        }
        if (c == ',' || c == ';' || c == '\n') {
            item_start = i + 1;
        }
        ++i;
    }

    // bare key/value lines: `email: li.ming@qq.com`, `pin = 672129`
    static const std::regex kBare(R"(^[ \t]*(?:[-*][ \t]+)?([A-Za-z_][\w .\-]{0,40}?)[ \t]*[:=][ \t]*([^"'`\[{(\s][^\n]*?)[ \t]*,?[ \t]*$)");
    static const std::regex kExpr(R"(^[A-Za-z_][\w.]*$|^(?:True|False|None|null|true|false|undefined|nil)$)");
    std::size_t line_begin = 0;
    std::size_t line_no = 1;
    while (line_begin <= n) {
        auto nl = text.find('\n', line_begin);
        std::size_t line_stop = nl == std::string_view::npos ? n : nl;
        std::string line(text.substr(line_begin, line_stop - line_begin));
        std::smatch m;
        if (line.find_first_of("\"'`") == std::string::npos && std::regex_match(line, m, kBare)) {
            std::string value = m[2].str();
            bool code_like = value.find_first_of("();{}[]") != std::string::npos || std::regex_match(value, kExpr);
            if (!code_like) {
                std::size_t vs = line_begin + static_cast<std::size_t>(m.position(2));
                std::size_t ve = vs + value.size();
                bool overlaps = std::any_of(out.begin(), out.end(), [&](const ScannedValue& v) {
                    return v.span.first < ve && vs < v.span.second;
                });
                if (!overlaps)
                    out.push_back({value, {vs, ve}, m[1].str() + " :", "line:" + std::to_string(line_no)});
            }
        }
        if (nl == std::string_view::npos) break;
        line_begin = nl + 1;
        ++line_no;
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.span < b.span; });
    return out;
}

PiiExtractor::PiiExtractor(const TaxonomySet& taxonomy, std::vector<std::string> placeholders, ExtractOptions options)
    : taxonomy_(taxonomy), options_(options) {
    for (auto& p : placeholders) placeholders_.push_back(to_lower(collapse_whitespace(p)));
}

bool PiiExtractor::is_placeholder(std::string_view value) const {
    const std::string v = to_lower(collapse_whitespace(value));
    for (const auto& p : placeholders_) {
        if (p.empty()) continue;
        if (p.front() == '@') {
            auto at = v.rfind('@');
            if (at == std::string::npos) continue;
            std::string domain = v.substr(at + 1);
            std::string want = p.substr(1);
            if (domain == want || (domain.size() > want.size() &&
                                   domain.compare(domain.size() - want.size(), want.size(), want) == 0 &&
                                   domain[domain.size() - want.size() - 1] == '.'))
                return true;
        } else if (v == p) {
            return true;
        }
    }
    return false;
}

bool PiiExtractor::validator_ok(const PatternRule& p, std::string_view value) const {
    if (p.validator.empty()) return true;
    if (p.validator == "luhn") return luhn_valid(value);
    if (p.validator == "entropy") return shannon_entropy(value) >= options_.entropy_floor;
    if (p.validator == "phone_digits") {
        auto d = std::count_if(value.begin(), value.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
        return d >= 7 && d <= 15;
    }
    return false;
}

bool PiiExtractor::matches(const AttributeSpec& a, std::string_view value, std::string_view context) const {
    const auto ctx_tokens = subword_tokens(context);
    const std::string v(value);
    for (const auto& p : a.patterns) {
        if (v.size() < p.min_len || v.size() > p.max_len) continue;
        if (p.requires_cue() &&
            std::none_of(p.cues.begin(), p.cues.end(), [&](const std::string& cue) { return matches_cue(ctx_tokens, cue); }))
            continue;
        if (!std::regex_match(v, *p.compiled)) continue;
        if (!validator_ok(p, v)) continue;
        return true;
    }
    return false;
}

std::vector<PiiCandidate> PiiExtractor::extract(const TestCase& t, const std::vector<std::string>& attribute_ids) const {
    std::vector<PiiCandidate> out;
    if (!t.accepted) return out;
    std::vector<const AttributeSpec*> attrs;
    for (const auto& id : attribute_ids)
        if (const auto* a = taxonomy_.find_attribute(id)) attrs.push_back(a);
    std::sort(attrs.begin(), attrs.end(), [](auto* x, auto* y) { return x->id < y->id; });
    attrs.erase(std::unique(attrs.begin(), attrs.end()), attrs.end());

    const std::string_view text(t.raw_text);
    auto enclosing_line = [&](std::size_t pos) {
        auto b = text.rfind('\n', pos == 0 ? 0 : pos - 1);
        b = (b == std::string_view::npos || pos == 0) ? 0 : b + 1;
        auto e = text.find('\n', pos);
        e = e == std::string_view::npos ? text.size() : e;
        return trim(text.substr(b, e - b));
    };
    auto emit = [&](const AttributeSpec& a, const ScannedValue& sv, std::size_t start, std::size_t end) {
        std::string value(text.substr(start, end - start));
        if (is_placeholder(value)) return;
        PiiCandidate c;
        c.value = std::move(value);
        c.attribute = a.id;
        c.test_case_id = t.id;
        c.function_id = t.function_id;
        c.question_id = t.question_id;
        c.span = {start, end};
        c.record_group = t.id + ":" + sv.group;
        c.dedup_key = dedup_key_for(c.value);
        c.context_line = enclosing_line(start);
        c.id = content_id({t.id, a.id, std::to_string(start), std::to_string(end)});
        out.push_back(std::move(c));
    };

    for (const auto& sv : scan_values(text)) {
        for (const auto* a : attrs) {
            bool whole = false;
            // whole-literal rules first; search rules then look inside longer literals
            const auto ctx_tokens = subword_tokens(sv.context);
            for (const auto& p : a->patterns) {
                if (p.search) continue;
                if (sv.text.size() < p.min_len || sv.text.size() > p.max_len) continue;
                if (p.requires_cue() && std::none_of(p.cues.begin(), p.cues.end(), [&](const std::string& cue) {
                        return matches_cue(ctx_tokens, cue);
                    }))
                    continue;
                if (std::regex_match(sv.text, *p.compiled) && validator_ok(p, sv.text)) {
                    whole = true;
                    break;
                }
            }
            if (whole) {
                emit(*a, sv, sv.span.first, sv.span.second);
                continue;
            }
            std::set<std::pair<std::size_t, std::size_t>> seen;
            for (const auto& p : a->patterns) {
                if (!p.search) continue;
                if (p.requires_cue() && std::none_of(p.cues.begin(), p.cues.end(), [&](const std::string& cue) {
                        return matches_cue(ctx_tokens, cue);
                    }))
                    continue;
                for (auto it = std::sregex_iterator(sv.text.begin(), sv.text.end(), *p.compiled);
                     it != std::sregex_iterator(); ++it) {
                    std::string m = it->str();
                    if (m.size() < p.min_len || m.size() > p.max_len || !validator_ok(p, m)) continue;
                    std::size_t s = sv.span.first + static_cast<std::size_t>(it->position(0));
                    if (seen.insert({s, s + m.size()}).second) emit(*a, sv, s, s + m.size());
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const PiiCandidate& x, const PiiCandidate& y) {
        return std::tie(x.span, x.attribute) < std::tie(y.span, y.attribute);
    });
    return out;
}

DedupResult dedup_candidates(const std::vector<PiiCandidate>& cands) {
    DedupResult r;
    std::map<std::pair<std::string, std::string>, std::string> first;
    for (const auto& c : cands) {
        auto [it, inserted] = first.emplace(std::make_pair(c.attribute, c.dedup_key), c.id);
        if (inserted) r.kept.push_back(c);
        else r.duplicates.push_back({c.id, it->second, c.attribute, c.dedup_key, c.test_case_id, c.record_group});
    }
    return r;
}

}  // namespace leakaudit
