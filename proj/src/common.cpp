#include "leakaudit/common.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace leakaudit {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::malformed: return "malformed";
        case Errc::duplicate_id: return "duplicate-id";
        case Errc::unknown_reference: return "unknown-reference";
        case Errc::unknown_scenario: return "unknown-scenario";
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::parse: return "parse-error";
        case Errc::unreachable: return "unreachable";
        case Errc::auth: return "auth-failure";
        case Errc::quota: return "quota-exhausted";
        case Errc::rate_limited: return "rate-limited";
        case Errc::protocol: return "protocol-error";
        case Errc::illegal_transition: return "illegal-transition";
        case Errc::terminal_record: return "terminal-record";
        case Errc::duplicate_reviewer: return "duplicate-reviewer";
        case Errc::stale_version: return "stale-version";
        case Errc::not_found: return "not-found";
        case Errc::store_corrupt: return "store-corrupt";
        case Errc::store_locked: return "store-locked";
        case Errc::config: return "config-error";
        case Errc::dimension_mismatch: return "dimension-mismatch";
        case Errc::unknown_format: return "unknown-format";
    }
    return "unknown";
}

int exit_code_for(Errc code) {
    switch (code) {
        case Errc::config:
        case Errc::malformed:
        case Errc::duplicate_id:
        case Errc::unknown_reference:
        case Errc::unknown_scenario:
        case Errc::invalid_argument:
        case Errc::unknown_format:
            return 2;
        case Errc::unreachable:
        case Errc::auth:
        case Errc::quota:
        case Errc::rate_limited:
        case Errc::protocol:
            return 3;
        case Errc::store_corrupt:
        case Errc::store_locked:
            return 4;
        default:
            return 1;
    }
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (unsigned char b : digest) {
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xf]);
    }
    return out;
}

std::string content_id(std::initializer_list<std::string_view> parts) {
    std::string joined;
    bool first = true;
    for (auto p : parts) {
        if (!first) joined.push_back('\x1f');
        joined.append(p);
        first = false;
    }
    return sha256_hex(joined).substr(0, 16);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

std::string trim(std::string_view s) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(s.substr(start));
            break;
        }
        std::string_view line = s.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        start = nl + 1;
    }
    return lines;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (prefix.size() > s.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::vector<std::string> subword_tokens(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(to_lower(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (!std::isalnum(c)) {
            flush();
            continue;
        }
        if (std::isupper(c) && !cur.empty()) {
            unsigned char prev = static_cast<unsigned char>(cur.back());
            bool next_lower = i + 1 < text.size() &&
                              std::islower(static_cast<unsigned char>(text[i + 1]));
            // fooBar -> foo|Bar, HTTPServer -> HTTP|Server
            if (std::islower(prev) || std::isdigit(prev) || (std::isupper(prev) && next_lower)) flush();
        }
        cur.push_back(static_cast<char>(c));
    }
    flush();
    std::vector<std::string> out = words;
    for (std::size_t i = 0; i + 1 < words.size(); ++i) out.push_back(words[i] + words[i + 1]);
    return out;
}

bool matches_cue(const std::vector<std::string>& tokens, std::string_view cue) {
    std::string normalized;
    for (char c : cue)
        if (std::isalnum(static_cast<unsigned char>(c)))
            normalized.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (normalized.empty()) return false;
    std::string plural = normalized + "s";
    return std::any_of(tokens.begin(), tokens.end(),
                       [&](const std::string& t) { return t == normalized || t == plural; });
}

double shannon_entropy(std::string_view s) {
    if (s.empty()) return 0.0;
    std::map<char, std::size_t> counts;
    for (char c : s) ++counts[c];
    double h = 0.0;
    const double n = static_cast<double>(s.size());
    for (const auto& [c, k] : counts) {
        double p = static_cast<double>(k) / n;
        h -= p * std::log2(p);
    }
    return h;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::not_found, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::store_corrupt, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(Errc::store_corrupt, "short write " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::vector<std::string> read_list_file(const std::string& path) {
    std::vector<std::string> out;
    for (const auto& raw : split_lines(read_file(path))) {
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        out.push_back(line);
    }
    return out;
}

std::string now_iso8601() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::size_t utf8_byte_offset(std::string_view s, std::size_t codepoint_offset) {
    std::size_t cp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if ((c & 0xC0) != 0x80) {
            if (cp == codepoint_offset) return i;
            ++cp;
        }
    }
    if (cp == codepoint_offset) return s.size();
    throw Error(Errc::protocol, "code point offset out of range");
}

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

}  // namespace leakaudit
