#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace leakaudit {

using json = nlohmann::json;

enum class Errc {
    malformed,
    duplicate_id,
    unknown_reference,
    unknown_scenario,
    invalid_argument,
    parse,
    unreachable,
    auth,
    quota,
    rate_limited,
    protocol,
    illegal_transition,
    terminal_record,
    duplicate_reviewer,
    stale_version,
    not_found,
    store_corrupt,
    store_locked,
    config,
    dimension_mismatch,
    unknown_format,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

// CLI exit code for an error: 2 config, 3 external dependency, 4 store corruption.
int exit_code_for(Errc code);

std::string sha256_hex(std::string_view data);

// First 16 hex chars of sha256 over the parts joined with '\x1f'.
std::string content_id(std::initializer_list<std::string_view> parts);

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

// Identifier-ish subwords: splits on non-alphanumerics, snake_case and camelCase,
// lowercased. Adjacent pairs are also emitted joined ("user_name" -> user, name, username).
std::vector<std::string> subword_tokens(std::string_view text);

// True when any subword token equals the cue (or its plural) or, for multi-part
// cues such as "birth_date", when the normalized text contains the joined cue.
bool matches_cue(const std::vector<std::string>& tokens, std::string_view cue);

double shannon_entropy(std::string_view s);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);
// Non-empty, non-comment ('#') lines, trimmed.
std::vector<std::string> read_list_file(const std::string& path);

std::string now_iso8601();

// RFC 4180 quoting when the field holds a comma, quote or line break.
std::string csv_field(std::string_view s);

// Number of Unicode code points in a UTF-8 string, and conversion of a
// code-point offset to a byte offset.
std::size_t utf8_length(std::string_view s);
std::size_t utf8_byte_offset(std::string_view s, std::size_t codepoint_offset);

}  // namespace leakaudit
