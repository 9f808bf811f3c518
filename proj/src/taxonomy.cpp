#include "leakaudit/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

#ifndef LEAKAUDIT_DATA_DIR
#define LEAKAUDIT_DATA_DIR "data"
#endif

namespace leakaudit {

std::string_view to_string(PrivacyCategory c) {
    switch (c) {
        case PrivacyCategory::Identifiable: return "Identifiable";
        case PrivacyCategory::Private: return "Private";
        case PrivacyCategory::Secret: return "Secret";
    }
    return "Identifiable";
}

PrivacyCategory category_from_string(std::string_view s) {
    if (s == "Identifiable") return PrivacyCategory::Identifiable;
    if (s == "Private") return PrivacyCategory::Private;
    if (s == "Secret") return PrivacyCategory::Secret;
    throw Error(Errc::malformed, "unknown category '" + std::string(s) + "'");
}

bool AttributeSpec::in_scenario(std::string_view scenario_id) const {
    return std::binary_search(scenarios.begin(), scenarios.end(), scenario_id);
}

std::vector<std::string> AttributeSpec::all_cues() const {
    std::set<std::string> cues(keywords.begin(), keywords.end());
    for (const auto& p : patterns) cues.insert(p.cues.begin(), p.cues.end());
    return {cues.begin(), cues.end()};
}

TaxonomySet::TaxonomySet(std::vector<Scenario> scenarios, std::vector<AttributeSpec> attributes)
    : scenarios_(std::move(scenarios)), attributes_(std::move(attributes)) {
    std::sort(attributes_.begin(), attributes_.end(),
              [](const auto& a, const auto& b) { return a.id < b.id; });
}

const AttributeSpec* TaxonomySet::find_attribute(std::string_view id) const {
    auto it = std::lower_bound(attributes_.begin(), attributes_.end(), id,
                               [](const AttributeSpec& a, std::string_view v) { return a.id < v; });
    return (it != attributes_.end() && it->id == id) ? &*it : nullptr;
}

const AttributeSpec& TaxonomySet::attribute(std::string_view id) const {
    if (const auto* a = find_attribute(id)) return *a;
    throw Error(Errc::not_found, "unknown attribute '" + std::string(id) + "'");
}

const Scenario* TaxonomySet::find_scenario(std::string_view id) const {
    for (const auto& s : scenarios_)
        if (s.id == id) return &s;
    return nullptr;
}

const Scenario& TaxonomySet::scenario(std::string_view id) const {
    if (const auto* s = find_scenario(id)) return *s;
    throw Error(Errc::unknown_scenario, "unknown scenario '" + std::string(id) + "'");
}

std::vector<const AttributeSpec*> TaxonomySet::attributes_for_scenario(std::string_view scenario_id) const {
    scenario(scenario_id);
    std::vector<const AttributeSpec*> out;
    for (const auto& a : attributes_)
        if (a.in_scenario(scenario_id)) out.push_back(&a);
    return out;
}

std::vector<PrivacyCategory> TaxonomySet::categories() const {
    return {PrivacyCategory::Identifiable, PrivacyCategory::Private, PrivacyCategory::Secret};
}

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error(Errc::malformed, where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::malformed, where + ": field '" + key + "': " + e.what());
    }
}

MaskPolicy parse_mask_policy(const json& j, const std::string& where) {
    MaskPolicy p;
    if (j.is_null()) return p;
    auto kind = required<std::string>(j, "kind", where + ".mask_policy");
    if (kind == "email") p.kind = MaskKind::Email;
    else if (kind == "digits") p.kind = MaskKind::Digits;
    else if (kind == "ends") p.kind = MaskKind::Ends;
    else throw Error(Errc::malformed, where + ": unknown mask kind '" + kind + "'");
    p.keep_prefix = j.value("keep_prefix", p.keep_prefix);
    p.keep_suffix = j.value("keep_suffix", p.keep_suffix);
    p.mask_count = j.value("mask_count", p.mask_count);
    p.keep_separators = j.value("keep_separators", p.keep_separators);
    p.separators = j.value("separators", p.separators);
    return p;
}

PatternRule parse_pattern(const json& j, const std::string& where) {
    PatternRule r;
    r.regex = required<std::string>(j, "regex", where);
    r.cues = j.value("cues", std::vector<std::string>{});
    r.min_len = j.value("min_len", r.min_len);
    r.max_len = j.value("max_len", r.max_len);
    r.validator = j.value("validator", std::string{});
    r.search = j.value("search", false);
    r.icase = j.value("icase", false);
    if (r.min_len > r.max_len) throw Error(Errc::malformed, where + ": min_len > max_len");
    if (!r.validator.empty() && r.validator != "luhn" && r.validator != "entropy" &&
        r.validator != "phone_digits")
        throw Error(Errc::malformed, where + ": unknown validator '" + r.validator + "'");
    auto flags = std::regex::ECMAScript | std::regex::optimize;
    if (r.icase) flags |= std::regex::icase;
    try {
        r.compiled = std::make_shared<const std::regex>(r.regex, flags);
    } catch (const std::regex_error& e) {
        throw Error(Errc::malformed, where + ": bad regex: " + e.what());
    }
    return r;
}

}  // namespace

TaxonomySet load_taxonomy(const json& doc) {
    if (!doc.is_object()) throw Error(Errc::malformed, "taxonomy document must be an object");
    auto scen_json = required<json>(doc, "scenarios", "taxonomy");
    auto attr_json = required<json>(doc, "attributes", "taxonomy");
    if (!scen_json.is_array() || !attr_json.is_array())
        throw Error(Errc::malformed, "scenarios/attributes must be arrays");

    std::vector<Scenario> scenarios;
    std::set<std::string> scenario_ids;
    for (const auto& s : scen_json) {
        Scenario sc{required<std::string>(s, "id", "scenario"), required<std::string>(s, "name", "scenario"),
                    required<std::string>(s, "description", "scenario")};
        if (!scenario_ids.insert(sc.id).second)
            throw Error(Errc::duplicate_id, "duplicate scenario '" + sc.id + "'");
        scenarios.push_back(std::move(sc));
    }

    std::vector<AttributeSpec> attributes;
    std::set<std::string> attribute_ids, slots, referenced;
    for (const auto& a : attr_json) {
        AttributeSpec spec;
        spec.id = required<std::string>(a, "id", "attribute");
        const std::string where = "attribute " + spec.id;
        if (!attribute_ids.insert(spec.id).second)
            throw Error(Errc::duplicate_id, "duplicate attribute '" + spec.id + "'");
        spec.category = category_from_string(required<std::string>(a, "category", where));
        spec.scenarios = required<std::vector<std::string>>(a, "scenarios", where);
        if (spec.scenarios.empty()) throw Error(Errc::malformed, where + ": scenarios empty");
        for (const auto& s : spec.scenarios) {
            if (!scenario_ids.count(s))
                throw Error(Errc::unknown_reference, where + " references unknown scenario '" + s + "'");
            referenced.insert(s);
        }
        std::sort(spec.scenarios.begin(), spec.scenarios.end());
        spec.scenarios.erase(std::unique(spec.scenarios.begin(), spec.scenarios.end()), spec.scenarios.end());
        spec.description = required<std::string>(a, "description", where);
        auto patterns = required<json>(a, "patterns", where);
        if (!patterns.is_array() || patterns.empty())
            throw Error(Errc::malformed, where + ": patterns must be a nonempty array");
        for (const auto& p : patterns) spec.patterns.push_back(parse_pattern(p, where));
        spec.keywords = a.value("keywords", std::vector<std::string>{});
        spec.slot_symbol = required<std::string>(a, "slot_symbol", where);
        if (spec.slot_symbol.empty() || !slots.insert(spec.slot_symbol).second)
            throw Error(Errc::duplicate_id, where + ": slot symbol missing or not unique");
        spec.seed_exemplars = a.value("seed_exemplars", std::vector<std::string>{});
        spec.mask_policy = parse_mask_policy(a.value("mask_policy", json()), where);
        attributes.push_back(std::move(spec));
    }
    for (const auto& s : scenario_ids)
        if (!referenced.count(s))
            throw Error(Errc::malformed, "scenario '" + s + "' is not referenced by any attribute");
    return TaxonomySet(std::move(scenarios), std::move(attributes));
}

TaxonomySet load_taxonomy_file(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed, path + ": " + e.what());
    }
    return load_taxonomy(doc);
}

std::string default_data_dir() {
    if (const char* env = std::getenv("LEAKAUDIT_DATA_DIR")) return env;
    return LEAKAUDIT_DATA_DIR;
}

TaxonomySet load_default_taxonomy() { return load_taxonomy_file(default_data_dir() + "/taxonomy.json"); }

bool luhn_valid(std::string_view s) {
    int sum = 0;
    int count = 0;
    bool dbl = false;
    for (auto it = s.rbegin(); it != s.rend(); ++it) {
        char c = *it;
        if (c == ' ' || c == '-') continue;
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        int d = c - '0';
        if (dbl) {
            d *= 2;
            if (d > 9) d -= 9;
        }
        sum += d;
        dbl = !dbl;
        ++count;
    }
    return count >= 13 && count <= 19 && sum % 10 == 0;
}

}  // namespace leakaudit
