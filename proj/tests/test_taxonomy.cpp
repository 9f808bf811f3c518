#include <gtest/gtest.h>

#include "leakaudit/taxonomy.hpp"

using namespace leakaudit;

namespace {

json default_doc() { return json::parse(read_file(default_data_dir() + "/taxonomy.json")); }

std::vector<std::string> ids_for(const TaxonomySet& t, const std::string& scenario) {
    std::vector<std::string> out;
    for (const auto* a : t.attributes_for_scenario(scenario)) out.push_back(a->id);
    return out;
}

Errc load_error(const json& doc) {
    try {
        load_taxonomy(doc);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "document loaded";
    return Errc::config;
}

}  // namespace

TEST(Taxonomy, BundledDocumentShape) {
    TaxonomySet t = load_default_taxonomy();
    EXPECT_EQ(t.attributes().size(), 15u);
    EXPECT_EQ(t.categories().size(), 3u);
    EXPECT_EQ(t.scenarios().size(), 6u);
    std::map<PrivacyCategory, int> per;
    for (const auto& a : t.attributes()) ++per[a.category];
    EXPECT_EQ(per[PrivacyCategory::Identifiable], 5);
    EXPECT_EQ(per[PrivacyCategory::Private], 4);
    EXPECT_EQ(per[PrivacyCategory::Secret], 6);
}

TEST(Taxonomy, ScenarioMembership) {
    TaxonomySet t = load_default_taxonomy();
    EXPECT_EQ(ids_for(t, "blockchain"), (std::vector<std::string>{"AuthenticationPIN", "SecretKey"}));
    EXPECT_EQ(ids_for(t, "game"), (std::vector<std::string>{"AccountUserName", "Password"}));
    EXPECT_TRUE(t.attribute("Name").in_scenario("mobile"));
    EXPECT_FALSE(t.attribute("Name").in_scenario("blockchain"));
}

TEST(Taxonomy, UnknownIds) {
    TaxonomySet t = load_default_taxonomy();
    try {
        t.scenario("desktop");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::unknown_scenario);
    }
    EXPECT_THROW(t.attribute("Shoe Size"), Error);
    EXPECT_EQ(t.find_attribute("Shoe Size"), nullptr);
}

TEST(Taxonomy, DuplicateAttributeRejected) {
    json doc = default_doc();
    doc["attributes"].push_back(doc["attributes"][0]);
    EXPECT_EQ(load_error(doc), Errc::duplicate_id);
}

TEST(Taxonomy, MissingPatternsRejected) {
    json doc = default_doc();
    for (auto& a : doc["attributes"])
        if (a["id"] == "Email") a.erase("patterns");
    EXPECT_EQ(load_error(doc), Errc::malformed);
}

TEST(Taxonomy, UnknownScenarioReferenceRejected) {
    json doc = default_doc();
    doc["attributes"][0]["scenarios"].push_back("desktop");
    EXPECT_EQ(load_error(doc), Errc::unknown_reference);
}

TEST(Taxonomy, BadRegexAndValidatorRejected) {
    json doc = default_doc();
    doc["attributes"][0]["patterns"][0]["regex"] = "([";
    EXPECT_EQ(load_error(doc), Errc::malformed);
    doc = default_doc();
    doc["attributes"][0]["patterns"][0]["validator"] = "astrology";
    EXPECT_EQ(load_error(doc), Errc::malformed);
}

TEST(Taxonomy, UnknownCategoryRejected) {
    json doc = default_doc();
    doc["attributes"][0]["category"] = "Spicy";
    EXPECT_EQ(load_error(doc), Errc::malformed);
}

TEST(Taxonomy, CuesIncludeKeywords) {
    TaxonomySet t = load_default_taxonomy();
    auto cues = t.attribute("Password").all_cues();
    EXPECT_NE(std::find(cues.begin(), cues.end(), "password"), cues.end());
    EXPECT_NE(std::find(cues.begin(), cues.end(), "credential"), cues.end());
}

TEST(Taxonomy, Luhn) {
    EXPECT_TRUE(luhn_valid("4539 1488 0343 6467"));
    EXPECT_TRUE(luhn_valid("4111-1111-1111-1111"));
    EXPECT_FALSE(luhn_valid("4111-1111-1111-1112"));
    EXPECT_FALSE(luhn_valid("79927398713"));
    EXPECT_FALSE(luhn_valid("4111 1111 x111 1111"));
}

TEST(Taxonomy, CategoryNames) {
    EXPECT_EQ(category_from_string("Secret"), PrivacyCategory::Secret);
    EXPECT_EQ(to_string(PrivacyCategory::Private), "Private");
}
