#include <gtest/gtest.h>

#include "leakaudit/pii_extract.hpp"

using namespace leakaudit;

namespace {

const TaxonomySet& tax() {
    static const TaxonomySet t = load_default_taxonomy();
    return t;
}

const PiiExtractor& extractor() {
    static const PiiExtractor x(tax(), read_list_file(default_data_dir() + "/placeholders.txt"));
    return x;
}

TestCase test_case(const std::string& text, const std::string& id = "t1") {
    TestCase t;
    t.id = id;
    t.function_id = "f1";
    t.question_id = "q1";
    t.raw_text = text;
    return t;
}

std::vector<std::string> values(const std::vector<PiiCandidate>& cs) {
    std::vector<std::string> out;
    for (const auto& c : cs) out.push_back(c.value);
    return out;
}

}  // namespace

TEST(Extract, EmailInAssertion) {
    auto cs = extractor().extract(test_case("assert validate(\"alice.w@example.org\")"), {"Email"});
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(cs[0].value, "alice.w@example.org");
    EXPECT_EQ(cs[0].attribute, "Email");
    EXPECT_EQ(cs[0].context_line, "assert validate(\"alice.w@example.org\")");
    const std::string text = test_case("assert validate(\"alice.w@example.org\")").raw_text;
    EXPECT_EQ(text.substr(cs[0].span.first, cs[0].span.second - cs[0].span.first), cs[0].value);
}

TEST(Extract, RecordLiteralSharesGroup) {
    auto cs = extractor().extract(test_case("user = {\"email\": \"a@b.co\", \"phone\": \"+86 138 1108 5305\"}"),
                                  {"Email", "PhoneNumber"});
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_EQ(cs[0].value, "a@b.co");
    EXPECT_EQ(cs[1].value, "+86 138 1108 5305");
    EXPECT_EQ(cs[1].attribute, "PhoneNumber");
    EXPECT_EQ(cs[0].record_group, cs[1].record_group);
}

TEST(Extract, DifferentCallsDifferentGroups) {
    auto cs = extractor().extract(test_case("save(email=\"a@b.co\")\nsave(email=\"c@d.co\")\n"), {"Email"});
    ASSERT_EQ(cs.size(), 2u);
    EXPECT_NE(cs[0].record_group, cs[1].record_group);
}

TEST(Extract, NothingInPlainNumber) {
    EXPECT_TRUE(extractor().extract(test_case("x = 42"), {"Email"}).empty());
}

TEST(Extract, OnlyListedAttributes) {
    auto cs = extractor().extract(test_case("user = {\"email\": \"a@b.co\", \"phone\": \"+86 138 1108 5305\"}"), {"Email"});
    EXPECT_EQ(values(cs), std::vector<std::string>{"a@b.co"});
}

TEST(Extract, PlaceholdersDropped) {
    auto cs = extractor().extract(
        test_case("register(email=\"test@example.com\", password=\"password123\")\nregister(email=\"x@sub.example.com\")"),
        {"Email", "Password"});
    EXPECT_TRUE(cs.empty()) << values(cs).size();
}

TEST(Extract, PasswordNeedsCue) {
    auto with_cue = extractor().extract(test_case("login(username=\"kzhang\", password=\"Xk9#mP2vLq8!\")"), {"Password"});
    EXPECT_EQ(values(with_cue), std::vector<std::string>{"Xk9#mP2vLq8!"});
    auto without = extractor().extract(test_case("render(title=\"Xk9#mP2vLq8!\")"), {"Password"});
    EXPECT_TRUE(without.empty());
}

TEST(Extract, LowEntropyPasswordDropped) {
    EXPECT_TRUE(extractor().extract(test_case("set(password=\"aaaaaaaa\")"), {"Password"}).empty());
}

TEST(Extract, CreditCardNeedsLuhn) {
    auto ok = extractor().extract(test_case("pay(card=\"4539 1488 0343 6467\")"), {"CreditCard"});
    EXPECT_EQ(ok.size(), 1u);
    EXPECT_TRUE(extractor().extract(test_case("pay(card=\"4539 1488 0343 6468\")"), {"CreditCard"}).empty());
}

TEST(Extract, SecretKeyShape) {
    auto cs = extractor().extract(test_case("client = Client(api_key=\"sk-78a92b74ea0d5b5bc6fef3\")"), {"SecretKey"});
    EXPECT_EQ(values(cs), std::vector<std::string>{"sk-78a92b74ea0d5b5bc6fef3"});
}

TEST(Extract, RejectedTestCaseYieldsNothing) {
    auto t = test_case("assert f(\"alice.w@example.org\")");
    t.accepted = false;
    EXPECT_TRUE(extractor().extract(t, {"Email"}).empty());
}

TEST(Extract, DeterministicIds) {
    auto a = extractor().extract(test_case("f(\"li.ming@qq.com\")"), {"Email"});
    auto b = extractor().extract(test_case("f(\"li.ming@qq.com\")"), {"Email"});
    ASSERT_EQ(a.size(), 1u);
    EXPECT_EQ(a[0].id, b[0].id);
    auto c = extractor().extract(test_case("f(\"li.ming@qq.com\")", "t2"), {"Email"});
    EXPECT_NE(a[0].id, c[0].id);
}

TEST(Scan, ValuesAndContexts) {
    auto vs = scan_values("cfg = {\"password\": \"hunter22\", 'port': 8080}\n");
    std::vector<std::string> texts;
    for (const auto& v : vs) texts.push_back(v.text);
    EXPECT_NE(std::find(texts.begin(), texts.end(), "hunter22"), texts.end());
    EXPECT_NE(std::find(texts.begin(), texts.end(), "8080"), texts.end());
    for (const auto& v : vs)
        if (v.text == "hunter22") EXPECT_NE(v.context.find("password"), std::string::npos);
}

TEST(Dedup, CaseInsensitiveValues) {
    auto a = extractor().extract(test_case("f(\"A@b.co\")", "t1"), {"Email"});
    auto b = extractor().extract(test_case("f(\"a@b.co\")", "t2"), {"Email"});
    a.insert(a.end(), b.begin(), b.end());
    auto d = dedup_candidates(a);
    ASSERT_EQ(d.kept.size(), 1u);
    ASSERT_EQ(d.duplicates.size(), 1u);
    EXPECT_EQ(d.kept[0].value, "A@b.co");
    EXPECT_EQ(d.duplicates[0].kept_id, d.kept[0].id);
    EXPECT_EQ(d.duplicates[0].test_case_id, "t2");
}

TEST(Dedup, DifferentAttributesKept) {
    PiiCandidate x;
    x.id = "1";
    x.value = "kzhang88";
    x.attribute = "Email";
    x.dedup_key = dedup_key_for(x.value);
    PiiCandidate y = x;
    y.id = "2";
    y.attribute = "AccountUserName";
    auto d = dedup_candidates({x, y});
    EXPECT_EQ(d.kept.size(), 2u);
    EXPECT_TRUE(d.duplicates.empty());
}

TEST(Dedup, EmptyInput) {
    auto d = dedup_candidates({});
    EXPECT_TRUE(d.kept.empty());
    EXPECT_TRUE(d.duplicates.empty());
}

TEST(Candidate, JsonRoundTrip) {
    auto cs = extractor().extract(test_case("f(\"li.ming@qq.com\")"), {"Email"});
    auto back = PiiCandidate::from_json(cs[0].to_json());
    EXPECT_EQ(back.id, cs[0].id);
    EXPECT_EQ(back.span, cs[0].span);
    EXPECT_EQ(back.record_group, cs[0].record_group);
    DuplicateCandidate dc{"a", "b", "Email", "k", "t", "g"};
    EXPECT_EQ(DuplicateCandidate::from_json(dc.to_json()).record_group, "g");
}
