#include <gtest/gtest.h>

#include "leakaudit/question_gen.hpp"

using namespace leakaudit;

namespace {

const TaxonomySet& tax() {
    static const TaxonomySet t = load_default_taxonomy();
    return t;
}

std::string numbered(int n) {
    std::string s = "Here you go:\n\n";
    for (int i = 1; i <= n; ++i) s += std::to_string(i) + ". Write a function that handles task " + std::to_string(i) + ".\n";
    return s;
}

LlmGateway gateway_replying(const std::string& reply) {
    auto mock = std::make_shared<MockProvider>(std::vector<MockProvider::Rule>{}, reply);
    std::map<RoleKind, LlmRole> roles;
    for (RoleKind r : {RoleKind::QuestionGen, RoleKind::Test, RoleKind::Judge}) roles[r] = LlmRole{r, "mock", "m", {}};
    return LlmGateway(roles, {{"mock", mock}});
}

}  // namespace

TEST(QuestionPrompt, NamesScenarioAttributeAndCount) {
    const auto& web = tax().scenario("web");
    const auto& email = tax().attribute("Email");
    const std::string p = build_question_prompt(web, {&email}, 20);
    EXPECT_NE(p.find(web.description), std::string::npos);
    EXPECT_NE(p.find(email.description), std::string::npos);
    EXPECT_NE(p.find("20"), std::string::npos);
}

TEST(QuestionPrompt, AttributeOutsideScenarioRejected) {
    try {
        build_question_prompt(tax().scenario("blockchain"), {&tax().attribute("Name")}, 5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::invalid_argument);
    }
}

TEST(QuestionPrompt, NamesEveryAttribute) {
    const std::string p = build_question_prompt(tax().scenario("game"),
                                                {&tax().attribute("Password"), &tax().attribute("AccountUserName")}, 1);
    EXPECT_NE(p.find("Password"), std::string::npos);
    EXPECT_NE(p.find("AccountUserName"), std::string::npos);
}

TEST(QuestionPrompt, CountMustBePositive) {
    EXPECT_THROW(build_question_prompt(tax().scenario("web"), {&tax().attribute("Email")}, 0), Error);
    EXPECT_THROW(build_question_prompt(tax().scenario("web"), {}, 3), Error);
}

TEST(NumberedList, Formats) {
    auto items = parse_numbered_list("1. first\n2) second\n   continued here\n- third\n* **fourth**\n");
    ASSERT_EQ(items.size(), 4u);
    EXPECT_EQ(items[1], "second continued here");
    EXPECT_EQ(items[3], "fourth");
    EXPECT_THROW(parse_numbered_list("no list at all"), Error);
}

TEST(GenerateQuestions, TwentyItems) {
    auto gw = gateway_replying(numbered(20));
    auto b = generate_questions(gw, tax().scenario("web"), {&tax().attribute("Email")}, 20);
    ASSERT_EQ(b.questions.size(), 20u);
    EXPECT_FALSE(b.refused);
    std::set<std::string> ids;
    for (const auto& q : b.questions) {
        ids.insert(q.id);
        EXPECT_EQ(q.scenario, "web");
        EXPECT_EQ(q.attributes, std::vector<std::string>{"Email"});
        EXPECT_FALSE(q.prompt_hash.empty());
    }
    EXPECT_EQ(ids.size(), 20u);
}

TEST(GenerateQuestions, TruncatesToN) {
    auto gw = gateway_replying(numbered(23));
    auto b = generate_questions(gw, tax().scenario("web"), {&tax().attribute("Email")}, 20);
    ASSERT_EQ(b.questions.size(), 20u);
    EXPECT_NE(b.questions.back().text.find("task 20"), std::string::npos);
}

TEST(GenerateQuestions, RefusalYieldsEmptyBatch) {
    auto gw = gateway_replying("I'm sorry, but I can't help with generating that.");
    auto b = generate_questions(gw, tax().scenario("web"), {&tax().attribute("Email")}, 5);
    EXPECT_TRUE(b.refused);
    EXPECT_TRUE(b.questions.empty());
}

TEST(GenerateQuestions, IdsAreDeterministic) {
    auto gw1 = gateway_replying(numbered(3));
    auto gw2 = gateway_replying(numbered(3));
    auto a = generate_questions(gw1, tax().scenario("web"), {&tax().attribute("Email")}, 3);
    auto b = generate_questions(gw2, tax().scenario("web"), {&tax().attribute("Email")}, 3);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.questions[i].id, b.questions[i].id);
}

TEST(GenericQuestions, CarryAttributesWithoutScenarioText) {
    auto qs = generic_questions(tax().scenario("game"), {&tax().attribute("Password")}, 7);
    ASSERT_EQ(qs.size(), 7u);
    std::set<std::string> texts;
    for (const auto& q : qs) {
        texts.insert(q.text);
        EXPECT_NE(q.text.find("Password"), std::string::npos);
        EXPECT_EQ(q.text.find("game"), std::string::npos);
        EXPECT_EQ(q.attributes, std::vector<std::string>{"Password"});
    }
    EXPECT_EQ(texts.size(), 7u);
}

TEST(Question, JsonRoundTripAndSort) {
    auto qs = generic_questions(tax().scenario("web"), {&tax().attribute("Email")}, 3);
    auto more = generic_questions(tax().scenario("game"), {&tax().attribute("Password")}, 2);
    qs.insert(qs.end(), more.begin(), more.end());
    sort_questions(qs);
    EXPECT_EQ(qs.front().scenario, "game");
    Question back = Question::from_json(qs[0].to_json());
    EXPECT_EQ(back.id, qs[0].id);
    EXPECT_EQ(back.text, qs[0].text);
}
