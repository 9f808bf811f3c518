#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <set>

#include "leakaudit/pipeline.hpp"
#include "leakaudit/review_service.hpp"
#include "test_support.hpp"

using namespace leakaudit;
using leakaudit::testing::fixture;
using leakaudit::testing::golden_config;
using leakaudit::testing::TempDir;

namespace {

const TaxonomySet& tax() {
    static const TaxonomySet t = load_default_taxonomy();
    return t;
}

// Forwards to the golden fixture and fails one judge call while armed.
class FlakyJudge : public Provider {
public:
    explicit FlakyJudge(int fail_at) : inner_(MockProvider::from_file(fixture("golden_llm.json"))), fail_at_(fail_at) {}
    ProviderResponse send(const ProviderRequest& request) override {
        if (request.role == RoleKind::Judge && ++judge_calls_ == fail_at_) throw Error(Errc::auth, "injected failure");
        return inner_->send(request);
    }

private:
    std::shared_ptr<MockProvider> inner_;
    int fail_at_;
    std::atomic<int> judge_calls_{0};
};

std::string csv_after_decisions(const std::string& dir) {
    {
        ReviewService svc(dir, tax());
        apply_decisions_file(svc, fixture("golden_decisions.jsonl"));
        svc.write_reports();
    }
    auto store = RunStore::open(dir, false);
    return emit_report(build_report(load_snapshot(*store, tax()), tax()), ReportFormat::Csv);
}

std::vector<json> stream(const std::string& dir, const std::string& name) {
    return RunStore::open(dir, false)->read(name);
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error";
    return Errc::invalid_argument;
}

}  // namespace

TEST(Pipeline, GoldenRunMatchesFixtures) {
    TempDir tmp;
    auto result = run_audit(golden_config(tmp.str()));
    EXPECT_EQ(result.run_id, "golden");
    EXPECT_EQ(result.report.funnel.total.planned_tests, 60);
    EXPECT_EQ(result.report.funnel.total.confirmed, 0);
    EXPECT_EQ(csv_after_decisions(result.dir), read_file(fixture("golden_funnel.csv")));

    const json report = json::parse(read_file(result.dir + "/report.json"));
    EXPECT_EQ(report["confirmed"], json::parse(read_file(fixture("golden_confirmed.json"))));
    EXPECT_EQ(format1(report["lp"]["All"]["1"].get<double>()), "196.4");
    EXPECT_EQ(format1(report["il"]["All"]["2"].get<double>()), "17.9");

    const std::string md = read_file(result.dir + "/report.md");
    const std::string js = report.dump();
    for (const auto& c : stream(result.dir, "candidates")) {
        const std::string v = c.at("value").get<std::string>();
        EXPECT_EQ(md.find(v), std::string::npos) << "report.md leaks a raw value";
        EXPECT_EQ(js.find(v), std::string::npos) << "report.json leaks a raw value";
    }
}

TEST(Pipeline, DeterministicIdsAcrossRuns) {
    TempDir tmp;
    auto a = run_audit(golden_config(tmp.str(), "a"));
    auto b = run_audit(golden_config(tmp.str(), "b"));
    auto ids = [](const std::string& dir, const std::string& s, const std::string& key) {
        std::set<std::string> out;
        for (const auto& j : stream(dir, s)) out.insert(j.at(key).get<std::string>());
        return out;
    };
    EXPECT_EQ(ids(a.dir, "candidates", "id"), ids(b.dir, "candidates", "id"));
    EXPECT_EQ(ids(a.dir, "exchanges", "request_id"), ids(b.dir, "exchanges", "request_id"));
}

TEST(Pipeline, WithoutLibraryNoHints) {
    TempDir tmp;
    auto cfg = golden_config(tmp.str());
    cfg.fl = false;
    auto r = run_audit(cfg);
    const auto prompts = stream(r.dir, "test_prompts");
    ASSERT_FALSE(prompts.empty());
    for (const auto& p : prompts) EXPECT_TRUE(HintBundle::from_json(p.at("hints")).empty());
}

TEST(Pipeline, WithLibraryHintsPresent) {
    TempDir tmp;
    auto r = run_audit(golden_config(tmp.str()));
    for (const auto& p : stream(r.dir, "test_prompts")) EXPECT_FALSE(HintBundle::from_json(p.at("hints")).empty());
}

TEST(Pipeline, WithoutTestGenerationAsksForData) {
    TempDir tmp;
    auto cfg = golden_config(tmp.str());
    cfg.tg = false;
    auto r = run_audit(cfg);
    const auto prompts = stream(r.dir, "test_prompts");
    ASSERT_FALSE(prompts.empty());
    for (const auto& p : prompts) {
        EXPECT_EQ(p.at("kind"), "example_data");
        EXPECT_EQ(p.at("prompt").get<std::string>().find("unit test"), std::string::npos);
    }
}

TEST(Pipeline, WithoutQuestionGenerationUsesGenericQuestions) {
    TempDir tmp;
    auto cfg = golden_config(tmp.str());
    cfg.cgq = false;
    auto r = run_audit(cfg);
    EXPECT_EQ(stream(r.dir, "questions").size(), 20u);
    for (const auto& e : stream(r.dir, "exchanges")) EXPECT_NE(e.at("role"), "QuestionGen");
}

TEST(Pipeline, ResumeAfterJudgeFailure) {
    TempDir tmp;
    auto cfg = golden_config(tmp.str());
    PipelineDeps flaky;
    flaky.providers["mock"] = std::make_shared<FlakyJudge>(10);
    EXPECT_EQ(code_of([&] { run_audit(cfg, false, flaky); }), Errc::auth);
    const std::string dir = resolve_run_dir(tmp.str(), "golden");
    const auto partial = stream(dir, "verdicts").size();
    EXPECT_LT(partial, stream(dir, "candidates").size());
    EXPECT_TRUE(RunStore::open(dir, false)->checkpointed("extract"));

    auto r = run_audit(cfg, true);
    const auto verdicts = stream(r.dir, "verdicts");
    std::set<std::string> ids;
    for (const auto& v : verdicts) ids.insert(v.at("candidate_id").get<std::string>());
    EXPECT_EQ(ids.size(), verdicts.size());
    EXPECT_EQ(verdicts.size(), stream(r.dir, "candidates").size());
    EXPECT_EQ(csv_after_decisions(r.dir), read_file(fixture("golden_funnel.csv")));
}

TEST(Pipeline, ResumeNeedsSameConfig) {
    TempDir tmp;
    run_audit(golden_config(tmp.str()));
    auto changed = golden_config(tmp.str());
    changed.tests_per_question = 4;
    EXPECT_EQ(code_of([&] { run_audit(changed, true); }), Errc::config);
    EXPECT_EQ(code_of([&] { run_audit(golden_config(tmp.str())); }), Errc::config);
}

TEST(Pipeline, ReplayReproducesRun) {
    TempDir tmp;
    auto first = run_audit(golden_config(tmp.str(), "first"));
    auto cfg = golden_config(tmp.str(), "second");
    cfg.replay_from = first.dir;
    cfg.providers["mock"].fixture = "/nonexistent.json";
    auto second = run_audit(cfg);
    EXPECT_EQ(emit_report(second.report, ReportFormat::Csv), emit_report(first.report, ReportFormat::Csv));
    EXPECT_EQ(second.report.to_json()["confirmed"], first.report.to_json()["confirmed"]);
    EXPECT_EQ(stream(second.dir, "candidates").size(), stream(first.dir, "candidates").size());
}

TEST(Pipeline, ProgressReported) {
    TempDir tmp;
    std::vector<std::string> stages;
    std::mutex mu;
    PipelineDeps deps;
    deps.progress = [&](const std::string& s, const std::string&) {
        std::lock_guard lock(mu);
        stages.push_back(s);
    };
    run_audit(golden_config(tmp.str()), false, deps);
    EXPECT_EQ(stages, (std::vector<std::string>{"questions", "code", "tests", "extract", "judge", "search", "report"}));
}

TEST(Config, Errors) {
    const json good = json::parse(read_file(fixture("golden_config.json")));
    const std::string base = std::filesystem::path(fixture("golden_config.json")).parent_path().string();
    EXPECT_NO_THROW(RunConfig::from_json(good, base));

    auto broken = [&](const std::function<void(json&)>& edit) {
        json j = good;
        edit(j);
        return code_of([&] { RunConfig::from_json(j, base); });
    };
    EXPECT_EQ(broken([](json& j) { j["questions_per_scenario"] = 0; }), Errc::config);
    EXPECT_EQ(broken([](json& j) { j["roles"].erase("Judge"); }), Errc::config);
    EXPECT_EQ(broken([](json& j) { j["providers"]["mock"]["type"] = "ftp"; }), Errc::config);
    EXPECT_EQ(broken([](json& j) { j["providers"]["mock"].erase("fixture"); }), Errc::config);
    EXPECT_EQ(broken([](json& j) { j["roles"]["Test"]["provider"] = "elsewhere"; }), Errc::config);
    EXPECT_EQ(code_of([&] { RunConfig::from_file(base + "/missing.json"); }), Errc::config);

    auto cfg = RunConfig::from_json(good, base);
    auto back = RunConfig::from_json(cfg.to_json(), base);
    EXPECT_EQ(back.to_json(), cfg.to_json());
}

TEST(Config, UnknownScenarioSelection) {
    TempDir tmp;
    auto cfg = golden_config(tmp.str());
    cfg.scenarios = {"desktop"};
    EXPECT_THROW(run_audit(cfg), Error);
}

TEST(Library, UpdateFromGoldenRun) {
    TempDir tmp;
    auto r = run_audit(golden_config(tmp.str()));
    {
        ReviewService svc(r.dir, tax());
        apply_decisions_file(svc, fixture("golden_decisions.jsonl"));
    }
    StubScorer scorer;
    const std::string lib_path = tmp / "library.json";
    save_library(init_library_file(default_data_dir() + "/seeds.json", tax(), scorer), lib_path);
    auto summary = library_update_from_run(r.dir, lib_path, tax(), scorer);
    EXPECT_EQ(summary.old_version, 1u);
    EXPECT_EQ(summary.new_version, 2u);
    EXPECT_EQ(load_library(lib_path).version, 2u);
    auto figs = export_figures(r.dir, load_library(lib_path), tax(), scorer);
    EXPECT_TRUE(std::filesystem::exists(figs.first));
    EXPECT_TRUE(std::filesystem::exists(figs.second));
}
