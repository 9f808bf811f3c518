#include "leakaudit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <sstream>
#include <thread>

#include "leakaudit/judge_filter.hpp"
#include "leakaudit/pii_extract.hpp"
#include "leakaudit/question_gen.hpp"
#include "leakaudit/response_pipeline.hpp"

namespace fs = std::filesystem;

namespace leakaudit {

namespace {

std::string resolve_path(const std::string& base, const std::string& p) {
    if (p.empty()) return p;
    fs::path path(p);
    if (path.is_absolute()) return p;
    return (fs::path(base) / path).lexically_normal().string();
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j[key].is_null()) return fallback;
    try {
        return j[key].get<T>();
    } catch (const json::exception& e) {
        throw Error(Errc::config, std::string("config field '") + key + "': " + e.what());
    }
}

void parallel_for(std::size_t n, int width, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, width)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (;;) {
                if (failed) return;
                const std::size_t i = next++;
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                    failed = true;
                    return;
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (first) std::rethrow_exception(first);
}

std::vector<std::pair<const Scenario*, const AttributeSpec*>> selected_pairs(const RunConfig& cfg,
                                                                             const TaxonomySet& taxonomy) {
    std::vector<const Scenario*> scenarios;
    if (cfg.scenarios.empty()) {
        for (const auto& s : taxonomy.scenarios()) scenarios.push_back(&s);
    } else {
        for (const auto& id : cfg.scenarios) scenarios.push_back(&taxonomy.scenario(id));
    }
    for (const auto& a : cfg.attributes)
        if (!taxonomy.find_attribute(a)) throw Error(Errc::config, "unknown attribute '" + a + "'");
    std::vector<std::pair<const Scenario*, const AttributeSpec*>> pairs;
    for (const auto* s : scenarios)
        for (const auto* a : taxonomy.attributes_for_scenario(s->id))
            if (cfg.attributes.empty() || std::find(cfg.attributes.begin(), cfg.attributes.end(), a->id) != cfg.attributes.end())
                pairs.emplace_back(s, a);
    return pairs;
}

std::uint64_t seed_for(std::uint64_t base, const std::string& key) {
    return base + std::stoull(content_id({key}), nullptr, 16);
}

std::string first_lines(std::string_view s, int n) {
    std::string out;
    int lines = 0;
    for (char c : s) {
        if (c == '\n' && ++lines == n) break;
        out.push_back(c);
    }
    return out;
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const std::string& base_dir) {
    if (!j.is_object()) throw Error(Errc::config, "config must be a JSON object");
    RunConfig c;
    c.run_id = get_or<std::string>(j, "run_id", "");
    c.store_dir = resolve_path(base_dir, get_or<std::string>(j, "store_dir", "runs"));
    c.scenarios = get_or<std::vector<std::string>>(j, "scenarios", {});
    c.attributes = get_or<std::vector<std::string>>(j, "attributes", {});
    c.questions_per_scenario = get_or(j, "questions_per_scenario", 20);
    c.tests_per_question = get_or(j, "tests_per_question", 10);
    c.functions_per_question = get_or(j, "functions_per_question", 1);
    if (c.questions_per_scenario < 1 || c.tests_per_question < 1 || c.functions_per_question < 1)
        throw Error(Errc::config, "question, test and function counts must be positive");

    const json roles = get_or<json>(j, "roles", json::object());
    for (RoleKind r : {RoleKind::QuestionGen, RoleKind::Test, RoleKind::Judge}) {
        const std::string key(to_string(r));
        if (!roles.contains(key)) throw Error(Errc::config, "role " + key + " is not bound");
        const json& rj = roles[key];
        LlmRole role;
        role.id = r;
        role.provider = get_or<std::string>(rj, "provider", "");
        role.model = get_or<std::string>(rj, "model", "");
        if (rj.contains("temperature")) role.decoding.temperature = get_or(rj, "temperature", 0.0);
        if (rj.contains("max_tokens")) role.decoding.max_tokens = get_or(rj, "max_tokens", 0);
        if (role.provider.empty()) throw Error(Errc::config, "role " + key + " needs a provider");
        c.roles[r] = role;
    }
    const json providers = get_or<json>(j, "providers", json::object());
    for (const auto& [id, pj] : providers.items()) {
        ProviderSpec p;
        p.type = get_or<std::string>(pj, "type", "mock");
        p.fixture = resolve_path(base_dir, get_or<std::string>(pj, "fixture", ""));
        p.base_url = get_or<std::string>(pj, "base_url", "");
        p.timeout_seconds = get_or(pj, "timeout_seconds", 120);
        if (p.type != "mock" && p.type != "http") throw Error(Errc::config, "provider " + id + ": unknown type " + p.type);
        if (p.type == "mock" && p.fixture.empty()) throw Error(Errc::config, "provider " + id + " needs a fixture");
        if (p.type == "http" && p.base_url.empty()) throw Error(Errc::config, "provider " + id + " needs a base_url");
        c.providers[id] = p;
    }
    for (const auto& [r, role] : c.roles)
        if (!c.providers.count(role.provider))
            throw Error(Errc::config, "role " + std::string(to_string(r)) + " uses undefined provider " + role.provider);

    c.taxonomy_path = resolve_path(base_dir, get_or<std::string>(j, "taxonomy", ""));
    c.placeholders_path = resolve_path(base_dir, get_or<std::string>(j, "placeholders", ""));
    c.refusal_path = resolve_path(base_dir, get_or<std::string>(j, "refusal_phrases", ""));
    c.library_path = resolve_path(base_dir, get_or<std::string>(j, "library", ""));
    c.seeds_path = resolve_path(base_dir, get_or<std::string>(j, "seeds", ""));

    const json ab = get_or<json>(j, "ablation", json::object());
    c.cgq = get_or(ab, "cgq", true);
    c.fl = get_or(ab, "fl", true);
    c.tg = get_or(ab, "tg", true);
    const json hints = get_or<json>(j, "hints", json::object());
    c.hint_templates = get_or(hints, "templates", 3);
    c.hint_fragments = get_or(hints, "fragments", 3);

    const json search = get_or<json>(j, "search", json::object());
    c.search_mode = get_or<std::string>(search, "mode", "fixture");
    c.search_fixture = resolve_path(base_dir, get_or<std::string>(search, "fixture", ""));
    c.search_base_url = get_or<std::string>(search, "base_url", "https://api.github.com");
    c.phrase_limit = get_or<std::size_t>(search, "phrase_limit", kDefaultPhraseLimit);
    if (c.search_mode != "fixture" && c.search_mode != "live") throw Error(Errc::config, "search mode must be fixture or live");
    if (c.search_mode == "fixture" && c.search_fixture.empty()) throw Error(Errc::config, "fixture search needs a fixture file");

    const json scorer = get_or<json>(j, "scorer", json::object());
    c.scorer_mode = get_or<std::string>(scorer, "mode", "stub");
    c.scorer_endpoint = get_or<std::string>(scorer, "endpoint", "");
    if (c.scorer_mode != "stub" && c.scorer_mode != "http") throw Error(Errc::config, "scorer mode must be stub or http");
    if (c.scorer_mode == "http" && c.scorer_endpoint.empty()) throw Error(Errc::config, "http scorer needs an endpoint");

    c.concurrency = get_or(j, "concurrency", 4);
    c.seed = get_or<std::uint64_t>(j, "seed", 7);
    c.quorum = get_or(get_or<json>(j, "review", json::object()), "quorum", 2);
    if (c.quorum < 1) throw Error(Errc::config, "review quorum must be at least 1");
    c.judge_context_line = get_or(get_or<json>(j, "judge", json::object()), "include_context_line", false);
    c.requests_per_minute = get_or(j, "requests_per_minute", 0.0);
    c.max_retries = get_or(j, "max_retries", 3);
    c.backoff_ms = get_or(j, "backoff_ms", 500);
    c.replay_from = resolve_path(base_dir, get_or<std::string>(j, "replay_from", ""));
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw Error(Errc::config, path + ": " + e.what());
    } catch (const Error& e) {
        throw Error(Errc::config, e.what());
    }
    return from_json(j, fs::path(path).parent_path().string().empty() ? "." : fs::path(path).parent_path().string());
}

json RunConfig::to_json() const {
    json roles_j = json::object();
    for (const auto& [r, role] : roles) {
        json rj{{"provider", role.provider}, {"model", role.model}};
        if (role.decoding.temperature) rj["temperature"] = *role.decoding.temperature;
        if (role.decoding.max_tokens) rj["max_tokens"] = *role.decoding.max_tokens;
        roles_j[std::string(to_string(r))] = rj;
    }
    json providers_j = json::object();
    for (const auto& [id, p] : providers)
        providers_j[id] = {{"type", p.type}, {"fixture", p.fixture}, {"base_url", p.base_url}, {"timeout_seconds", p.timeout_seconds}};
    return {{"run_id", run_id},
            {"store_dir", store_dir},
            {"scenarios", scenarios},
            {"attributes", attributes},
            {"questions_per_scenario", questions_per_scenario},
            {"tests_per_question", tests_per_question},
            {"functions_per_question", functions_per_question},
            {"roles", roles_j},
            {"providers", providers_j},
            {"taxonomy", taxonomy_path},
            {"placeholders", placeholders_path},
            {"refusal_phrases", refusal_path},
            {"library", library_path},
            {"seeds", seeds_path},
            {"ablation", {{"cgq", cgq}, {"fl", fl}, {"tg", tg}}},
            {"hints", {{"templates", hint_templates}, {"fragments", hint_fragments}}},
            {"search",
             {{"mode", search_mode}, {"fixture", search_fixture}, {"base_url", search_base_url}, {"phrase_limit", phrase_limit}}},
            {"scorer", {{"mode", scorer_mode}, {"endpoint", scorer_endpoint}}},
            {"concurrency", concurrency},
            {"seed", seed},
            {"review", {{"quorum", quorum}}},
            {"judge", {{"include_context_line", judge_context_line}}},
            {"requests_per_minute", requests_per_minute},
            {"max_retries", max_retries},
            {"backoff_ms", backoff_ms},
            {"replay_from", replay_from}};
}

std::shared_ptr<Scorer> make_scorer(const RunConfig& cfg) {
    std::shared_ptr<Scorer> inner;
    if (cfg.scorer_mode == "http") inner = std::make_shared<HttpScorerClient>(cfg.scorer_endpoint);
    else inner = std::make_shared<StubScorer>();
    return std::make_shared<CachingScorer>(inner);
}

std::shared_ptr<SearchClient> make_search_client(const RunConfig& cfg) {
    if (cfg.search_mode == "live") {
        GithubSearchClient::Options o;
        o.base_url = cfg.search_base_url;
        return std::make_shared<GithubSearchClient>(o);
    }
    return FixtureSearchClient::from_file(cfg.search_fixture);
}

std::map<std::string, std::shared_ptr<Provider>> make_providers(const RunConfig& cfg) {
    std::map<std::string, std::shared_ptr<Provider>> out;
    for (const auto& [id, p] : cfg.providers) {
        if (p.type == "mock") out[id] = MockProvider::from_file(p.fixture);
        else out[id] = std::make_shared<HttpProvider>(id, p.base_url, p.timeout_seconds);
    }
    return out;
}

TaxonomySet load_run_taxonomy(const RunConfig& cfg) {
    return cfg.taxonomy_path.empty() ? load_default_taxonomy() : load_taxonomy_file(cfg.taxonomy_path);
}

ReviewPolicy review_policy_of(const RunStore& store) {
    const int quorum = store.config().value("review", json::object()).value("quorum", 2);
    return ReviewPolicy{quorum, quorum};
}

std::vector<CandidateRecord> load_records(const RunStore& store, const ReviewPolicy& policy) {
    std::vector<CandidateRecord> records;
    std::map<std::string, std::size_t> index;
    auto find = [&](const json& j, const char* stream) -> CandidateRecord& {
        const std::string id = j.at("candidate_id").get<std::string>();
        auto it = index.find(id);
        if (it == index.end()) throw Error(Errc::store_corrupt, std::string(stream) + " refers to unknown candidate " + id);
        return records[it->second];
    };
    try {
        for (const auto& j : store.read("candidates")) {
            CandidateRecord r;
            r.candidate = PiiCandidate::from_json(j);
            index[r.candidate.id] = records.size();
            records.push_back(std::move(r));
        }
        for (const auto& j : store.read("verdicts")) apply_judge_verdict(find(j, "verdicts"), j.at("accept").get<bool>());
        for (const auto& j : store.read("searches")) {
            std::vector<Evidence> ev;
            for (const auto& e : j.value("items", json::array())) ev.push_back(Evidence::from_json(e));
            apply_search_threshold(find(j, "searches"), j.at("total_count").get<std::int64_t>(),
                                   j.value("query", std::string{}), std::move(ev));
        }
        for (const auto& j : store.read("decisions"))
            record_review_decision(find(j, "decisions"), ReviewDecision::from_json(j), policy);
    } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, std::string("malformed record: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::store_corrupt) throw;
        throw Error(Errc::store_corrupt, std::string("replaying lifecycle events: ") + e.what());
    }
    return records;
}

RunSnapshot load_snapshot(const RunStore& store, const TaxonomySet& taxonomy) {
    RunSnapshot snap;
    snap.run_id = store.run_id();
    const RunConfig cfg = RunConfig::from_json(store.config());
    for (const auto& [s, a] : selected_pairs(cfg, taxonomy))
        snap.planned_tests[a->id] += static_cast<std::int64_t>(cfg.questions_per_scenario) * cfg.tests_per_question;

    std::map<std::string, std::vector<std::string>> question_attrs;
    for (const auto& j : store.read("questions")) {
        Question q = Question::from_json(j);
        question_attrs[q.id] = q.attributes;
    }
    for (const auto& j : store.read("tests")) {
        TestCase t = TestCase::from_json(j);
        if (!t.accepted) continue;
        snap.accepted_test_ids.push_back(t.id);
        for (const auto& a : question_attrs[t.question_id]) ++snap.accepted_tests[a];
    }
    for (const auto& [a, n] : snap.planned_tests) snap.accepted_tests.emplace(a, 0);
    snap.records = load_records(store, review_policy_of(store));
    for (const auto& j : store.read("duplicates")) snap.duplicates.push_back(DuplicateCandidate::from_json(j));
    for (const char* stream : {"code", "test_prompts"}) {
        for (const auto& j : store.read(stream)) {
            ++snap.elicitation_requests;
            if (j.value("refused", false)) ++snap.refused_requests;
        }
    }
    return snap;
}

RunReport write_reports(const RunStore& store, const TaxonomySet& taxonomy) {
    RunReport report = build_report(load_snapshot(store, taxonomy), taxonomy);
    write_file_atomic((fs::path(store.dir()) / "report.json").string(), emit_report(report, ReportFormat::Json));
    write_file_atomic((fs::path(store.dir()) / "report.md").string(), emit_report(report, ReportFormat::Markdown));
    return report;
}

RunResult run_audit(const RunConfig& cfg, bool resume, PipelineDeps deps) {
    const TaxonomySet taxonomy = load_run_taxonomy(cfg);
    const auto pairs = selected_pairs(cfg, taxonomy);
    if (pairs.empty()) throw Error(Errc::config, "the scenario and attribute selection is empty");
    auto progress = [&](const std::string& stage, const std::string& msg) {
        if (deps.progress) deps.progress(stage, msg);
    };

    RunConfig effective = cfg;
    if (effective.run_id.empty()) effective.run_id = "run-" + content_id({cfg.to_json().dump(), now_iso8601()});
    std::unique_ptr<RunStore> store;
    if (resume) {
        store = RunStore::open(resolve_run_dir(effective.store_dir, effective.run_id), true);
        if (store->config() != effective.to_json())
            throw Error(Errc::config, "resume requires the configuration the run was started with");
    } else {
        store = RunStore::create(effective.store_dir, effective.run_id, effective.to_json());
    }
    store->set_status("running");

    auto providers = deps.providers.empty() ? std::map<std::string, std::shared_ptr<Provider>>{} : deps.providers;
    std::shared_ptr<SearchClient> search = deps.search;
    if (!cfg.replay_from.empty()) {
        auto prior = RunStore::open(cfg.replay_from, false);
        std::vector<Exchange> exchanges;
        for (const auto& j : prior->read("exchanges")) exchanges.push_back(Exchange::from_json(j));
        auto replay = std::make_shared<ReplayProvider>(exchanges);
        if (providers.empty())
            for (const auto& [id, p] : cfg.providers) providers[id] = replay;
        if (!search) {
            json fixture{{"queries", json::object()}, {"default", 0}};
            for (const auto& j : prior->read("searches"))
                fixture["queries"][j.at("query").get<std::string>()] = {{"total_count", j.at("total_count")},
                                                                         {"items", j.value("items", json::array())}};
            search = std::make_shared<FixtureSearchClient>(fixture);
        }
    }
    if (providers.empty()) providers = make_providers(cfg);
    if (!search) search = make_search_client(cfg);
    auto cached_search = std::make_shared<CachingSearchClient>(search);

    RunStore& st = *store;
    LlmGateway gateway(
        cfg.roles, providers,
        cfg.refusal_path.empty() ? RefusalDetector::from_file(default_data_dir() + "/refusal_phrases.txt")
                                 : RefusalDetector::from_file(cfg.refusal_path),
        RetryPolicy{cfg.max_retries, std::chrono::milliseconds(cfg.backoff_ms)}, cfg.requests_per_minute,
        [&st](const Exchange& e) { st.append("exchanges", e.request_id, e.to_json()); });

    std::optional<FeatureLibrary> library;
    if (cfg.fl) {
        if (!cfg.library_path.empty() && fs::exists(cfg.library_path)) {
            library = load_library(cfg.library_path);
        } else {
            auto scorer = deps.scorer ? deps.scorer : make_scorer(cfg);
            library = init_library_file(cfg.seeds_path.empty() ? default_data_dir() + "/seeds.json" : cfg.seeds_path,
                                        taxonomy, *scorer);
        }
    }

    // questions
    if (!st.checkpointed("questions")) {
        progress("questions", std::to_string(pairs.size()) + " scenario/attribute pairs");
        parallel_for(pairs.size(), cfg.concurrency, [&](std::size_t i) {
            const auto& [s, a] = pairs[i];
            const std::string batch_id = content_id({s->id, a->id});
            if (st.has("question_batches", batch_id)) return;
            QuestionBatch batch;
            if (cfg.cgq) batch = generate_questions(gateway, *s, {a}, cfg.questions_per_scenario);
            else batch.questions = generic_questions(*s, {a}, cfg.questions_per_scenario);
            json ids = json::array();
            for (const auto& q : batch.questions) {
                st.append("questions", q.id, q.to_json());
                ids.push_back(q.id);
            }
            st.append("question_batches", batch_id,
                      {{"id", batch_id},
                       {"scenario", s->id},
                       {"attributes", {a->id}},
                       {"refused", batch.refused},
                       {"request_id", batch.request_id},
                       {"question_ids", ids}});
        });
        st.checkpoint("questions");
    }
    std::map<std::string, Question> all_questions;
    for (const auto& j : st.read("questions")) {
        Question q = Question::from_json(j);
        all_questions[q.id] = q;
    }
    std::vector<Question> questions;
    for (const auto& b : st.read("question_batches"))
        for (const auto& id : b.at("question_ids")) questions.push_back(all_questions.at(id.get<std::string>()));
    sort_questions(questions);
    std::map<std::string, const Question*> question_by_id;
    for (const auto& q : questions) question_by_id[q.id] = &q;

    // code
    if (!st.checkpointed("code")) {
        progress("code", std::to_string(questions.size()) + " questions");
        parallel_for(questions.size(), cfg.concurrency, [&](std::size_t i) {
            const Question& q = questions[i];
            if (st.has("code", q.id)) return;
            CodeResponse c = generate_code(gateway, q);
            auto fns = extract_functions(c, taxonomy);
            std::stable_sort(fns.begin(), fns.end(), [&](const auto& x, const auto& y) {
                auto hits = [&](const CandidateFunction& f) {
                    return std::count_if(f.attributes.begin(), f.attributes.end(), [&](const std::string& a) {
                        return std::find(q.attributes.begin(), q.attributes.end(), a) != q.attributes.end();
                    });
                };
                return hits(x) > hits(y);
            });
            json all_ids = json::array(), selected = json::array();
            for (std::size_t k = 0; k < fns.size(); ++k) {
                st.append("functions", fns[k].id, fns[k].to_json());
                all_ids.push_back(fns[k].id);
                if (k < static_cast<std::size_t>(cfg.functions_per_question)) selected.push_back(fns[k].id);
            }
            json rec = c.to_json();
            rec["id"] = q.id;
            rec["functions"] = all_ids;
            rec["selected"] = selected;
            st.append("code", q.id, rec);
        });
        st.checkpoint("code");
    }
    std::map<std::string, CandidateFunction> fn_by_id;
    for (const auto& j : st.read("functions")) {
        auto f = CandidateFunction::from_json(j);
        fn_by_id[f.id] = f;
    }
    std::map<std::string, json> code_by_q;
    for (const auto& j : st.read("code")) code_by_q[j.at("id").get<std::string>()] = j;
    std::vector<const CandidateFunction*> selected;
    for (const auto& q : questions) {
        auto it = code_by_q.find(q.id);
        if (it == code_by_q.end()) continue;
        for (const auto& id : it->second.value("selected", json::array())) selected.push_back(&fn_by_id.at(id.get<std::string>()));
    }

    // tests
    const TestPromptKind kind = cfg.tg ? TestPromptKind::UnitTests : TestPromptKind::ExampleData;
    if (!st.checkpointed("tests")) {
        progress("tests", std::to_string(selected.size()) + " functions");
        parallel_for(selected.size(), cfg.concurrency, [&](std::size_t i) {
            const CandidateFunction& f = *selected[i];
            if (st.has("test_prompts", f.id)) return;
            const Question& q = *question_by_id.at(f.question_id);
            HintBundle hints;
            if (library)
                for (const auto& a : q.attributes)
                    hints.append(sample_hints(*library, a, static_cast<std::size_t>(cfg.hint_templates),
                                              static_cast<std::size_t>(cfg.hint_fragments), seed_for(cfg.seed, f.id + a)));
            const std::string prompt = cfg.tg ? build_test_prompt(f, hints, cfg.tests_per_question)
                                              : build_example_data_prompt(f, hints, cfg.tests_per_question);
            TestGeneration gen = generate_tests(gateway, f, prompt, cfg.tests_per_question, kind);
            for (const auto& t : gen.tests) st.append("tests", t.id, t.to_json());
            st.append("test_prompts", f.id,
                      {{"id", f.id},
                       {"function_id", f.id},
                       {"question_id", f.question_id},
                       {"kind", std::string(to_string(kind))},
                       {"prompt", prompt},
                       {"prompt_hash", sha256_hex(prompt)},
                       {"hints", hints.to_json()},
                       {"refused", gen.refused},
                       {"requested", gen.requested},
                       {"delivered", gen.delivered},
                       {"request_id", gen.request_id}});
        });
        st.checkpoint("tests");
    }

    // extract
    if (!st.checkpointed("extract")) {
        std::map<std::string, std::size_t> q_order;
        for (std::size_t i = 0; i < questions.size(); ++i) q_order[questions[i].id] = i;
        std::vector<TestCase> tests;
        for (const auto& j : st.read("tests")) tests.push_back(TestCase::from_json(j));
        std::stable_sort(tests.begin(), tests.end(), [&](const TestCase& x, const TestCase& y) {
            return std::make_tuple(q_order[x.question_id], x.function_id, x.index) <
                   std::make_tuple(q_order[y.question_id], y.function_id, y.index);
        });
        progress("extract", std::to_string(tests.size()) + " test cases");
        const std::string placeholders =
            cfg.placeholders_path.empty() ? default_data_dir() + "/placeholders.txt" : cfg.placeholders_path;
        PiiExtractor extractor(taxonomy, read_list_file(placeholders));
        std::vector<PiiCandidate> all;
        for (const auto& t : tests) {
            if (!t.accepted) continue;
            auto found = extractor.extract(t, question_by_id.at(t.question_id)->attributes);
            all.insert(all.end(), found.begin(), found.end());
        }
        DedupResult d = dedup_candidates(all);
        for (const auto& c : d.kept) st.append("candidates", c.id, c.to_json());
        for (const auto& c : d.duplicates) st.append("duplicates", c.candidate_id, c.to_json());
        st.checkpoint("extract");
    }
    std::vector<PiiCandidate> candidates;
    for (const auto& j : st.read("candidates")) candidates.push_back(PiiCandidate::from_json(j));

    // judge
    if (!st.checkpointed("judge")) {
        progress("judge", std::to_string(candidates.size()) + " candidates");
        parallel_for(candidates.size(), cfg.concurrency, [&](std::size_t i) {
            const PiiCandidate& x = candidates[i];
            if (st.has("verdicts", x.id)) return;
            const auto& a = taxonomy.attribute(x.attribute);
            JudgeVerdict v = judge_candidate(gateway, x, a, a.seed_exemplars, cfg.judge_context_line);
            st.append("verdicts", x.id, v.to_json());
        });
        st.checkpoint("judge");
    }
    std::map<std::string, bool> accepted;
    for (const auto& j : st.read("verdicts")) accepted[j.at("candidate_id").get<std::string>()] = j.at("accept").get<bool>();

    // search
    if (!st.checkpointed("search")) {
        std::vector<const PiiCandidate*> todo;
        for (const auto& c : candidates)
            if (accepted[c.id]) todo.push_back(&c);
        progress("search", std::to_string(todo.size()) + " judge-passed candidates");
        parallel_for(todo.size(), cfg.concurrency, [&](std::size_t i) {
            const PiiCandidate& x = *todo[i];
            if (st.has("searches", x.id)) return;
            const std::string query = discriminative_query(x.value, cfg.phrase_limit);
            SearchResult r = cached_search->search(query);
            json items = json::array();
            for (std::size_t k = 0; k < std::min<std::size_t>(10, r.items.size()); ++k) {
                Evidence e = r.items[k];
                e.snippet = first_lines(e.snippet, 3);
                items.push_back(e.to_json());
            }
            st.append("searches", x.id,
                      {{"candidate_id", x.id},
                       {"query", query},
                       {"query_hash", sha256_hex(query)},
                       {"total_count", r.total_count},
                       {"items", items}});
        });
        st.checkpoint("search");
    }

    RunResult result;
    result.run_id = st.run_id();
    result.dir = st.dir();
    result.report = write_reports(st, taxonomy);
    st.checkpoint("report");
    st.set_status("awaiting_review");
    progress("report", "written to " + st.dir());
    return result;
}

std::size_t LibraryUpdateSummary::total_added() const {
    std::size_t n = 0;
    for (const auto& [a, c] : added) n += c.first + c.second;
    return n;
}

std::string LibraryUpdateSummary::render() const {
    std::ostringstream s;
    s << "library version " << old_version << " -> " << new_version << ": " << total_added() << " entries added\n";
    for (const auto& [a, c] : added)
        if (c.first + c.second > 0) s << "  " << a << ": +" << c.first << " templates, +" << c.second << " fragments\n";
    return s.str();
}

namespace {

std::vector<CandidateRecord> confirmed_records(const std::string& run_dir) {
    auto store = RunStore::open(run_dir, false);
    auto records = load_records(*store, review_policy_of(*store));
    std::vector<CandidateRecord> confirmed;
    for (auto& r : records)
        if (r.status == CandidateStatus::Confirmed) confirmed.push_back(std::move(r));
    return confirmed;
}

}  // namespace

LibraryUpdateSummary library_update_from_run(const std::string& run_dir, const std::string& library_path,
                                             const TaxonomySet& taxonomy, Scorer& scorer, const UpdateOptions& options) {
    const auto confirmed = confirmed_records(run_dir);
    const FeatureLibrary lib = load_library(library_path);
    UpdateOptions o = options;
    if (o.run_id.empty()) o.run_id = RunStore::open(run_dir, false)->run_id();
    UpdateOutcome out = update_library(lib, confirmed, taxonomy, scorer, o);
    save_library(out.library, library_path);
    LibraryUpdateSummary s;
    s.old_version = lib.version;
    s.new_version = out.library.version;
    s.added = out.added;
    return s;
}

std::pair<std::string, std::string> export_figures(const std::string& run_dir, const FeatureLibrary& lib,
                                                   const TaxonomySet& taxonomy, Scorer& scorer) {
    const auto confirmed = confirmed_records(run_dir);
    UpdateOutcome out = update_library(lib, confirmed, taxonomy, scorer, UpdateOptions{});
    const fs::path dir = fs::path(run_dir) / "figures";
    fs::create_directories(dir);
    const std::string scores = (dir / "scores.csv").string();
    const std::string clusters = (dir / "clusters.csv").string();
    write_file_atomic(scores, token_scores_csv(out.divided));
    write_file_atomic(clusters, clusters_csv(out));
    return {scores, clusters};
}

}  // namespace leakaudit
