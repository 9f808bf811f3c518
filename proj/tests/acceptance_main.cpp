// One PASS/FAIL line per acceptance criterion. Runs offline: mock LLM provider,
// fixture search client, stub scorer.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "leakaudit/dbscan.hpp"
#include "leakaudit/feature_library.hpp"
#include "leakaudit/metrics_report.hpp"
#include "leakaudit/pipeline.hpp"
#include "leakaudit/review_service.hpp"
#include "test_support.hpp"

using namespace leakaudit;
using leakaudit::testing::fixture;
using leakaudit::testing::golden_config;
using leakaudit::testing::TempDir;

namespace {

struct Failure {
    std::string what;
};

void check(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

template <class A, class B>
void check_eq(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) {
        std::ostringstream s;
        s << what << ": got " << got << ", want " << want;
        throw Failure{s.str()};
    }
}

const TaxonomySet& tax() {
    static const TaxonomySet t = load_default_taxonomy();
    return t;
}

// permille

void permille_accepted() {
    struct Row {
        std::int64_t accepted, confirmed;
        const char* want;
    };
    for (const Row& r : {Row{352, 7, "19.9"}, Row{400, 15, "37.5"}, Row{214, 4, "18.7"}, Row{4294, 123, "28.6"}}) {
        AttributeFunnel f;
        f.accepted = r.accepted;
        f.confirmed = r.confirmed;
        check_eq(format1(f.permille_accepted()), std::string(r.want),
                 std::to_string(r.confirmed) + "/" + std::to_string(r.accepted));
    }
    AttributeFunnel f;
    f.accepted = 4294;
    f.confirmed = 123;
    RunReport rep;
    rep.funnel.total = f;
    rep.funnel.attributes["Email"] = f;
    check(emit_report(rep, ReportFormat::Csv).find("\nTotal,0,4294,0,0,0,0,0,123,0,0,0,28.6,0.0\n") != std::string::npos,
          "CSV total row");
}

void permille_planned() {
    check_eq(format1(permille(105.7, 6000)), std::string("17.6"), "105.7/6000");
    check_eq(format1(permille(79.5, 6000)), std::string("13.3"), "79.5/6000");
}

// lifecycle

void search_threshold() {
    using S = CandidateStatus;
    const std::vector<std::pair<std::int64_t, S>> cases = {
        {0, S::SearchZero}, {1, S::SearchInRange}, {50, S::SearchInRange}, {100, S::SearchInRange}, {101, S::SearchOverflow}};
    for (const auto& [k, want] : cases) {
        CandidateRecord r;
        apply_judge_verdict(r, true);
        apply_search_threshold(r, k);
        check_eq(std::string(to_string(r.status)), std::string(to_string(want)), "k=" + std::to_string(k));
    }
}

void lifecycle() {
    using S = CandidateStatus;
    const std::vector<S> all = {S::Extracted,     S::JudgeRejected, S::JudgePassed, S::SearchZero, S::SearchOverflow,
                                S::SearchInRange, S::Confirmed,     S::Potential,   S::Rejected};
    const std::set<std::pair<S, S>> legal = {
        {S::Extracted, S::JudgeRejected},      {S::Extracted, S::JudgePassed},       {S::JudgePassed, S::SearchZero},
        {S::JudgePassed, S::SearchOverflow},   {S::JudgePassed, S::SearchInRange},   {S::SearchInRange, S::Confirmed},
        {S::SearchInRange, S::Potential},      {S::SearchInRange, S::Rejected}};
    for (S a : all)
        for (S b : all)
            check_eq(is_legal_transition(a, b), legal.count({a, b}) > 0,
                     "transition " + std::string(to_string(a)) + "->" + std::string(to_string(b)));

    std::mt19937_64 rng(20240607);
    for (int seq = 0; seq < 10000; ++seq) {
        CandidateRecord r;
        const int steps = 1 + static_cast<int>(rng() % 8);
        for (int i = 0; i < steps; ++i) {
            const S before = r.status;
            const auto version = r.version;
            const int op = static_cast<int>(rng() % 3);
            try {
                if (op == 0) apply_judge_verdict(r, rng() % 3 != 0);
                else if (op == 1) apply_search_threshold(r, static_cast<std::int64_t>(rng() % 140));
                else {
                    ReviewDecision d;
                    d.reviewer = std::string(1, static_cast<char>('a' + rng() % 3));
                    d.decision = static_cast<ReviewDecisionKind>(rng() % 3);
                    record_review_decision(r, d);
                }
                check(r.version == version + 1, "version not bumped");
                if (r.status != before) check(legal.count({before, r.status}) > 0, "illegal transition taken");
            } catch (const Error&) {
                check(r.status == before && r.version == version, "failed operation changed the record");
            }
            if (r.status == S::Confirmed) {
                int confirms = 0;
                for (const auto& d : r.decisions) confirms += d.decision == ReviewDecisionKind::Confirm;
                check(confirms >= 2, "Confirmed without quorum");
            }
            bool any_reject = false;
            for (const auto& d : r.decisions) any_reject |= d.decision == ReviewDecisionKind::Reject;
            if (any_reject) check(r.status == S::Rejected, "reject did not win");
        }
    }
}

// division

TokenScoreSeq random_seq(std::mt19937_64& rng, std::size_t n, bool distinct) {
    static const std::vector<std::string> pieces = {"user", ".", "email", " =", " '", "li", "@", "qq", "com", "'",
                                                    "(", ")", " ", "  x", "\n", ",", "é", " 42"};
    TokenScoreSeq s;
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = distinct ? static_cast<double>(i) + 0.5 : static_cast<double>(rng() % 4);
    std::shuffle(scores.begin(), scores.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (rng() % 4 == 0) s.text += " ";
        ScoredToken t;
        t.start = s.text.size();
        std::string p = pieces[rng() % pieces.size()];
        if (i == 0 || p == " " || p == "\n") p = "t" + std::to_string(i);
        s.text += p;
        t.end = s.text.size();
        t.text = p;
        s.tokens.push_back(t);
    }
    if (rng() % 3 == 0) s.text += "  ";
    s.nll = scores;
    return s;
}

void division() {
    std::mt19937_64 rng(7);
    const std::string slot = "⟨EMAIL⟩";
    for (int k = 0; k < 500; ++k) {
        const std::size_t n = 2 + rng() % 40;
        const bool distinct = k % 2 == 0;
        auto s = random_seq(rng, n, distinct);
        auto d = divide_instance(s, slot);
        check_eq(d.reconstruct(slot), s.text, "reconstruction of instance " + std::to_string(k));
        check(d.is_template.size() == n, "partition size");
        check(d.fragments.size() == d.slot_offsets.size(), "one slot per fragment");
        for (std::size_t i = 0; i < n; ++i) check(d.is_template[i] == (s.nll[i] <= d.q1), "partition rule");
        if (distinct) {
            const auto t = static_cast<std::size_t>(std::count(d.is_template.begin(), d.is_template.end(), true));
            check_eq(t, static_cast<std::size_t>((n + 3) / 4), "template count for n=" + std::to_string(n));
        }
    }
    StubScorer scorer;
    auto seq = score_tokens(scorer, "user.email = 'li.ming@qq.com'");
    auto d = divide_instance(seq, slot);
    check_eq(d.template_text, std::string("user.email = ⟨EMAIL⟩"), "worked template");
    check(d.fragments == std::vector<std::string>{"li.ming@qq.com"}, "worked fragment");
}

// DBSCAN

struct UnionFind {
    std::vector<std::size_t> p;
    explicit UnionFind(std::size_t n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    std::size_t find(std::size_t x) { return p[x] == x ? x : p[x] = find(p[x]); }
    void unite(std::size_t a, std::size_t b) { p[find(a)] = find(b); }
};

void dbscan_oracle() {
    std::mt19937_64 rng(99);
    for (int inst = 0; inst < 50; ++inst) {
        const std::size_t n = 1 + rng() % 200;
        const std::size_t min_pts = 2 + rng() % 5;
        const double eps = 0.05 + 0.1 * static_cast<double>(rng() % 100) / 100.0;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const std::size_t centers = 1 + rng() % 5;
        std::vector<std::pair<double, double>> c(centers), pts(n);
        for (auto& x : c) x = {u(rng), u(rng)};
        std::normal_distribution<double> jitter(0.0, 0.05);
        for (auto& p : pts) {
            if (rng() % 5 == 0) p = {u(rng), u(rng)};
            else {
                const auto& k = c[rng() % centers];
                p = {k.first + jitter(rng), k.second + jitter(rng)};
            }
        }
        auto dist = [&](std::size_t i, std::size_t j) { return std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second); };
        const auto labels = dbscan(n, dist, eps, min_pts);

        std::vector<bool> core(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t m = 0;
            for (std::size_t j = 0; j < n; ++j) m += dist(i, j) <= eps;
            core[i] = m >= min_pts;
        }
        UnionFind uf(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (core[i] && core[j] && dist(i, j) <= eps) uf.unite(i, j);
        // core points: same oracle component iff same label
        for (std::size_t i = 0; i < n; ++i) {
            if (!core[i]) continue;
            check(labels[i] != kNoise, "core point labelled noise");
            for (std::size_t j = i + 1; j < n; ++j)
                if (core[j]) check((uf.find(i) == uf.find(j)) == (labels[i] == labels[j]), "core membership differs");
        }
        // border points: in the cluster of some core neighbour; noise iff none
        for (std::size_t i = 0; i < n; ++i) {
            if (core[i]) continue;
            bool has_core = false, matches = false;
            for (std::size_t j = 0; j < n; ++j)
                if (core[j] && dist(i, j) <= eps) {
                    has_core = true;
                    matches |= labels[j] == labels[i];
                }
            check(has_core ? matches : labels[i] == kNoise, "border membership differs");
        }
    }
    // the cosine front end agrees with the template on a small instance
    std::vector<EmbeddedEntry> es;
    for (int i = 0; i < 5; ++i) es.push_back({"a" + std::to_string(i), {1.0, 0.01 * i}});
    for (int i = 0; i < 5; ++i) es.push_back({"b" + std::to_string(i), {0.01 * i, 1.0}});
    es.push_back({"z", {1.0, 1.0}});
    auto r = cluster_entries(es, 0.01, 3);
    check_eq(r.clusters.size(), std::size_t{2}, "cosine clusters");
    check(r.noise == std::vector<std::string>{"z"}, "cosine noise");
}

// LP / IL

void lp_il() {
    std::mt19937_64 rng(2024);
    const std::vector<std::string> attrs = {"Email", "PhoneNumber", "Name", "Password", "SecretKey", "MedicalRecord"};
    const std::vector<CandidateStatus> statuses = {CandidateStatus::Confirmed, CandidateStatus::Confirmed,
                                                   CandidateStatus::Potential, CandidateStatus::SearchZero,
                                                   CandidateStatus::Rejected};
    for (int runno = 0; runno < 100; ++runno) {
        RunSnapshot run;
        const std::size_t tests = 1 + rng() % 60;
        for (std::size_t t = 0; t < tests; ++t) run.accepted_test_ids.push_back("t" + std::to_string(t));
        const std::size_t nrec = rng() % 120;
        for (std::size_t i = 0; i < nrec; ++i) {
            CandidateRecord r;
            r.candidate.id = "c" + std::to_string(i);
            r.candidate.test_case_id = "t" + std::to_string(rng() % (tests + 2));
            r.candidate.attribute = attrs[rng() % attrs.size()];
            r.candidate.record_group = "g" + std::to_string(rng() % 3);
            r.status = statuses[rng() % statuses.size()];
            run.records.push_back(r);
        }
        for (std::size_t i = 0; i < nrec / 4 && nrec > 0; ++i) {
            const auto& kept = run.records[rng() % nrec];
            run.duplicates.push_back({"d" + std::to_string(i), kept.candidate.id, kept.candidate.attribute, "k",
                                      "t" + std::to_string(rng() % tests), "g" + std::to_string(rng() % 3)});
        }
        const auto units = leak_units(run, tax());

        std::vector<std::optional<PrivacyCategory>> cats = {std::nullopt};
        for (auto c : tax().categories()) cats.push_back(c);
        for (const auto& cat : cats) {
            auto counts = [&](const std::string& test, std::optional<std::string> group) {
                int n = 0;
                std::set<std::string> confirmed;
                for (const auto& r : run.records)
                    if (r.status == CandidateStatus::Confirmed) confirmed.insert(r.candidate.id);
                auto in = [&](const std::string& a) { return !cat || tax().attribute(a).category == *cat; };
                for (const auto& r : run.records)
                    if (r.status == CandidateStatus::Confirmed && r.candidate.test_case_id == test &&
                        in(r.candidate.attribute) && (!group || r.candidate.record_group == *group))
                        ++n;
                for (const auto& d : run.duplicates)
                    if (confirmed.count(d.kept_id) && d.test_case_id == test && in(d.attribute) &&
                        (!group || d.record_group == *group))
                        ++n;
                return n;
            };
            double prev = 1e9;
            for (int level = 1; level <= 3; ++level) {
                int lp_hits = 0, il_hits = 0;
                for (const auto& t : run.accepted_test_ids) {
                    lp_hits += counts(t, std::nullopt) >= level;
                    bool il = false;
                    for (const char* g : {"g0", "g1", "g2"}) il |= counts(t, std::string(g)) >= level;
                    il_hits += il;
                }
                const double lp = leak_proportion(units, cat, level);
                check(std::fabs(lp - permille(lp_hits, static_cast<double>(tests))) < 1e-9, "LP recount");
                check(lp <= prev + 1e-12, "LP monotonicity");
                prev = lp;
                if (level >= 2) {
                    const double il = interconnected_leakage(units, cat, level);
                    check(std::fabs(il - permille(il_hits, static_cast<double>(tests))) < 1e-9, "IL recount");
                    check(il <= lp + 1e-12, "IL bounded by LP");
                }
            }
        }
    }
}

void comparison() {
    auto half = compare_sets({{"E", "a"}, {"E", "b"}}, {{"E", "b"}, {"E", "c"}});
    check(half.pp == 50.0 && half.pr == 50.0 && half.pf1 == 50.0, "{a,b} vs {b,c}");
    std::set<ConfirmedKey> same = {{"E", "a"}, {"P", "b"}, {"E", "c"}};
    auto full = compare_sets(same, same);
    check(full.pp == 100.0 && full.pr == 100.0 && full.pf1 == 100.0, "identical sets");
}

// end to end

std::string apply_golden_decisions(const std::string& dir) {
    {
        ReviewService svc(dir, tax());
        apply_decisions_file(svc, fixture("golden_decisions.jsonl"));
        svc.write_reports();
    }
    auto store = RunStore::open(dir, false);
    return emit_report(build_report(load_snapshot(*store, tax()), tax()), ReportFormat::Csv);
}

void golden() {
    TempDir tmp;
    auto r = run_audit(golden_config(tmp.str()));
    check_eq(apply_golden_decisions(r.dir), read_file(fixture("golden_funnel.csv")), "funnel table");
    const json report = json::parse(read_file(r.dir + "/report.json"));
    check(report["confirmed"] == json::parse(read_file(fixture("golden_confirmed.json"))), "confirmed set");
}

void masking() {
    check_eq(mask_value("george.thompson@outlook.com", tax().attribute("Email")), std::string("george.t*******@outlook.com"),
             "email mask");
    check_eq(mask_value("+86 138 4411 5022", tax().attribute("PhoneNumber")), std::string("+86 138 *****022"), "phone mask");
    TempDir tmp;
    auto r = run_audit(golden_config(tmp.str()));
    apply_golden_decisions(r.dir);
    auto store = RunStore::open(r.dir, false);
    std::vector<std::string> raw;
    for (const auto& c : store->read("candidates")) raw.push_back(c.at("value").get<std::string>());
    check(!raw.empty(), "fixture run extracted nothing");
    int files = 0;
    for (const auto& e : std::filesystem::directory_iterator(r.dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("report", 0) != 0) continue;
        ++files;
        const std::string body = read_file(e.path().string());
        for (const auto& v : raw) check(body.find(v) == std::string::npos, name + " contains a raw value");
    }
    check(files >= 2, "report files missing");
}

std::set<std::string> keys_of(const json& j) {
    std::set<std::string> k;
    for (const auto& [key, v] : j.items()) k.insert(key);
    return k;
}

void ablations() {
    TempDir tmp;
    auto base = run_audit(golden_config(tmp.str(), "base"));
    auto cfg = golden_config(tmp.str(), "nofl");
    cfg.fl = false;
    auto nofl = run_audit(cfg);
    cfg = golden_config(tmp.str(), "notg");
    cfg.tg = false;
    auto notg = run_audit(cfg);

    auto fl_prompts = RunStore::open(nofl.dir, false)->read("test_prompts");
    check(!fl_prompts.empty(), "no test prompts recorded");
    for (const auto& p : fl_prompts) check(HintBundle::from_json(p.at("hints")).empty(), "hints present without the library");
    for (const auto& p : RunStore::open(notg.dir, false)->read("test_prompts"))
        check(p.at("kind") == "example_data", "unit-test prompt issued without test generation");

    auto base_store = RunStore::open(base.dir, false);
    for (const auto* dir : {&nofl.dir, &notg.dir}) {
        auto other = RunStore::open(*dir, false);
        for (const auto& s : store_streams()) {
            auto a = base_store->read(s), b = other->read(s);
            if (a.empty() || b.empty()) continue;
            check(keys_of(a.front()) == keys_of(b.front()), "schema of " + s + " changed");
        }
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
        {"permille arithmetic over accepted tests", permille_accepted},
        {"permille arithmetic over planned tests", permille_planned},
        {"search hit-count threshold", search_threshold},
        {"candidate lifecycle property suite", lifecycle},
        {"template/fragment division suite", division},
        {"DBSCAN against density-reachability oracle", dbscan_oracle},
        {"LP/IL recount and monotonicity", lp_il},
        {"PP/PR/PF1 set comparison", comparison},
        {"end-to-end golden fixture", golden},
        {"masking and report grep", masking},
        {"ablation semantics", ablations},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        std::string error;
        try {
            fn();
        } catch (const Failure& f) {
            error = f.what;
        } catch (const std::exception& e) {
            error = std::string("exception: ") + e.what();
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
        if (error.empty()) {
            std::printf("PASS  %-45s %6lld ms\n", name.c_str(), static_cast<long long>(ms));
        } else {
            ++failed;
            std::printf("FAIL  %-45s %6lld ms  %s\n", name.c_str(), static_cast<long long>(ms), error.c_str());
        }
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
