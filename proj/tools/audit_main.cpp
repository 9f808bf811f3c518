#include <csignal>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "leakaudit/feature_library.hpp"
#include "leakaudit/metrics_report.hpp"
#include "leakaudit/pipeline.hpp"
#include "leakaudit/question_gen.hpp"
#include "leakaudit/review_service.hpp"

namespace fs = std::filesystem;
using namespace leakaudit;

namespace {

std::shared_ptr<Scorer> scorer_for(const std::string& endpoint) {
    if (endpoint.empty()) return std::make_shared<CachingScorer>(std::make_shared<StubScorer>());
    return std::make_shared<CachingScorer>(std::make_shared<HttpScorerClient>(endpoint));
}

TaxonomySet taxonomy_of_run(const RunStore& store) {
    return load_run_taxonomy(RunConfig::from_json(store.config()));
}

void write_or_print(const std::string& out, const std::string& content) {
    if (out.empty()) std::cout << content;
    else write_file_atomic(out, content);
}

ReviewServer* active_server = nullptr;

void on_signal(int) {
    if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Privacy-leakage audit pipeline for code-generating LLMs"};
    app.require_subcommand(1);
    std::string store_dir = "runs";
    app.add_option("--store", store_dir, "Directory holding run stores")->capture_default_str();

    auto* run = app.add_subcommand("run", "Run the audit pipeline");
    std::string config_path, run_id_override;
    bool no_cgq = false, no_fl = false, no_tg = false, resume = false;
    run->add_option("--config", config_path, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
    run->add_flag("--no-cgq", no_cgq, "Use generic questions instead of scenario-conditioned ones");
    run->add_flag("--no-fl", no_fl, "Send no feature-library hints");
    run->add_flag("--no-tg", no_tg, "Ask for example data instead of unit tests");
    run->add_flag("--resume", resume, "Continue an interrupted run from its last checkpoint");
    run->add_option("--run-id", run_id_override, "Run id (overrides the config)");

    auto* questions = app.add_subcommand("questions", "Generate code-generation questions for one scenario");
    std::string q_config, q_scenario;
    std::vector<std::string> q_attributes;
    int q_n = 20;
    bool q_generic = false;
    questions->add_option("--config", q_config, "Run configuration providing the QuestionGen role")->required()->check(CLI::ExistingFile);
    questions->add_option("--scenario", q_scenario, "Scenario id")->required();
    questions->add_option("--attribute", q_attributes, "Attribute id (repeatable)")->required();
    questions->add_option("-n", q_n, "Number of questions")->capture_default_str();
    questions->add_flag("--generic", q_generic, "Emit the scenario-free stubs instead");

    auto* report = app.add_subcommand("report", "Render a run report");
    std::string r_run, r_format = "md", r_out;
    report->add_option("--run", r_run, "Run id or directory")->required();
    report->add_option("--format", r_format, "json, md or csv")->capture_default_str();
    report->add_option("--out", r_out, "Output file (default stdout)");

    auto* compare = app.add_subcommand("compare", "Compare confirmed sets of two runs");
    std::string c_run, c_ref, c_format = "md";
    compare->add_option("--run", c_run, "Run id or directory")->required();
    compare->add_option("--reference", c_ref, "Reference run id or directory")->required();
    compare->add_option("--format", c_format, "json, md or csv")->capture_default_str();

    auto* library = app.add_subcommand("library", "Manage the privacy feature library");
    library->require_subcommand(1);
    auto* lib_init = library->add_subcommand("init", "Initialize a library from a seed document");
    std::string li_seeds, li_out, li_taxonomy, scorer_endpoint;
    lib_init->add_option("--seeds", li_seeds, "Seed document (default: bundled)");
    lib_init->add_option("--out", li_out, "Library file to write")->required();
    lib_init->add_option("--taxonomy", li_taxonomy, "Taxonomy document (default: bundled)");
    lib_init->add_option("--scorer-endpoint", scorer_endpoint, "Scorer service URL (default: in-process stub)");
    auto* lib_update = library->add_subcommand("update", "Mine confirmed leaks of a run into the library");
    std::string lu_run, lu_library;
    std::optional<double> lu_eps;
    std::size_t lu_min_pts = 4;
    double lu_threshold = 0.6;
    lib_update->add_option("--from-run", lu_run, "Run id or directory")->required();
    lib_update->add_option("--library", lu_library, "Library file to update")->required()->check(CLI::ExistingFile);
    lib_update->add_option("--scorer-endpoint", scorer_endpoint, "Scorer service URL (default: in-process stub)");
    lib_update->add_option("--eps", lu_eps, "DBSCAN eps (default: k-distance elbow)");
    lib_update->add_option("--min-pts", lu_min_pts, "DBSCAN minPts")->capture_default_str();
    lib_update->add_option("--threshold", lu_threshold, "Prototype similarity threshold")->capture_default_str();

    auto* review = app.add_subcommand("review", "Human review of SearchInRange candidates");
    review->require_subcommand(1);
    auto* serve = review->add_subcommand("serve", "Serve the review API");
    std::string rv_run, rv_host = "127.0.0.1", rv_static;
    int rv_port = 8080;
    bool rv_unmask = false;
    serve->add_option("--run", rv_run, "Run id or directory")->required();
    serve->add_option("--port", rv_port, "Port")->capture_default_str();
    serve->add_option("--host", rv_host, "Bind address")->capture_default_str();
    serve->add_option("--static", rv_static, "Directory of UI assets served at /");
    serve->add_flag("--unmask", rv_unmask, "Expose raw values on the detail endpoint (local use only)");
    auto* apply = review->add_subcommand("apply", "Apply recorded reviewer decisions");
    std::string ra_run, ra_file;
    apply->add_option("--run", ra_run, "Run id or directory")->required();
    apply->add_option("--decisions", ra_file, "JSON array or JSON Lines of decisions")->required()->check(CLI::ExistingFile);

    auto* figures = app.add_subcommand("export-figures", "Write token-score and cluster CSVs for a run");
    std::string ef_run, ef_library;
    figures->add_option("--run", ef_run, "Run id or directory")->required();
    figures->add_option("--library", ef_library, "Library file (default: initialized from bundled seeds)");
    figures->add_option("--scorer-endpoint", scorer_endpoint, "Scorer service URL (default: in-process stub)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            RunConfig cfg = RunConfig::from_file(config_path);
            if (no_cgq) cfg.cgq = false;
            if (no_fl) cfg.fl = false;
            if (no_tg) cfg.tg = false;
            if (!run_id_override.empty()) cfg.run_id = run_id_override;
            if (app.get_option("--store")->count() > 0) cfg.store_dir = store_dir;
            PipelineDeps deps;
            deps.progress = [](const std::string& stage, const std::string& msg) {
                std::cerr << "[" << stage << "] " << msg << "\n";
            };
            RunResult r = run_audit(cfg, resume, deps);
            std::cout << r.run_id << "\n";
            return 0;
        }
        if (*questions) {
            RunConfig cfg = RunConfig::from_file(q_config);
            TaxonomySet taxonomy = load_run_taxonomy(cfg);
            std::vector<const AttributeSpec*> attrs;
            for (const auto& a : q_attributes) attrs.push_back(&taxonomy.attribute(a));
            const Scenario& s = taxonomy.scenario(q_scenario);
            std::vector<Question> qs;
            if (q_generic) {
                qs = generic_questions(s, attrs, q_n);
            } else {
                LlmGateway gateway(cfg.roles, make_providers(cfg),
                                   cfg.refusal_path.empty() ? RefusalDetector::from_file(default_data_dir() + "/refusal_phrases.txt")
                                                            : RefusalDetector::from_file(cfg.refusal_path));
                QuestionBatch b = generate_questions(gateway, s, attrs, q_n);
                if (b.refused) std::cerr << "question generator refused\n";
                qs = b.questions;
            }
            for (std::size_t i = 0; i < qs.size(); ++i) std::cout << (i + 1) << ". " << qs[i].text << "\n";
            return 0;
        }
        if (*report) {
            const ReportFormat fmt = report_format_from_string(r_format);
            auto store = RunStore::open(resolve_run_dir(store_dir, r_run), false);
            TaxonomySet taxonomy = taxonomy_of_run(*store);
            write_or_print(r_out, emit_report(build_report(load_snapshot(*store, taxonomy), taxonomy), fmt));
            return 0;
        }
        if (*compare) {
            const ReportFormat fmt = report_format_from_string(c_format);
            auto a = RunStore::open(resolve_run_dir(store_dir, c_run), false);
            auto b = RunStore::open(resolve_run_dir(store_dir, c_ref), false);
            TaxonomySet taxonomy = taxonomy_of_run(*a);
            std::cout << render_comparison(compare_runs(load_snapshot(*a, taxonomy), load_snapshot(*b, taxonomy)), fmt);
            return 0;
        }
        if (*lib_init) {
            TaxonomySet taxonomy = li_taxonomy.empty() ? load_default_taxonomy() : load_taxonomy_file(li_taxonomy);
            auto scorer = scorer_for(scorer_endpoint);
            FeatureLibrary lib = init_library_file(li_seeds.empty() ? default_data_dir() + "/seeds.json" : li_seeds, taxonomy, *scorer);
            save_library(lib, li_out);
            std::size_t t = 0, f = 0;
            for (const auto& [a, al] : lib.attributes) t += al.templates.size(), f += al.fragments.size();
            std::cout << "library version " << lib.version << ": " << t << " templates, " << f << " fragments\n";
            return 0;
        }
        if (*lib_update) {
            const std::string dir = resolve_run_dir(store_dir, lu_run);
            TaxonomySet taxonomy = taxonomy_of_run(*RunStore::open(dir, false));
            auto scorer = scorer_for(scorer_endpoint);
            UpdateOptions o;
            o.eps = lu_eps;
            o.min_pts = lu_min_pts;
            o.threshold = lu_threshold;
            std::cout << library_update_from_run(dir, lu_library, taxonomy, *scorer, o).render();
            return 0;
        }
        if (*serve) {
            const std::string dir = resolve_run_dir(store_dir, rv_run);
            TaxonomySet taxonomy = taxonomy_of_run(*RunStore::open(dir, false));
            ReviewService svc(dir, taxonomy, ReviewService::Options{rv_unmask});
            ReviewServer server(svc, rv_static);
            active_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "review API for run " << svc.run_id() << " on http://" << rv_host << ":" << rv_port << "\n";
            server.listen(rv_host, rv_port);
            active_server = nullptr;
            svc.write_reports();
            return 0;
        }
        if (*apply) {
            const std::string dir = resolve_run_dir(store_dir, ra_run);
            TaxonomySet taxonomy = taxonomy_of_run(*RunStore::open(dir, false));
            ReviewService svc(dir, taxonomy);
            const std::size_t n = apply_decisions_file(svc, ra_file);
            svc.write_reports();
            std::cout << n << " decisions applied\n";
            return 0;
        }
        if (*figures) {
            const std::string dir = resolve_run_dir(store_dir, ef_run);
            TaxonomySet taxonomy = taxonomy_of_run(*RunStore::open(dir, false));
            auto scorer = scorer_for(scorer_endpoint);
            FeatureLibrary lib = ef_library.empty()
                                     ? init_library_file(default_data_dir() + "/seeds.json", taxonomy, *scorer)
                                     : load_library(ef_library);
            auto [scores, clusters] = export_figures(dir, lib, taxonomy, *scorer);
            std::cout << scores << "\n" << clusters << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "audit: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "audit: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
