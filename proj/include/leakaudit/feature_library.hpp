#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "leakaudit/hint_bundle.hpp"
#include "leakaudit/scorer.hpp"
#include "leakaudit/taxonomy.hpp"
#include "leakaudit/verification.hpp"

namespace leakaudit {

struct Provenance {
    std::string source = "seed";  // "seed" | "mined"
    std::string run_id;
    std::string candidate_id;

    json to_json() const;
    static Provenance from_json(const json& j);
};

struct LibraryEntry {
    std::string text;
    Provenance provenance;
    std::optional<int> cluster;

    json to_json() const;
    static LibraryEntry from_json(const json& j);
};

struct AttributeLibrary {
    std::vector<LibraryEntry> templates;
    std::vector<LibraryEntry> fragments;
};

struct Prototype {
    std::vector<double> template_centroid;
    std::vector<double> fragment_centroid;
};

enum class EntryKind { Template, Fragment };

std::string_view to_string(EntryKind k);

enum class PrototypeMode { Mean, Medoid };

struct FeatureLibrary {
    std::uint64_t version = 0;
    std::string scorer_id;
    std::size_t dim = 0;
    std::map<std::string, AttributeLibrary> attributes;
    std::map<std::string, Prototype> prototypes;

    const std::vector<LibraryEntry>& entries(const std::string& attribute, EntryKind kind) const;
    bool contains(const std::string& attribute, EntryKind kind, std::string_view text) const;
    std::size_t size(const std::string& attribute, EntryKind kind) const;

    json to_json() const;
    static FeatureLibrary from_json(const json& j);
};

// Case- and whitespace-insensitive key used for the no-duplicates invariant.
std::string normalize_entry(std::string_view text);

// Seed document: {"attributes": {a: {"templates": [text | {text}], "fragments": [...]}}}.
// Every taxonomy attribute needs at least one template and one fragment; templates
// must hold a slot symbol and fragments none.
FeatureLibrary init_library(const json& seed_doc, const TaxonomySet& taxonomy, Scorer& scorer,
                            PrototypeMode mode = PrototypeMode::Mean);
FeatureLibrary init_library_file(const std::string& seed_path, const TaxonomySet& taxonomy, Scorer& scorer,
                                 PrototypeMode mode = PrototypeMode::Mean);

FeatureLibrary load_library(const std::string& path);
void save_library(const FeatureLibrary& lib, const std::string& path);

struct Division {
    std::string template_text;
    std::vector<std::string> fragments;      // quotes trimmed, as stored in the library
    std::vector<std::string> raw_fragments;  // exact source runs
    std::vector<std::size_t> slot_offsets;   // byte offsets of each slot in template_text
    std::vector<bool> is_template;           // per token
    double q1 = 0.0;

    // Reinserts the raw fragments at the slot positions.
    std::string reconstruct(std::string_view slot_symbol) const;
};

// Nearest-rank quantile: the value at 1-based index ceil(q*n) of the ascending sort.
double nearest_rank_quantile(std::vector<double> values, double q);

// Tokens with score <= Q1 form the template; maximal runs of the others become
// fragments, replaced in the template by the slot symbol. Whitespace at the edges
// of a run stays in the template. Throws invalid_argument for fewer than 2 tokens.
Division divide_instance(const TokenScoreSeq& s, std::string_view slot_symbol, double quantile = 0.25);

struct ClusterResult {
    std::vector<std::string> ids;                   // input ids, sorted
    std::vector<int> labels;                        // per id, kNoise for noise
    std::vector<std::vector<std::string>> clusters;
    std::vector<std::string> noise;
    std::vector<std::vector<double>> centroids;     // per cluster
    std::vector<std::optional<std::string>> assignment;  // per cluster
    double eps = 0.0;
    std::size_t min_pts = 4;
    std::string metric = "cosine";
};

struct EmbeddedEntry {
    std::string id;
    std::vector<double> vector;
};

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b);

// DBSCAN with cosine distance over entries sorted by id. Throws
// dimension_mismatch when vectors differ in length.
ClusterResult cluster_entries(std::vector<EmbeddedEntry> entries, double eps, std::size_t min_pts);

// eps from the elbow of the sorted (min_pts-1)-distance curve, floored at 1e-6.
double estimate_eps(const std::vector<EmbeddedEntry>& entries, std::size_t min_pts, double fallback = 0.15);

// Assigns each cluster to the attribute whose prototype is most similar to the
// centroid when that similarity reaches `threshold`.
void assign_clusters(ClusterResult& c, const std::map<std::string, std::vector<double>>& prototypes,
                     double threshold = 0.6);

struct UpdateOptions {
    std::string run_id;
    std::optional<double> eps;
    std::size_t min_pts = 4;
    double threshold = 0.6;
    double quantile = 0.25;
};

struct DividedInstance {
    std::string candidate_id;
    std::string attribute;
    TokenScoreSeq scores;
    Division division;
};

struct UpdateOutcome {
    FeatureLibrary library;
    std::map<std::string, std::pair<std::size_t, std::size_t>> added;  // attribute -> (templates, fragments)
    std::vector<DividedInstance> divided;
    std::map<EntryKind, ClusterResult> clusters;
    std::map<std::string, std::string> entry_attribute;  // clustered entry id -> attribute it came from
};

// Divides the enclosing source line of every Confirmed record, clusters the new
// entries together with the library's current entries per kind, and inserts the
// new members of assigned clusters into the assigned attribute. The input library
// is never modified; any failure propagates before a result exists.
UpdateOutcome update_library(const FeatureLibrary& lib, const std::vector<CandidateRecord>& confirmed,
                             const TaxonomySet& taxonomy, Scorer& scorer, const UpdateOptions& options = {});

HintBundle sample_hints(const FeatureLibrary& lib, const std::string& attribute, std::size_t n_tmp,
                        std::size_t n_frag, std::uint64_t seed);

std::string token_scores_csv(const std::vector<DividedInstance>& divided);
std::string clusters_csv(const UpdateOutcome& outcome);

}  // namespace leakaudit
