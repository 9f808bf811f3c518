#include "leakaudit/feature_library.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "leakaudit/dbscan.hpp"

namespace leakaudit {

std::string_view to_string(EntryKind k) { return k == EntryKind::Template ? "template" : "fragment"; }

json Provenance::to_json() const {
    json j{{"source", source}};
    if (source != "seed") {
        j["run_id"] = run_id;
        j["candidate_id"] = candidate_id;
    }
    return j;
}

Provenance Provenance::from_json(const json& j) {
    Provenance p;
    if (j.is_string()) {
        p.source = j.get<std::string>();
    } else if (j.is_object()) {
        p.source = j.value("source", std::string("seed"));
        p.run_id = j.value("run_id", std::string{});
        p.candidate_id = j.value("candidate_id", std::string{});
    }
    if (p.source != "seed" && p.source != "mined") throw Error(Errc::malformed, "unknown provenance '" + p.source + "'");
    return p;
}

json LibraryEntry::to_json() const {
    return {{"text", text}, {"provenance", provenance.to_json()}, {"cluster", cluster ? json(*cluster) : json(nullptr)}};
}

LibraryEntry LibraryEntry::from_json(const json& j) {
    LibraryEntry e;
    if (j.is_string()) {
        e.text = j.get<std::string>();
        return e;
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) throw Error(Errc::malformed, "library entry needs text");
    e.text = j["text"].get<std::string>();
    if (j.contains("provenance")) e.provenance = Provenance::from_json(j["provenance"]);
    if (j.contains("cluster") && j["cluster"].is_number_integer()) e.cluster = j["cluster"].get<int>();
    return e;
}

const std::vector<LibraryEntry>& FeatureLibrary::entries(const std::string& attribute, EntryKind kind) const {
    static const std::vector<LibraryEntry> none;
    auto it = attributes.find(attribute);
    if (it == attributes.end()) return none;
    return kind == EntryKind::Template ? it->second.templates : it->second.fragments;
}

std::string normalize_entry(std::string_view text) { return to_lower(collapse_whitespace(trim(text))); }

bool FeatureLibrary::contains(const std::string& attribute, EntryKind kind, std::string_view text) const {
    const std::string key = normalize_entry(text);
    for (const auto& e : entries(attribute, kind))
        if (normalize_entry(e.text) == key) return true;
    return false;
}

std::size_t FeatureLibrary::size(const std::string& attribute, EntryKind kind) const {
    return entries(attribute, kind).size();
}

json FeatureLibrary::to_json() const {
    json attrs = json::object();
    for (const auto& [a, lib] : attributes) {
        json t = json::array(), f = json::array();
        for (const auto& e : lib.templates) t.push_back(e.to_json());
        for (const auto& e : lib.fragments) f.push_back(e.to_json());
        attrs[a] = {{"templates", t}, {"fragments", f}};
    }
    json protos = json::object();
    for (const auto& [a, p] : prototypes)
        protos[a] = {{"template_centroid", p.template_centroid}, {"fragment_centroid", p.fragment_centroid}, {"dim", dim}};
    return {{"version", version}, {"scorer_id", scorer_id}, {"dim", dim}, {"attributes", attrs}, {"prototypes", protos}};
}

FeatureLibrary FeatureLibrary::from_json(const json& j) {
    try {
        FeatureLibrary lib;
        lib.version = j.at("version").get<std::uint64_t>();
        lib.scorer_id = j.value("scorer_id", std::string{});
        lib.dim = j.value("dim", std::size_t{0});
        for (const auto& [a, v] : j.at("attributes").items()) {
            auto& al = lib.attributes[a];
            for (const auto& e : v.value("templates", json::array())) al.templates.push_back(LibraryEntry::from_json(e));
            for (const auto& e : v.value("fragments", json::array())) al.fragments.push_back(LibraryEntry::from_json(e));
        }
        const json prototypes = j.value("prototypes", json::object());
        for (const auto& [a, v] : prototypes.items()) {
            Prototype p;
            p.template_centroid = v.value("template_centroid", std::vector<double>{});
            p.fragment_centroid = v.value("fragment_centroid", std::vector<double>{});
            if ((!p.template_centroid.empty() && p.template_centroid.size() != lib.dim) ||
                (!p.fragment_centroid.empty() && p.fragment_centroid.size() != lib.dim))
                throw Error(Errc::dimension_mismatch, "prototype for " + a);
            lib.prototypes[a] = std::move(p);
        }
        return lib;
    } catch (const json::exception& e) {
        throw Error(Errc::malformed, std::string("library: ") + e.what());
    }
}

namespace {

bool has_any_slot(std::string_view text, const TaxonomySet& taxonomy) {
    for (const auto& a : taxonomy.attributes())
        if (text.find(a.slot_symbol) != std::string_view::npos) return true;
    return false;
}

std::vector<double> prototype_of(const std::vector<std::vector<double>>& vs, PrototypeMode mode) {
    if (vs.empty()) return {};
    if (mode == PrototypeMode::Medoid) {
        std::size_t best = 0;
        double best_sum = INFINITY;
        for (std::size_t i = 0; i < vs.size(); ++i) {
            double sum = 0;
            for (const auto& w : vs) sum += cosine_distance(vs[i], w);
            if (sum < best_sum) {
                best_sum = sum;
                best = i;
            }
        }
        return vs[best];
    }
    std::vector<double> m(vs.front().size(), 0.0);
    for (const auto& v : vs) {
        if (v.size() != m.size()) throw Error(Errc::dimension_mismatch, "seed embeddings differ in length");
        for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
    }
    for (auto& x : m) x /= static_cast<double>(vs.size());
    return m;
}

}  // namespace

FeatureLibrary init_library(const json& seed_doc, const TaxonomySet& taxonomy, Scorer& scorer, PrototypeMode mode) {
    if (!seed_doc.is_object() || !seed_doc.contains("attributes") || !seed_doc["attributes"].is_object())
        throw Error(Errc::malformed, "seed document needs an attributes object");
    FeatureLibrary lib;
    lib.version = 1;
    lib.scorer_id = scorer.scorer_id();
    lib.dim = scorer.dim();
    for (const auto& [a, v] : seed_doc["attributes"].items()) {
        if (!taxonomy.find_attribute(a)) throw Error(Errc::unknown_reference, "seed attribute '" + a + "' not in taxonomy");
        auto& al = lib.attributes[a];
        auto load = [&](const char* key, std::vector<LibraryEntry>& out, EntryKind kind) {
            if (!v.contains(key) || !v[key].is_array()) throw Error(Errc::malformed, a + " seeds need " + key);
            for (const auto& e : v[key]) {
                LibraryEntry entry = LibraryEntry::from_json(e);
                entry.provenance = Provenance{};
                const bool slotted = has_any_slot(entry.text, taxonomy);
                if (kind == EntryKind::Template && !slotted)
                    throw Error(Errc::malformed, a + " template without slot symbol: " + entry.text);
                if (kind == EntryKind::Fragment && slotted)
                    throw Error(Errc::malformed, a + " fragment holds a slot symbol: " + entry.text);
                if (trim(entry.text).empty()) throw Error(Errc::malformed, a + " has an empty seed entry");
                const std::string key_norm = normalize_entry(entry.text);
                if (std::none_of(out.begin(), out.end(),
                                 [&](const LibraryEntry& x) { return normalize_entry(x.text) == key_norm; }))
                    out.push_back(std::move(entry));
            }
        };
        load("templates", al.templates, EntryKind::Template);
        load("fragments", al.fragments, EntryKind::Fragment);
    }
    for (const auto& a : taxonomy.attributes()) {
        auto it = lib.attributes.find(a.id);
        if (it == lib.attributes.end() || it->second.templates.empty() || it->second.fragments.empty())
            throw Error(Errc::malformed, "attribute " + a.id + " has empty seeds");
    }
    for (const auto& [a, al] : lib.attributes) {
        std::vector<std::vector<double>> t, f;
        for (const auto& e : al.templates) t.push_back(scorer.embed(e.text));
        for (const auto& e : al.fragments) f.push_back(scorer.embed(e.text));
        lib.prototypes[a] = Prototype{prototype_of(t, mode), prototype_of(f, mode)};
    }
    return lib;
}

FeatureLibrary init_library_file(const std::string& seed_path, const TaxonomySet& taxonomy, Scorer& scorer,
                                 PrototypeMode mode) {
    json doc;
    try {
        doc = json::parse(read_file(seed_path));
    } catch (const json::exception& e) {
        throw Error(Errc::malformed, seed_path + ": " + e.what());
    }
    return init_library(doc, taxonomy, scorer, mode);
}

FeatureLibrary load_library(const std::string& path) {
    try {
        return FeatureLibrary::from_json(json::parse(read_file(path)));
    } catch (const json::exception& e) {
        throw Error(Errc::malformed, path + ": " + e.what());
    }
}

void save_library(const FeatureLibrary& lib, const std::string& path) { write_file_atomic(path, lib.to_json().dump(2) + "\n"); }

double nearest_rank_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw Error(Errc::invalid_argument, "quantile of empty sequence");
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    auto idx = static_cast<std::size_t>(std::ceil(q * n - 1e-9));
    idx = std::clamp<std::size_t>(idx, 1, values.size());
    return values[idx - 1];
}

std::string Division::reconstruct(std::string_view slot_symbol) const {
    std::string out;
    std::size_t prev = 0;
    for (std::size_t k = 0; k < slot_offsets.size(); ++k) {
        out.append(template_text, prev, slot_offsets[k] - prev);
        out.append(raw_fragments.at(k));
        prev = slot_offsets[k] + slot_symbol.size();
    }
    out.append(template_text, prev, std::string::npos);
    return out;
}

namespace {

std::string strip_quotes(std::string_view s) {
    std::string t = trim(s);
    if (t.size() >= 2 && t.front() == t.back() && (t.front() == '\'' || t.front() == '"' || t.front() == '`')) {
        std::string inner = trim(std::string_view(t).substr(1, t.size() - 2));
        if (!inner.empty()) return inner;
    }
    return t;
}

}  // namespace

Division divide_instance(const TokenScoreSeq& s, std::string_view slot_symbol, double quantile) {
    s.validate();
    const std::size_t n = s.tokens.size();
    if (n < 2) throw Error(Errc::invalid_argument, "division needs at least 2 tokens");
    Division d;
    d.q1 = nearest_rank_quantile(s.nll, quantile);
    d.is_template.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.is_template[i] = s.nll[i] <= d.q1;

    auto piece = [&](std::size_t i) {
        const std::size_t from = i == 0 ? 0 : s.tokens[i - 1].end;
        return std::string_view(s.text).substr(from, s.tokens[i].end - from);
    };
    std::size_t i = 0;
    while (i < n) {
        if (d.is_template[i]) {
            d.template_text.append(piece(i));
            ++i;
            continue;
        }
        std::string run;
        while (i < n && !d.is_template[i]) run.append(piece(i++));
        std::size_t a = 0, b = run.size();
        while (a < b && std::isspace(static_cast<unsigned char>(run[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(run[b - 1]))) --b;
        if (a == b) {
            d.template_text.append(run);
            continue;
        }
        d.template_text.append(run, 0, a);
        d.slot_offsets.push_back(d.template_text.size());
        d.template_text.append(slot_symbol);
        d.template_text.append(run, b, std::string::npos);
        d.raw_fragments.push_back(run.substr(a, b - a));
        d.fragments.push_back(strip_quotes(d.raw_fragments.back()));
    }
    d.template_text.append(s.text, s.tokens.back().end, std::string::npos);
    return d;
}

double cosine_distance(const std::vector<double>& a, const std::vector<double>& b) {
    return 1.0 - cosine_similarity(a, b);
}

ClusterResult cluster_entries(std::vector<EmbeddedEntry> entries, double eps, std::size_t min_pts) {
    if (!(eps > 0)) throw Error(Errc::invalid_argument, "eps must be positive");
    if (min_pts < 2) throw Error(Errc::invalid_argument, "minPts must be at least 2");
    std::sort(entries.begin(), entries.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
    for (const auto& e : entries)
        if (e.vector.size() != entries.front().vector.size())
            throw Error(Errc::dimension_mismatch, e.id + " has dimension " + std::to_string(e.vector.size()));

    ClusterResult r;
    r.eps = eps;
    r.min_pts = min_pts;
    for (const auto& e : entries) r.ids.push_back(e.id);
    r.labels = dbscan(
        entries.size(), [&](std::size_t i, std::size_t j) { return cosine_distance(entries[i].vector, entries[j].vector); },
        eps, min_pts);
    int clusters = 0;
    for (int l : r.labels) clusters = std::max(clusters, l + 1);
    r.clusters.resize(static_cast<std::size_t>(clusters));
    r.centroids.assign(static_cast<std::size_t>(clusters), std::vector<double>(entries.empty() ? 0 : entries.front().vector.size(), 0.0));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (r.labels[i] == kNoise) {
            r.noise.push_back(entries[i].id);
            continue;
        }
        const auto c = static_cast<std::size_t>(r.labels[i]);
        r.clusters[c].push_back(entries[i].id);
        for (std::size_t k = 0; k < entries[i].vector.size(); ++k) r.centroids[c][k] += entries[i].vector[k];
    }
    for (std::size_t c = 0; c < r.clusters.size(); ++c)
        for (auto& x : r.centroids[c]) x /= static_cast<double>(r.clusters[c].size());
    r.assignment.assign(r.clusters.size(), std::nullopt);
    return r;
}

double estimate_eps(const std::vector<EmbeddedEntry>& entries, std::size_t min_pts, double fallback) {
    const std::size_t k = min_pts > 1 ? min_pts - 1 : 1;
    auto d = k_distances(
        entries.size(), [&](std::size_t i, std::size_t j) { return cosine_distance(entries[i].vector, entries[j].vector); }, k);
    if (d.empty()) return fallback;
    return std::max(elbow_value(d), 1e-6);
}

void assign_clusters(ClusterResult& c, const std::map<std::string, std::vector<double>>& prototypes, double threshold) {
    c.assignment.assign(c.clusters.size(), std::nullopt);
    for (std::size_t k = 0; k < c.clusters.size(); ++k) {
        double best = -INFINITY;
        std::optional<std::string> best_attr;
        for (const auto& [a, p] : prototypes) {
            if (p.empty()) continue;
            const double sim = cosine_similarity(c.centroids[k], p);
            if (sim > best) {
                best = sim;
                best_attr = a;
            }
        }
        if (best_attr && best >= threshold) c.assignment[k] = best_attr;
    }
}

UpdateOutcome update_library(const FeatureLibrary& lib, const std::vector<CandidateRecord>& confirmed,
                             const TaxonomySet& taxonomy, Scorer& scorer, const UpdateOptions& options) {
    UpdateOutcome out;
    out.library = lib;
    if (lib.prototypes.empty()) throw Error(Errc::config, "library has no prototypes; initialize it from seeds first");

    struct NewEntry {
        std::string text;
        std::string candidate_id;
        std::string attribute;
    };
    std::map<EntryKind, std::vector<NewEntry>> fresh;
    for (const auto& rec : confirmed) {
        if (rec.status != CandidateStatus::Confirmed)
            throw Error(Errc::invalid_argument, "record " + rec.candidate.id + " is not Confirmed");
        const auto& a = taxonomy.attribute(rec.candidate.attribute);
        std::string line = trim(rec.candidate.context_line);
        if (line.empty()) line = rec.candidate.value;
        TokenScoreSeq seq = score_tokens(scorer, line, rec.candidate.id);
        if (seq.tokens.size() < 2) continue;
        Division div = divide_instance(seq, a.slot_symbol, options.quantile);
        if (!div.fragments.empty()) {
            fresh[EntryKind::Template].push_back({div.template_text, rec.candidate.id, a.id});
            for (const auto& f : div.fragments) fresh[EntryKind::Fragment].push_back({f, rec.candidate.id, a.id});
        }
        out.divided.push_back({rec.candidate.id, a.id, std::move(seq), std::move(div)});
    }

    for (EntryKind kind : {EntryKind::Template, EntryKind::Fragment}) {
        const auto& news = fresh[kind];
        if (news.empty()) continue;
        std::vector<EmbeddedEntry> pool;
        std::map<std::string, const NewEntry*> new_by_id;
        char buf[32];
        for (const auto& [a, al] : lib.attributes) {
            const auto& es = kind == EntryKind::Template ? al.templates : al.fragments;
            for (std::size_t i = 0; i < es.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%05zu", i);
                std::string id = "lib:" + a + ":" + std::string(to_string(kind)) + ":" + buf;
                pool.push_back({id, scorer.embed(es[i].text)});
                out.entry_attribute[id] = a;
            }
        }
        for (std::size_t i = 0; i < news.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%05zu", i);
            std::string id = "new:" + std::string(to_string(kind)) + ":" + buf;
            pool.push_back({id, scorer.embed(news[i].text)});
            new_by_id[id] = &news[i];
            out.entry_attribute[id] = news[i].attribute;
        }
        for (const auto& e : pool)
            if (e.vector.size() != lib.dim)
                throw Error(Errc::dimension_mismatch, "embedding of " + e.id + " has dimension " + std::to_string(e.vector.size()));

        const double eps = options.eps ? *options.eps : estimate_eps(pool, options.min_pts);
        ClusterResult cr = cluster_entries(pool, eps, options.min_pts);
        std::map<std::string, std::vector<double>> protos;
        for (const auto& [a, p] : lib.prototypes)
            protos[a] = kind == EntryKind::Template ? p.template_centroid : p.fragment_centroid;
        assign_clusters(cr, protos, options.threshold);

        for (std::size_t c = 0; c < cr.clusters.size(); ++c) {
            if (!cr.assignment[c]) continue;
            const std::string& target = *cr.assignment[c];
            for (const auto& id : cr.clusters[c]) {
                auto it = new_by_id.find(id);
                if (it == new_by_id.end()) continue;
                if (out.library.contains(target, kind, it->second->text)) continue;
                LibraryEntry e;
                e.text = it->second->text;
                e.provenance = Provenance{"mined", options.run_id, it->second->candidate_id};
                e.cluster = static_cast<int>(c);
                auto& al = out.library.attributes[target];
                (kind == EntryKind::Template ? al.templates : al.fragments).push_back(std::move(e));
                auto& counts = out.added[target];
                (kind == EntryKind::Template ? counts.first : counts.second) += 1;
            }
        }
        out.clusters[kind] = std::move(cr);
    }
    out.library.version = lib.version + 1;
    return out;
}

HintBundle sample_hints(const FeatureLibrary& lib, const std::string& attribute, std::size_t n_tmp,
                        std::size_t n_frag, std::uint64_t seed) {
    HintBundle b;
    std::mt19937_64 rng(seed);
    auto draw = [&](EntryKind kind, std::size_t n, std::vector<HintBundle::Entry>& out) {
        const auto& es = lib.entries(attribute, kind);
        std::vector<const LibraryEntry*> picked;
        std::vector<const LibraryEntry*> all;
        for (const auto& e : es) all.push_back(&e);
        std::sample(all.begin(), all.end(), std::back_inserter(picked), std::min(n, all.size()), rng);
        for (const auto* e : picked) out.push_back({attribute, e->text});
    };
    draw(EntryKind::Template, n_tmp, b.templates);
    draw(EntryKind::Fragment, n_frag, b.fragments);
    return b;
}

std::string token_scores_csv(const std::vector<DividedInstance>& divided) {
    std::ostringstream s;
    s << "instance_id,token,nll,kind\n";
    for (const auto& d : divided) {
        for (std::size_t i = 0; i < d.scores.tokens.size(); ++i) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.6f", d.scores.nll[i]);
            s << csv_field(d.candidate_id) << "," << csv_field(d.scores.tokens[i].text) << "," << buf << ","
              << (d.division.is_template[i] ? "template" : "fragment") << "\n";
        }
    }
    return s.str();
}

std::string clusters_csv(const UpdateOutcome& outcome) {
    std::ostringstream s;
    s << "entry_id,attribute,cluster,is_noise\n";
    for (const auto& [kind, cr] : outcome.clusters) {
        for (std::size_t i = 0; i < cr.ids.size(); ++i) {
            const int l = cr.labels[i];
            std::string attr;
            if (l != kNoise && cr.assignment[static_cast<std::size_t>(l)]) attr = *cr.assignment[static_cast<std::size_t>(l)];
            s << csv_field(cr.ids[i]) << "," << csv_field(attr) << "," << (l == kNoise ? std::string{} : std::to_string(l))
              << "," << (l == kNoise ? "true" : "false") << "\n";
        }
    }
    return s.str();
}

}  // namespace leakaudit
