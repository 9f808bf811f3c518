#include "leakaudit/run_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>

namespace fs = std::filesystem;

namespace leakaudit {

namespace {

struct ParsedLine {
    std::string id;
    json data;
};

ParsedLine parse_envelope(const std::string& line, const std::string& stage, const std::string& run_id,
                          const std::string& where) {
    json env;
    try {
        env = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, where + ": " + e.what());
    }
    if (!env.is_object() || !env.contains("id") || !env.contains("data") || !env.contains("hash"))
        throw Error(Errc::store_corrupt, where + ": envelope fields missing");
    if (env.value("stage", std::string{}) != stage || env.value("run_id", std::string{}) != run_id)
        throw Error(Errc::store_corrupt, where + ": envelope belongs to another stream");
    if (env["hash"].get<std::string>() != sha256_hex(env["data"].dump()))
        throw Error(Errc::store_corrupt, where + ": content hash mismatch");
    return {env["id"].get<std::string>(), std::move(env["data"])};
}

// Complete lines of a stream file and the byte length they cover.
std::pair<std::vector<std::string>, std::size_t> complete_lines(const std::string& path) {
    std::vector<std::string> lines;
    if (!fs::exists(path)) return {lines, 0};
    const std::string content = read_file(path);
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string::npos) break;
        if (nl > pos) lines.push_back(content.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return {lines, pos};
}

}  // namespace

RunStore::RunStore(std::string dir, bool writable) : dir_(std::move(dir)), writable_(writable) {}

RunStore::~RunStore() {
    out_.clear();
    if (lock_fd_ >= 0) {
        ::flock(lock_fd_, LOCK_UN);
        ::close(lock_fd_);
    }
}

std::string RunStore::stream_path(const std::string& stage) const { return (fs::path(dir_) / (stage + ".jsonl")).string(); }

std::unique_ptr<RunStore> RunStore::create(const std::string& root, const std::string& run_id, const json& config) {
    if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." || run_id == "..")
        throw Error(Errc::config, "invalid run id '" + run_id + "'");
    const fs::path dir = fs::path(root) / run_id;
    if (fs::exists(dir / "manifest.json")) throw Error(Errc::config, "run '" + run_id + "' already exists in " + root);
    fs::create_directories(dir);
    json manifest{{"run_id", run_id},
                  {"created_at", now_iso8601()},
                  {"config", config},
                  {"checkpoints", json::object()},
                  {"status", "running"}};
    write_file_atomic((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    return open(dir.string(), true);
}

std::unique_ptr<RunStore> RunStore::open(const std::string& dir, bool writable) {
    std::unique_ptr<RunStore> s(new RunStore(dir, writable));
    const fs::path mpath = fs::path(dir) / "manifest.json";
    if (!fs::exists(mpath)) throw Error(Errc::not_found, "no run store at " + dir);
    if (writable) {
        s->lock_fd_ = ::open((fs::path(dir) / "lock").c_str(), O_RDWR | O_CREAT, 0644);
        if (s->lock_fd_ < 0) throw Error(Errc::store_corrupt, "cannot open lock file in " + dir);
        if (::flock(s->lock_fd_, LOCK_EX | LOCK_NB) != 0) throw Error(Errc::store_locked, dir + " is in use by another process");
    }
    try {
        s->manifest_ = json::parse(read_file(mpath.string()));
        s->run_id_ = s->manifest_.at("run_id").get<std::string>();
        if (!s->manifest_.contains("checkpoints")) s->manifest_["checkpoints"] = json::object();
    } catch (const json::exception& e) {
        throw Error(Errc::store_corrupt, mpath.string() + ": " + e.what());
    }
    for (const auto& stage : store_streams()) s->load_stream(stage);
    return s;
}

void RunStore::load_stream(const std::string& stage) {
    const std::string path = stream_path(stage);
    auto [lines, covered] = complete_lines(path);
    auto& ids = ids_[stage];
    for (std::size_t i = 0; i < lines.size(); ++i)
        ids.insert(parse_envelope(lines[i], stage, run_id_, path + ":" + std::to_string(i + 1)).id);
    if (!writable_) return;
    if (fs::exists(path) && fs::file_size(path) != covered) fs::resize_file(path, covered);
    out_[stage] = std::make_unique<std::ofstream>(path, std::ios::app | std::ios::binary);
    if (!*out_[stage]) throw Error(Errc::store_corrupt, "cannot open " + path + " for append");
}

bool RunStore::append(const std::string& stage, const std::string& id, const json& data) {
    if (!writable_) throw Error(Errc::invalid_argument, "run store opened read-only");
    std::lock_guard lock(mu_);
    auto it = out_.find(stage);
    if (it == out_.end()) throw Error(Errc::invalid_argument, "unknown stream '" + stage + "'");
    if (!ids_[stage].insert(id).second) return false;
    json env{{"run_id", run_id_}, {"stage", stage}, {"id", id}, {"hash", sha256_hex(data.dump())}, {"data", data}};
    *it->second << env.dump() << '\n';
    it->second->flush();
    if (!*it->second) throw Error(Errc::store_corrupt, "write to " + stream_path(stage) + " failed");
    return true;
}

bool RunStore::has(const std::string& stage, const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = ids_.find(stage);
    return it != ids_.end() && it->second.count(id) > 0;
}

std::size_t RunStore::count(const std::string& stage) const {
    std::lock_guard lock(mu_);
    auto it = ids_.find(stage);
    return it == ids_.end() ? 0 : it->second.size();
}

std::vector<json> RunStore::read(const std::string& stage) const {
    if (!ids_.count(stage)) throw Error(Errc::invalid_argument, "unknown stream '" + stage + "'");
    const std::string path = stream_path(stage);
    std::vector<json> out;
    auto [lines, covered] = complete_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i)
        out.push_back(parse_envelope(lines[i], stage, run_id_, path + ":" + std::to_string(i + 1)).data);
    return out;
}

json RunStore::manifest() const {
    std::lock_guard lock(mu_);
    return manifest_;
}

json RunStore::config() const {
    std::lock_guard lock(mu_);
    return manifest_.value("config", json::object());
}

bool RunStore::checkpointed(const std::string& stage) const {
    std::lock_guard lock(mu_);
    return manifest_["checkpoints"].contains(stage);
}

void RunStore::write_manifest() { write_file_atomic((fs::path(dir_) / "manifest.json").string(), manifest_.dump(2) + "\n"); }

void RunStore::checkpoint(const std::string& stage) {
    if (!writable_) throw Error(Errc::invalid_argument, "run store opened read-only");
    std::lock_guard lock(mu_);
    json counts = json::object();
    for (const auto& [s, ids] : ids_) counts[s] = ids.size();
    manifest_["checkpoints"][stage] = {{"completed_at", now_iso8601()}, {"counts", counts}};
    write_manifest();
}

void RunStore::set_status(const std::string& status) {
    if (!writable_) throw Error(Errc::invalid_argument, "run store opened read-only");
    std::lock_guard lock(mu_);
    manifest_["status"] = status;
    write_manifest();
}

std::string resolve_run_dir(const std::string& root, const std::string& run) {
    if (fs::exists(fs::path(run) / "manifest.json")) return run;
    const fs::path p = fs::path(root) / run;
    if (fs::exists(p / "manifest.json")) return p.string();
    throw Error(Errc::not_found, "run '" + run + "' not found under " + root);
}

}  // namespace leakaudit
