#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "leakaudit/common.hpp"

namespace leakaudit {

inline const std::vector<std::string>& store_streams() {
    static const std::vector<std::string> streams = {
        "questions", "question_batches", "code",     "functions", "test_prompts", "tests",
        "candidates", "duplicates",      "verdicts", "searches",  "decisions",    "exchanges",
    };
    return streams;
}

// One directory per run: <stream>.jsonl files of envelopes
// {run_id, stage, id, hash, data} plus manifest.json with stage checkpoints.
// Writers hold an exclusive lock on <dir>/lock for their lifetime.
class RunStore {
public:
    // Throws Errc::config when the run directory already holds a manifest.
    static std::unique_ptr<RunStore> create(const std::string& root, const std::string& run_id, const json& config);
    // Opens an existing run. A trailing partial line left by an interrupted write is
    // dropped; any other damage throws Errc::store_corrupt. Writable opens throw
    // Errc::store_locked when another process holds the lock.
    static std::unique_ptr<RunStore> open(const std::string& dir, bool writable);

    ~RunStore();
    RunStore(const RunStore&) = delete;
    RunStore& operator=(const RunStore&) = delete;

    const std::string& run_id() const { return run_id_; }
    const std::string& dir() const { return dir_; }

    // Appends unless an item with this id is already in the stream; returns
    // whether a line was written. Thread-safe.
    bool append(const std::string& stage, const std::string& id, const json& data);
    bool has(const std::string& stage, const std::string& id) const;
    std::size_t count(const std::string& stage) const;
    std::vector<json> read(const std::string& stage) const;

    json manifest() const;
    json config() const;
    bool checkpointed(const std::string& stage) const;
    void checkpoint(const std::string& stage);
    void set_status(const std::string& status);

private:
    RunStore(std::string dir, bool writable);
    void load_stream(const std::string& stage);
    void write_manifest();
    std::string stream_path(const std::string& stage) const;

    std::string dir_;
    std::string run_id_;
    bool writable_;
    int lock_fd_ = -1;
    mutable std::mutex mu_;
    json manifest_;
    std::map<std::string, std::set<std::string>> ids_;
    std::map<std::string, std::unique_ptr<std::ofstream>> out_;
};

// Resolves a run reference: an existing directory with a manifest, or <root>/<id>.
std::string resolve_run_dir(const std::string& root, const std::string& run);

}  // namespace leakaudit
