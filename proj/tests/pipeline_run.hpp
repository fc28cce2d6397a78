#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "catds/cli.hpp"

namespace test {

namespace fs = std::filesystem;

inline fs::path fixture_dir() { return CATDS_FIXTURE_DIR; }

/// The nine invocations (seven distinct subcommands) from synthetic spec to subset manifests.
inline std::vector<std::vector<std::string>> pipeline_commands(const fs::path& work, unsigned threads) {
    const std::string w = work.string() + "/";
    const std::string spec = (fixture_dir() / "synth_small.json").string();
    const std::string cfg = (fixture_dir() / "pipeline_small.json").string();
    const std::string t = std::to_string(threads);
    return {
        {"synth", "--spec", spec, "--out-dir", w + "data"},
        {"train-quantizer", "--config", cfg, "--manifest", w + "data/target.jsonl", "--out", w + "codebook.catk", "--threads", t},
        {"tokenize", "--codebook", w + "codebook.catk", "--manifest", w + "data/target.jsonl", "--out", w + "target.sym", "--threads", t},
        {"tokenize", "--codebook", w + "codebook.catk", "--manifest", w + "data/donor.jsonl", "--out", w + "donor.sym", "--threads", t},
        {"train-tokenizer", "--config", cfg, "--symbols", w + "target.sym", "--out", w + "tokenizer.json"},
        {"encode", "--model", w + "tokenizer.json", "--symbols", w + "target.sym", "--out", w + "target.tok", "--ref-out", w + "target.vec", "--threads", t},
        {"encode", "--model", w + "tokenizer.json", "--symbols", w + "donor.sym", "--out", w + "donor.tok", "--threads", t},
        {"score", "--target-ref", w + "target.vec", "--tokens", w + "donor.tok", "--out", w + "scores.tsv", "--threads", t},
        {"select", "--config", cfg, "--manifest", w + "data/donor.jsonl", "--scores", w + "scores.tsv", "--lid", w + "data/lid.tsv",
         "--out-dir", w + "subsets", "--threads", t},
    };
}

/// Returns the exit code of the first failing command (0 when all succeed).
inline int run_pipeline(const fs::path& work, unsigned threads, std::string* log = nullptr) {
    std::ostringstream out, err;
    for (const auto& cmd : pipeline_commands(work, threads)) {
        const int rc = catds::cli::dispatch(cmd, out, err);
        if (rc != 0) {
            if (log) *log = cmd[0] + ": " + err.str();
            return rc;
        }
    }
    if (log) *log = out.str() + err.str();
    return 0;
}

/// Relative path -> file bytes for every regular file below root.
inline std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = catds::detail::read_all(e.path());
    }
    return files;
}

}  // namespace test
