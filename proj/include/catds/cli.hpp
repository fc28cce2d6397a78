#pragma once

// Command-line front end. dispatch() is the whole program; tools/catds.cpp only forwards argv.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "catds/corpusio.hpp"
#include "catds/pipeline.hpp"
#include "catds/quantizer.hpp"
#include "catds/scorer.hpp"
#include "catds/selector.hpp"
#include "catds/statsreport.hpp"
#include "catds/subword.hpp"
#include "catds/symbolizer.hpp"
#include "catds/synthcorpus.hpp"

namespace catds::cli {

namespace fs = std::filesystem;

/// Pipeline parameters; defaults reproduce the reference configuration.
struct RunConfig {
    unsigned threads = 1;

    // train-quantizer
    std::string manifest;
    std::string out;
    std::size_t k = 500;
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    double rel_tol = 1e-6;
    std::size_t max_frames = 1000000;

    // tokenize / encode / train-tokenizer
    std::string codebook;
    std::string text_out;
    std::string symbols;
    std::string model;
    std::string ref_out;
    std::uint32_t alphabet_size = 500;
    std::uint32_t vocab_size = kDefaultVocabSize;

    // score
    std::string target_ref;
    std::string tokens;
    double epsilon = kDefaultQEpsilon;

    // select
    std::string scores;
    std::string lid;
    std::string out_dir;
    std::string language = "donor";
    std::int64_t n = 20000;
    std::int64_t delta_n = 4000;
    std::int64_t k_max = 5;
    std::uint32_t random_replicates = 3;

    // report
    std::string results;
    std::string summary_out;
    std::string tests_out;
    std::string scatter_out;
    std::string baseline = "random";
    std::string tie_null = "untied";

    // synth
    std::string spec;
};

inline int verbosity() {
    if (const char* v = std::getenv("CATDS_VERBOSE")) return std::atoi(v);
    return 1;
}

namespace detail {

inline fs::path resolve(const fs::path& base_file, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || p.empty()) return path;
    return base_file.parent_path() / path;
}

inline void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
}

inline int run_train_quantizer(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.manifest, "--manifest");
    require(c.out, "--out");
    const auto manifest = read_manifest(c.manifest);
    if (manifest.empty()) throw ValidationError("manifest " + c.manifest + " is empty");
    FrameMatrix all;
    for (const auto& e : manifest.entries) {
        const auto f = read_feature_file(resolve(c.manifest, e.feature_path));
        if (all.cols == 0) all.cols = f.cols;
        if (f.cols != all.cols) throw ValidationError("clip " + e.clip_id + " has feature dim " + std::to_string(f.cols));
        all.data.insert(all.data.end(), f.data.begin(), f.data.end());
        all.rows += f.rows;
    }
    const auto frames = subsample_frames(all, std::max(c.max_frames, c.k), c.k, c.seed);
    KMeansOptions opts{c.k, c.seed, c.max_iters, c.rel_tol, c.threads};
    const auto fit = train_kmeans(frames, opts);
    write_codebook(c.out, fit.codebook);
    if (verbosity() >= 2) {
        err << "k-means: " << fit.objective_log.size() << " passes, inertia " << fit.codebook.inertia
            << (fit.converged ? " (converged)" : " (max iterations)") << "\n";
    }
    out << "wrote codebook k=" << fit.codebook.k << " dim=" << fit.codebook.dim << " to " << c.out << "\n";
    return 0;
}

inline int run_tokenize(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(c.codebook, "--codebook");
    require(c.manifest, "--manifest");
    require(c.out, "--out");
    const auto cb = read_codebook(c.codebook);
    const auto manifest = read_manifest(c.manifest);
    TokenFile symbols;
    std::string text;
    for (const auto& e : manifest.entries) {
        const auto frames = read_feature_file(resolve(c.manifest, e.feature_path));
        auto seq = symbols_from_features(cb, frames, c.threads);
        if (!c.text_out.empty()) text += e.clip_id + '\t' + dump_text(seq, static_cast<std::uint32_t>(cb.k)) + '\n';
        symbols.push_back({e.clip_id, std::move(seq)});
    }
    write_token_file(c.out, symbols);
    if (!c.text_out.empty()) catds::detail::write_all(c.text_out, text);
    out << "wrote " << symbols.size() << " symbol sequences to " << c.out << "\n";
    return 0;
}

inline int run_train_tokenizer(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.symbols, "--symbols");
    require(c.out, "--out");
    const auto file = read_token_file(c.symbols, c.alphabet_size);
    std::vector<SymbolSeq> corpus;
    for (const auto& r : file) corpus.push_back(r.ids);
    const auto model = train_tokenizer(corpus, c.alphabet_size, c.vocab_size);
    write_tokenizer(c.out, model);
    if (model.underfilled() && verbosity() >= 1) {
        err << "warning: corpus supports only " << model.vocab_size() << " of the requested " << c.vocab_size
            << " tokens\n";
    }
    out << "wrote tokenizer with " << model.vocab_size() << " tokens to " << c.out << "\n";
    return 0;
}

inline int run_encode(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(c.model, "--model");
    require(c.symbols, "--symbols");
    require(c.out, "--out");
    const auto model = read_tokenizer(c.model);
    const auto symbols = read_token_file(c.symbols, model.alphabet_size());
    const auto tokens = encode_all(model, symbols, c.threads);
    write_token_file(c.out, tokens);
    if (!c.ref_out.empty()) write_freq_vector(c.ref_out, build_frequency_vector(tokens, model.vocab_size()));
    out << "wrote " << tokens.size() << " token sequences to " << c.out << "\n";
    return 0;
}

inline int run_score(const RunConfig& c, std::ostream& out, std::ostream& err) {
    require(c.target_ref, "--target-ref");
    require(c.tokens, "--tokens");
    require(c.out, "--out");
    const auto ref = read_freq_vector(c.target_ref);
    const auto tokens = read_token_file(c.tokens, static_cast<std::uint32_t>(ref.dim()));
    const auto scored = score_corpus(ref, tokens, c.epsilon, c.threads);
    write_score_table(c.out, scored.records);
    if (verbosity() >= 1) {
        for (const auto& id : scored.excluded) err << "warning: clip " << id << " has no tokens; excluded from scoring\n";
        if (scored.model.fallback) err << "warning: fewer than 3 distinct token counts; using constant q\n";
        std::size_t clamped = 0;
        for (const auto& r : scored.records) clamped += r.clamped ? 1 : 0;
        if (clamped) err << "warning: " << clamped << " clips had fitted q below epsilon (clamped)\n";
    }
    out << "wrote " << scored.records.size() << " scores to " << c.out << "\n";
    return 0;
}

inline int run_select(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(c.manifest, "--manifest");
    require(c.scores, "--scores");
    require(c.out_dir, "--out-dir");
    const auto manifest = read_manifest(c.manifest);
    const auto scores = read_score_table(c.scores);
    std::optional<std::vector<LidRecord>> lid;
    if (!c.lid.empty()) lid = read_lid_table(c.lid);
    GridOptions opts{c.n, c.delta_n, c.k_max, c.random_replicates, lid.has_value()};
    GridInputs in{c.language, &manifest, &scores, lid ? &*lid : nullptr, c.seed};
    const auto grid = build_grid(in, opts);
    write_grid(c.out_dir, in, grid);
    out << "wrote " << grid.size() << " dataset configurations to " << c.out_dir << "\n";
    return 0;
}

inline int run_report(const RunConfig& c, std::ostream& out, std::ostream&) {
    if (c.results.empty() && c.scores.empty()) throw ValidationError("report needs --results and/or --scores");
    if (!c.results.empty()) {
        WilcoxonOptions w;
        if (c.tie_null == "untied") {
            w.tie_null = TieNull::UntiedRanks;
        } else if (c.tie_null == "midrank") {
            w.tie_null = TieNull::MidRanks;
        } else {
            throw ValidationError("--tie-null must be 'untied' or 'midrank'");
        }
        const auto rows = parse_results(catds::detail::read_all(c.results), c.results);
        const auto rep = build_report(rows, c.baseline, w);
        if (!c.summary_out.empty()) catds::detail::write_all(c.summary_out, rep.summary_tsv);
        if (!c.tests_out.empty()) catds::detail::write_all(c.tests_out, rep.comparisons_tsv);
        if (c.summary_out.empty() && c.tests_out.empty()) out << rep.summary_tsv << "\n" << rep.comparisons_tsv;
    }
    if (!c.scores.empty()) {
        require(c.scatter_out, "--scatter-out");
        const auto scores = read_score_table(c.scores);
        catds::detail::write_all(c.scatter_out + "_unscaled.tsv", export_scatter(scores, false));
        catds::detail::write_all(c.scatter_out + "_scaled.tsv", export_scatter(scores, true));
        std::vector<double> p, s, q;
        for (const auto& r : scores) {
            p.push_back(static_cast<double>(r.token_count));
            s.push_back(r.raw_similarity);
            q.push_back(r.catds);
        }
        out << "pearson_r(token_count, raw_similarity)\t" << catds::detail::format_double(pearson_r(p, s)) << "\n"
            << "pearson_r(token_count, catds)\t" << catds::detail::format_double(pearson_r(p, q)) << "\n";
    }
    return 0;
}

/// synth --spec config.json --out-dir DIR
///
/// Writes target.jsonl / donor.jsonl manifests with CATF features under feats/,
/// ground-truth symbol files, labels.tsv and a synthetic lid.tsv.
inline int run_synth(const RunConfig& c, std::ostream& out, std::ostream&) {
    require(c.spec, "--spec");
    require(c.out_dir, "--out-dir");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(catds::detail::read_all(c.spec));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(c.spec + ": " + ex.what());
    }
    const auto target = spec_from_json(j.at("target"));
    const auto distractor = spec_from_json(j.at("distractor"));
    const auto n_reference = j.value("n_reference", std::size_t{100});
    const auto n_target_like = j.value("n_target_like", std::size_t{50});
    const auto n_distractor = j.value("n_distractor", std::size_t{50});
    const auto frame_s = j.value("frame_s", 0.02);
    const auto fj = j.value("features", nlohmann::json::object());
    const auto dim = fj.value("dim", std::size_t{8});
    const auto emitters = make_emitter_centroids(target.alphabet_size, dim, fj.value("spread", 6.0),
                                                 fj.value("seed", std::uint64_t{5}));
    const auto noise = fj.value("noise_sd", 0.4);
    const auto min_rep = fj.value("min_repeat", std::size_t{1});
    const auto max_rep = fj.value("max_repeat", std::size_t{3});
    const std::string target_lang = j.value("target_language", std::string{"target"});
    const std::string donor_lang = j.value("donor_language", std::string{"donor"});

    const fs::path dir(c.out_dir);
    fs::create_directories(dir / "feats");

    auto emit = [&](const std::string& id, const SymbolSeq& seq, const std::string& lang, std::uint64_t seed) {
        const auto frames = emit_features(seq, emitters, noise, min_rep, max_rep, seed);
        const std::string rel = "feats/" + id + ".catf";
        write_feature_file(dir / rel, frames);
        return ClipEntry{id, rel, static_cast<double>(frames.rows) * frame_s, lang, {}};
    };

    ClipManifest target_manifest;
    TokenFile target_symbols;
    const auto reference = generate_corpus(target, n_reference);
    for (std::size_t i = 0; i < reference.size(); ++i) {
        std::string n = std::to_string(i);
        const std::string id = "t" + std::string(n.size() < 6 ? 6 - n.size() : 0, '0') + n;
        target_manifest.entries.push_back(emit(id, reference[i], target_lang, target.seed + 0x7A11 + i));
        target_symbols.push_back({id, reference[i]});
    }

    auto target_for_donor = target;
    target_for_donor.seed += 1000003;
    const auto mix = make_mixture(target_for_donor, distractor, n_target_like, n_distractor, "d");
    ClipManifest donor_manifest;
    std::string labels = "clip_id\ttarget_like\n";
    std::vector<LidRecord> lid;
    Rng lid_rng(distractor.seed ^ 0x11DULL);
    for (std::size_t i = 0; i < mix.clips.size(); ++i) {
        donor_manifest.entries.push_back(emit(mix.clip_ids[i], mix.clips[i], donor_lang, distractor.seed + 0xD0 + i));
        labels += mix.clip_ids[i] + (mix.target_like[i] ? "\t1\n" : "\t0\n");
        const double u = lid_rng.uniform01();
        if (mix.target_like[i]) {
            lid.push_back({mix.clip_ids[i], static_cast<std::uint32_t>(1 + lid_rng.uniform_below(2)), 0.4 + 0.6 * u});
        } else {
            lid.push_back({mix.clip_ids[i], static_cast<std::uint32_t>(2 + lid_rng.uniform_below(3)), 0.4 * u});
        }
    }

    write_manifest(dir / "target.jsonl", target_manifest);
    write_manifest(dir / "donor.jsonl", donor_manifest);
    write_token_file(dir / "target.truth.sym", target_symbols);
    write_token_file(dir / "donor.truth.sym", mix.as_token_file());
    catds::detail::write_all(dir / "labels.tsv", labels);
    catds::detail::write_all(dir / "lid.tsv", format_lid_table(lid));
    out << "wrote " << target_manifest.size() << " target and " << donor_manifest.size() << " donor clips to "
        << c.out_dir << "\n";
    return 0;
}

/// Turns --config JSON into leading "--key=value" arguments for the chosen
/// subcommand. Top-level keys apply wherever the option exists; an object
/// named after the subcommand applies only there. Explicit flags come later
/// on the command line and win.
inline std::vector<std::string> expand_config(const CLI::App& app, const std::vector<std::string>& args) {
    if (args.empty()) return args;
    std::optional<std::string> config_path;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
    }
    if (!config_path) return args;
    const CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(args[0]);
    } catch (const CLI::OptionNotFound&) {
        return args;
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(catds::detail::read_all(*config_path));
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(*config_path + ": " + ex.what());
    }
    if (!j.is_object()) throw FormatError(*config_path + ": config must be a JSON object");

    std::vector<std::string> injected;
    auto apply = [&](const nlohmann::json& obj) {
        for (const auto& [key, value] : obj.items()) {
            if (value.is_object()) continue;
            const std::string flag = "--" + key;
            const auto* opt = sub->get_option_no_throw(flag);
            if (!opt || key == "config") continue;
            if (value.is_boolean()) {
                if (value.get<bool>()) injected.push_back(flag);
            } else if (value.is_string()) {
                injected.push_back(flag + "=" + value.get<std::string>());
            } else if (value.is_number()) {
                injected.push_back(flag + "=" + value.dump());
            }
        }
    };
    apply(j);
    if (j.contains(args[0]) && j.at(args[0]).is_object()) apply(j.at(args[0]));
    std::vector<std::string> out{args[0]};
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

}  // namespace detail

/// Runs one subcommand. Returns 0 on success, 1 on I/O or validation
/// failure, 2 on usage errors (usage text is printed to err).
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig c;
    CLI::App app{"catds: acoustic-token donor clip scoring and selection"};
    app.name("catds");
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    std::string config_file;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", config_file, "JSON file of option defaults (flags take precedence)");
        s->add_option("--threads", c.threads, "worker threads; results do not depend on this")->check(CLI::PositiveNumber);
    };

    auto* tq = app.add_subcommand("train-quantizer", "train a k-means codebook on target-language features");
    common(tq);
    tq->add_option("--manifest", c.manifest, "manifest of target-language feature files");
    tq->add_option("--out", c.out, "output codebook (CATK)");
    tq->add_option("--k", c.k, "number of clusters")->check(CLI::PositiveNumber);
    tq->add_option("--seed", c.seed, "k-means++ / subsampling seed");
    tq->add_option("--max-iters", c.max_iters, "maximum assignment passes")->check(CLI::PositiveNumber);
    tq->add_option("--rel-tol", c.rel_tol, "stop when the relative objective decrease falls below this");
    tq->add_option("--max-frames", c.max_frames, "subsample training frames to at most this many");

    auto* tk = app.add_subcommand("tokenize", "features -> run-collapsed cluster symbols");
    common(tk);
    tk->add_option("--codebook", c.codebook, "codebook (CATK)");
    tk->add_option("--manifest", c.manifest, "manifest of feature files");
    tk->add_option("--out", c.out, "output symbol file");
    tk->add_option("--text-out", c.text_out, "optional code-point text export");

    auto* tt = app.add_subcommand("train-tokenizer", "train the subword tokenizer on target symbols");
    common(tt);
    tt->add_option("--symbols", c.symbols, "target-language symbol file");
    tt->add_option("--out", c.out, "output tokenizer model (JSON)");
    tt->add_option("--alphabet-size", c.alphabet_size, "symbol alphabet size (codebook k)")->check(CLI::PositiveNumber);
    tt->add_option("--vocab-size", c.vocab_size, "target vocabulary size V")->check(CLI::PositiveNumber);

    auto* en = app.add_subcommand("encode", "symbols -> subword tokens");
    common(en);
    en->add_option("--model", c.model, "tokenizer model (JSON)");
    en->add_option("--symbols", c.symbols, "symbol file");
    en->add_option("--out", c.out, "output token file");
    en->add_option("--ref-out", c.ref_out, "also write the aggregated frequency vector of these tokens");

    auto* sc = app.add_subcommand("score", "CATDS scores of donor clips against a target reference vector");
    common(sc);
    sc->add_option("--target-ref", c.target_ref, "reference frequency vector");
    sc->add_option("--tokens", c.tokens, "donor token file");
    sc->add_option("--out", c.out, "output score table (TSV)");
    sc->add_option("--epsilon", c.epsilon, "floor for the fitted baseline q")->check(CLI::PositiveNumber);

    auto* se = app.add_subcommand("select", "write the subset manifests of the experiment grid");
    common(se);
    se->add_option("--manifest", c.manifest, "donor manifest");
    se->add_option("--scores", c.scores, "score table from `score`");
    se->add_option("--lid", c.lid, "LID table (clip_id, rank, prob); LID subsets are skipped without it");
    se->add_option("--out-dir", c.out_dir, "output directory");
    se->add_option("--language", c.language, "donor language tag used in file names");
    se->add_option("--N", c.n, "full donor corpus size");
    se->add_option("--delta-N", c.delta_n, "subset size step");
    se->add_option("--k-max", c.k_max, "number of steps");
    se->add_option("--random-replicates", c.random_replicates, "random subsets per size");
    se->add_option("--seed", c.seed, "base seed for random subsets");

    auto* rp = app.add_subcommand("report", "summary statistics, signed-rank tests and scatter exports");
    common(rp);
    rp->add_option("--results", c.results, "results TSV (condition, method, size, metric)");
    rp->add_option("--summary-out", c.summary_out, "per-cell mean/std TSV");
    rp->add_option("--tests-out", c.tests_out, "signed-rank comparisons TSV");
    rp->add_option("--baseline", c.baseline, "method the others are compared with");
    rp->add_option("--tie-null", c.tie_null, "exact null with tied |d|: untied or midrank");
    rp->add_option("--scores", c.scores, "score table for scatter export");
    rp->add_option("--scatter-out", c.scatter_out, "prefix for <prefix>_unscaled.tsv / <prefix>_scaled.tsv");

    auto* sy = app.add_subcommand("synth", "generate a synthetic target/donor fixture");
    common(sy);
    sy->add_option("--spec", c.spec, "synthetic corpus config (JSON)");
    sy->add_option("--out-dir", c.out_dir, "output directory");

    try {
        args = detail::expand_config(app, args);
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (tq->parsed()) return detail::run_train_quantizer(c, out, err);
        if (tk->parsed()) return detail::run_tokenize(c, out, err);
        if (tt->parsed()) return detail::run_train_tokenizer(c, out, err);
        if (en->parsed()) return detail::run_encode(c, out, err);
        if (sc->parsed()) return detail::run_score(c, out, err);
        if (se->parsed()) return detail::run_select(c, out, err);
        if (rp->parsed()) return detail::run_report(c, out, err);
        if (sy->parsed()) return detail::run_synth(c, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

inline int dispatch(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args), out, err);
}

}  // namespace catds::cli
