// capp: command-line front end. One subcommand per pipeline stage plus
// `experiment` (the full grid) and `summarize`. Every subcommand prints a
// single machine-parseable summary line to stdout and appends the same line,
// timestamped, to <out>/run.log. All other output files are deterministic
// functions of the config and seeds, so reruns overwrite with identical
// bytes. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "capp/config.hpp"
#include "capp/dataset.hpp"
#include "capp/generate.hpp"
#include "capp/model.hpp"
#include "capp/oracle.hpp"
#include "capp/pipeline.hpp"
#include "capp/trace_features.hpp"
#include "capp/train.hpp"
#include "capp/vocab.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace capp;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> jobs;
    bool quiet = false;
};

// Effective settings for one invocation: config file, then flag overrides.
struct Ctx {
    RunConfig cfg;
    fs::path out;
    std::uint64_t seed = 0;
    bool quiet = false;

    fs::path in_out(const fs::path& p) const { return p.is_absolute() ? p : out / p; }
};

Ctx make_ctx(const GlobalArgs& g) {
    Ctx ctx;
    if (!g.config_path.empty()) ctx.cfg = load_config(g.config_path);
    if (g.out) ctx.cfg.out_dir = *g.out;
    if (g.jobs) ctx.cfg.jobs = *g.jobs;
    if (g.seed) ctx.cfg.seeds = {*g.seed};
    ctx.cfg.validate();
    ctx.out = ctx.cfg.out_dir;
    ctx.seed = g.seed ? *g.seed : ctx.cfg.seeds.front();
    ctx.quiet = g.quiet;
    fs::create_directories(ctx.out);
    return ctx;
}

void note(const Ctx& ctx, const std::string& msg) {
    if (!ctx.quiet) std::cerr << "capp: " << msg << "\n";
}

// Summary goes to stdout; the log file gets the same line with a timestamp,
// and is the only output that is not byte-reproducible.
void finish(const Ctx& ctx, const std::string& summary) {
    std::cout << summary << "\n";
    std::ofstream log(ctx.out / "run.log", std::ios::app);
    char stamp[32];
    std::time_t now = std::time(nullptr);
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    log << stamp << " " << summary << "\n";
}

std::string fnum(double v) { return io::format_double(v); }

fs::path manifest_path(const Ctx& ctx, double fraction) { return ctx.out / split_manifest_name(fraction, ctx.seed); }

Dataset load_dataset_checked(const Ctx& ctx) {
    const fs::path p = ctx.cfg.dataset;
    if (!fs::exists(p))
        throw std::runtime_error("dataset file not found: " + p.string() + " (run `capp gen-data` first)");
    return load_dataset(p);
}

std::vector<int> subset_parts(const Split& split, const std::string& subset) {
    if (subset == "train") return split.train_parts;
    if (subset == "val") return split.val_parts;
    if (subset == "test") return split.test_parts;
    if (subset == "all") {
        std::vector<int> all(kNumParts);
        for (int i = 0; i < kNumParts; ++i) all[i] = i;
        return all;
    }
    throw std::runtime_error("unknown subset '" + subset + "' (expected train, val, test, or all)");
}

Split load_split_checked(const Ctx& ctx, const Dataset& ds, const fs::path& path) {
    if (!fs::exists(path))
        throw std::runtime_error("split manifest not found: " + path.string() + " (run `capp split` first)");
    return load_split_manifest(ds, path);
}

Model load_model_checked(const fs::path& path) {
    if (!fs::exists(path))
        throw std::runtime_error("model checkpoint not found: " + path.string() + " (run `capp train` first)");
    return load_checkpoint(path);
}

// --- subcommand bodies -------------------------------------------------------

// With --out, both files land in that directory; otherwise they follow the
// config's dataset path.
int run_gen_data(const Ctx& ctx, const std::optional<std::string>& out_flag) {
    fs::path dataset_path = ctx.cfg.dataset;
    fs::path vocab_path = dataset_path.parent_path() / "vocab.json";
    if (out_flag) {
        dataset_path = fs::path(*out_flag) / "dataset.jsonl";
        vocab_path = fs::path(*out_flag) / "vocab.json";
    }
    if (dataset_path.has_parent_path()) fs::create_directories(dataset_path.parent_path());
    Dataset ds = build_dataset(dataset_path);
    write_vocab(vocab_path);
    std::size_t pairs = 0;
    for (const auto& r : ds.records) pairs += r.chains.size();
    finish(ctx, "gen-data parts=" + std::to_string(ds.records.size()) + " pairs=" + std::to_string(pairs) +
                    " dataset=" + dataset_path.string() + " vocab=" + vocab_path.string());
    return 0;
}

int run_split(const Ctx& ctx, double fraction) {
    Dataset ds = load_dataset_checked(ctx);
    Split split = split_dataset(ds, fraction, ctx.seed);
    fs::path path = manifest_path(ctx, fraction);
    write_split_manifest(split, path);
    finish(ctx, "split fraction=" + fnum(fraction) + " seed=" + std::to_string(ctx.seed) +
                    " train=" + std::to_string(split.train_parts.size()) +
                    " val=" + std::to_string(split.val_parts.size()) +
                    " test=" + std::to_string(split.test_parts.size()) + " manifest=" + path.string());
    return 0;
}

int run_train(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& model_flag) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    Model m = init_model(ctx.cfg.model, rng::derive_seed(ctx.seed, rng::SeedTag::model_init));
    TrainOptions opt = ctx.cfg.train;
    opt.seed = ctx.seed;
    note(ctx, "training " + std::to_string(opt.epochs) + " epochs on " + std::to_string(split.train_pairs.size()) +
                  " pairs");
    TrainResult res = train_model(m, split.train_pairs, opt);
    fs::path model_path = model_flag.empty() ? ctx.in_out("model.ckpt") : fs::path(model_flag);
    save_checkpoint(m, model_path);
    finish(ctx, "train fraction=" + fnum(fraction) + " seed=" + std::to_string(ctx.seed) +
                    " pairs=" + std::to_string(split.train_pairs.size()) + " epochs=" + std::to_string(opt.epochs) +
                    " final_loss=" + fnum(res.epoch_loss.back()) + " model=" + model_path.string());
    return 0;
}

int run_gen_traces(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& model_flag,
                   const std::string& subset, const std::string& traces_flag) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    Model m = load_model_checked(model_flag.empty() ? ctx.in_out("model.ckpt") : fs::path(model_flag));
    std::vector<int> parts = subset_parts(split, subset);

    Workspace ws(m.cfg);
    std::vector<LogitTrace> traces;
    traces.reserve(parts.size());
    int wellformed = 0;
    for (int idx : parts) {
        Generation gen = generate(m, ds.record_for(idx).part, ws);
        if (!gen.malformed()) ++wellformed;
        traces.push_back(std::move(gen.trace));
    }
    fs::path traces_path = traces_flag.empty() ? ctx.in_out("traces.jsonl") : fs::path(traces_flag);
    write_traces(traces, traces_path);
    finish(ctx, "gen-traces subset=" + subset + " parts=" + std::to_string(parts.size()) +
                    " wellformed=" + std::to_string(wellformed) + " traces=" + traces_path.string());
    return 0;
}

int run_features(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& traces_flag,
                 const std::string& features_flag) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    fs::path traces_path = traces_flag.empty() ? ctx.in_out("traces.jsonl") : fs::path(traces_flag);
    if (!fs::exists(traces_path))
        throw std::runtime_error("trace file not found: " + traces_path.string() + " (run `capp gen-traces` first)");
    std::vector<LogitTrace> traces = read_traces(traces_path);

    std::set<int> labeled(split.train_parts.begin(), split.train_parts.end());
    labeled.insert(split.val_parts.begin(), split.val_parts.end());

    std::vector<FeatureRow> rows;
    rows.reserve(traces.size());
    int n_labeled = 0;
    for (const auto& tr : traces) {
        FeatureRow row;
        row.part_id = tr.part_id;
        row.z = extract_features(tr);
        if (labeled.count(tr.part_id)) {
            const auto& rec = ds.record_for(tr.part_id);
            auto chain = chain_from_trace(tr);
            const bool correct =
                chain && std::find(rec.chains.begin(), rec.chains.end(), *chain) != rec.chains.end();
            row.label = correct ? 1 : 0;
            ++n_labeled;
        }
        rows.push_back(std::move(row));
    }
    fs::path features_path = features_flag.empty() ? ctx.in_out("features.csv") : fs::path(features_flag);
    write_features(rows, features_path);
    finish(ctx, "features rows=" + std::to_string(rows.size()) + " labeled=" + std::to_string(n_labeled) +
                    " out=" + features_path.string());
    return 0;
}

int run_oracle_train(const Ctx& ctx, const std::string& features_flag, const std::string& oracle_flag) {
    fs::path features_path = features_flag.empty() ? ctx.in_out("features.csv") : fs::path(features_flag);
    if (!fs::exists(features_path))
        throw std::runtime_error("features file not found: " + features_path.string() +
                                 " (run `capp features` first)");
    OracleDataset train_rows;
    for (auto& row : read_features(features_path))
        if (row.label) train_rows.rows.push_back(std::move(row));
    if (train_rows.rows.empty())
        throw std::runtime_error("no labeled rows in " + features_path.string() +
                                 " (pass a split whose labeled parts appear in the traces)");
    int positive = 0;
    for (const auto& r : train_rows.rows) positive += *r.label;
    note(ctx, "fitting oracle on " + std::to_string(train_rows.rows.size()) + " labeled rows");
    GbdtOracle oracle = fit_oracle(train_rows, ctx.seed, ctx.cfg.oracle);
    fs::path oracle_path = oracle_flag.empty() ? ctx.in_out("oracle.json") : fs::path(oracle_flag);
    save_oracle(oracle, oracle_path);
    finish(ctx, "oracle-train rows=" + std::to_string(train_rows.rows.size()) +
                    " positive=" + std::to_string(positive) + " trees=" + std::to_string(oracle.model.trees.size()) +
                    " train_acc=" + fnum(oracle_accuracy(oracle, train_rows)) + " oracle=" + oracle_path.string());
    return 0;
}

int run_augment(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& model_flag,
                const std::string& oracle_flag, const std::string& augmented_flag) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    Model m = load_model_checked(model_flag.empty() ? ctx.in_out("model.ckpt") : fs::path(model_flag));
    fs::path oracle_path = oracle_flag.empty() ? ctx.in_out("oracle.json") : fs::path(oracle_flag);
    if (!fs::exists(oracle_path))
        throw std::runtime_error("oracle file not found: " + oracle_path.string() +
                                 " (run `capp oracle-train` first)");
    GbdtOracle oracle = load_oracle(oracle_path);

    Workspace ws(m.cfg);
    std::string kept_lines, rejected_lines;
    int pool = 0, kept = 0, rejected = 0;
    for (int idx : split.test_parts) {
        Generation gen = generate(m, ds.record_for(idx).part, ws);
        if (gen.malformed()) continue;
        ++pool;
        OraclePrediction pred = oracle_predict(oracle, extract_features(gen.trace));
        RejectedPrediction rec{fraction, ctx.seed, idx, *gen.chain, pred.probability};
        if (pred.label == 1) {
            ++kept;
            kept_lines += rejected_to_json(rec).dump() + "\n";
        } else {
            ++rejected;
            rejected_lines += rejected_to_json(rec).dump() + "\n";
        }
    }
    fs::path augmented_path = augmented_flag.empty() ? ctx.in_out("augmented.jsonl") : fs::path(augmented_flag);
    fs::path rejected_path = ctx.in_out("rejected.jsonl");
    io::atomic_write(augmented_path, kept_lines);
    io::atomic_write(rejected_path, rejected_lines);
    finish(ctx, "augment pool=" + std::to_string(pool) + " kept=" + std::to_string(kept) +
                    " rejected=" + std::to_string(rejected) + " augmented=" + augmented_path.string() +
                    " rejected_file=" + rejected_path.string());
    return 0;
}

std::vector<TrainPair> read_augmented(const fs::path& path) {
    if (!fs::exists(path))
        throw std::runtime_error("augmented file not found: " + path.string() + " (run `capp augment` first)");
    std::vector<TrainPair> pairs;
    std::istringstream in(io::read_file(path));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        ProcessChain chain;
        for (const auto& name : j.at("chain")) chain.ops.push_back(op_token_by_name(name.get<std::string>()));
        pairs.push_back({j.at("part").get<int>(), std::move(chain)});
    }
    return pairs;
}

int run_retrain(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& model_flag,
                const std::string& augmented_flag, const std::string& model_out_flag) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    Model teacher = load_model_checked(model_flag.empty() ? ctx.in_out("model.ckpt") : fs::path(model_flag));
    std::vector<TrainPair> augmented =
        read_augmented(augmented_flag.empty() ? ctx.in_out("augmented.jsonl") : fs::path(augmented_flag));

    note(ctx, "retraining on " + std::to_string(split.train_pairs.size()) + "+" +
                  std::to_string(augmented.size()) + " pairs");
    Model m = retrain_model(ctx.cfg, teacher, split.train_pairs, augmented,
                            rng::derive_seed(ctx.seed, rng::SeedTag::retrain));
    fs::path model_path = model_out_flag.empty() ? ctx.in_out("model_retrained.ckpt") : fs::path(model_out_flag);
    save_checkpoint(m, model_path);
    finish(ctx, "retrain pairs=" + std::to_string(split.train_pairs.size() + augmented.size()) +
                    " augmented=" + std::to_string(augmented.size()) +
                    " mode=" + (ctx.cfg.retrain_from_scratch ? "scratch" : "warm") +
                    " epochs=" + std::to_string(ctx.cfg.retrain_epochs) + " model=" + model_path.string());
    return 0;
}

int run_eval(const Ctx& ctx, double fraction, const std::string& split_flag, const std::string& model_flag,
             const std::string& subset) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path split_path = split_flag.empty() ? manifest_path(ctx, fraction) : fs::path(split_flag);
    Split split = load_split_checked(ctx, ds, split_path);
    fs::path model_path = model_flag.empty() ? ctx.in_out("model.ckpt") : fs::path(model_flag);
    Model m = load_model_checked(model_path);
    std::vector<int> parts = subset_parts(split, subset);
    double acc = sequence_accuracy(m, parts, ds);
    finish(ctx, "eval subset=" + subset + " parts=" + std::to_string(parts.size()) + " accuracy=" + fnum(acc) +
                    " model=" + model_path.string());
    return 0;
}

int run_experiment(const Ctx& ctx) {
    Dataset ds = load_dataset_checked(ctx);
    fs::path results_path = ctx.in_out(ctx.cfg.results);
    fs::path rejected_path = ctx.in_out("rejected.jsonl");
    if (results_path.has_parent_path()) fs::create_directories(results_path.parent_path());

    // The effective config is echoed next to the results so the run can be
    // reproduced without the original command line.
    save_config(ctx.in_out("config.toml"), ctx.cfg);

    std::ofstream results(results_path, std::ios::trunc);
    if (!results) throw std::runtime_error("cannot open for writing: " + results_path.string());
    std::ofstream rejected(rejected_path, std::ios::trunc);
    if (!rejected) throw std::runtime_error("cannot open for writing: " + rejected_path.string());
    results << results_csv_header() << "\n" << std::flush;

    const std::size_t cells = ctx.cfg.fractions.size() * ctx.cfg.seeds.size();
    note(ctx, "running " + std::to_string(cells) + " cells with jobs=" + std::to_string(ctx.cfg.jobs));
    int failed = 0;
    std::size_t rows = 0;
    ExperimentSinks sinks;
    sinks.on_result = [&](const ExperimentResult& r) {
        results << format_result_row(r) << "\n" << std::flush;
        ++rows;
        if (r.strategy == "failed") ++failed;
    };
    sinks.on_rejected = [&](const RejectedPrediction& r) { rejected << rejected_to_json(r).dump() << "\n"; };
    capp::run_experiment(ctx.cfg, ds, sinks);

    finish(ctx, "experiment cells=" + std::to_string(cells) + " rows=" + std::to_string(rows) +
                    " failed=" + std::to_string(failed) + " results=" + results_path.string() +
                    " rejected=" + rejected_path.string());
    return 0;
}

int run_summarize(const Ctx& ctx, const std::string& results_flag, const std::string& summary_flag) {
    fs::path results_path = results_flag.empty() ? ctx.in_out(ctx.cfg.results) : fs::path(results_flag);
    if (!fs::exists(results_path))
        throw std::runtime_error("results file not found: " + results_path.string() +
                                 " (run `capp experiment` first)");
    std::vector<ExperimentResult> rows = parse_results_csv(io::read_file(results_path));
    std::string summary = write_summary_csv(rows);
    fs::path summary_path = summary_flag.empty() ? ctx.in_out("summary.csv") : fs::path(summary_flag);
    io::atomic_write(summary_path, summary);
    std::size_t out_rows = static_cast<std::size_t>(std::count(summary.begin(), summary.end(), '\n'));
    if (out_rows > 0) --out_rows; // header
    finish(ctx, "summarize rows_in=" + std::to_string(rows.size()) + " rows_out=" + std::to_string(out_rows) +
                    " summary=" + summary_path.string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"semi-supervised process-chain planning pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--config", g.config_path, "config file (canonical format; see `capp experiment` echo)");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override the seed list with a single seed");
    std::string out_val;
    auto* out_opt = app.add_option("--out", out_val, "output directory (default from config: runs/default)");
    int jobs_val = 1;
    auto* jobs_opt = app.add_option("--jobs", jobs_val, "max grid cells in flight")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "suppress progress notes on stderr");

    double fraction = -1.0; // sentinel: default to the config's first fraction
    std::string split_flag, model_flag, model_out_flag, traces_flag, features_flag, oracle_flag, augmented_flag,
        results_flag, summary_flag, subset = "test";
    bool from_scratch = false, warm = false;

    auto add_fraction = [&](CLI::App* sub) {
        sub->add_option("--fraction", fraction, "labeled fraction (default: first fraction in the config)")
            ->check(CLI::Range(1e-9, 0.9));
    };
    auto add_split = [&](CLI::App* sub) {
        sub->add_option("--split", split_flag, "split manifest path (default: <out>/split_<fraction>_<seed>.json)");
    };
    auto add_model_in = [&](CLI::App* sub) {
        sub->add_option("--model", model_flag, "model checkpoint to load (default: <out>/model.ckpt)");
    };

    auto* c_gen = app.add_subcommand("gen-data", "enumerate parts, write dataset.jsonl and vocab.json");

    auto* c_split = app.add_subcommand("split", "partition the corpus and write a split manifest");
    add_fraction(c_split);

    auto* c_train = app.add_subcommand("train", "train a generator from scratch on the split's labeled pairs");
    add_fraction(c_train);
    add_split(c_train);
    c_train->add_option("--model-out", model_out_flag, "checkpoint output path (default: <out>/model.ckpt)");

    auto* c_traces = app.add_subcommand("gen-traces", "greedy-decode a subset and dump logit traces");
    add_fraction(c_traces);
    add_split(c_traces);
    add_model_in(c_traces);
    c_traces->add_option("--subset", subset, "train, val, test, or all (default test)");
    c_traces->add_option("--traces", traces_flag, "trace output path (default: <out>/traces.jsonl)");

    auto* c_feat = app.add_subcommand("features", "extract feature rows from dumped traces");
    add_fraction(c_feat);
    add_split(c_feat);
    c_feat->add_option("--traces", traces_flag, "trace input path (default: <out>/traces.jsonl)");
    c_feat->add_option("--features", features_flag, "feature csv output path (default: <out>/features.csv)");

    auto* c_oracle = app.add_subcommand("oracle-train", "fit the correctness oracle on labeled feature rows");
    c_oracle->add_option("--features", features_flag, "feature csv input path (default: <out>/features.csv)");
    c_oracle->add_option("--oracle", oracle_flag, "oracle output path (default: <out>/oracle.json)");

    auto* c_aug = app.add_subcommand("augment", "select oracle-approved pseudo-labels from test generations");
    add_fraction(c_aug);
    add_split(c_aug);
    add_model_in(c_aug);
    c_aug->add_option("--oracle", oracle_flag, "oracle input path (default: <out>/oracle.json)");
    c_aug->add_option("--augmented", augmented_flag, "kept pairs output path (default: <out>/augmented.jsonl)");

    auto* c_retrain = app.add_subcommand("retrain", "retrain the generator on labeled plus augmented pairs");
    add_fraction(c_retrain);
    add_split(c_retrain);
    add_model_in(c_retrain);
    c_retrain->add_option("--augmented", augmented_flag, "augmented pairs path (default: <out>/augmented.jsonl)");
    c_retrain->add_option("--model-out", model_out_flag,
                          "checkpoint output path (default: <out>/model_retrained.ckpt)");
    c_retrain->add_flag("--from-scratch", from_scratch, "reinitialize instead of warm-starting");
    c_retrain->add_flag("--warm", warm, "warm-start from the loaded checkpoint");

    auto* c_eval = app.add_subcommand("eval", "sequence accuracy of a checkpoint on a subset");
    add_fraction(c_eval);
    add_split(c_eval);
    add_model_in(c_eval);
    c_eval->add_option("--subset", subset, "train, val, test, or all (default test)");

    auto* c_exp = app.add_subcommand("experiment", "run the full fraction x seed grid and stream results.csv");

    auto* c_sum = app.add_subcommand("summarize", "aggregate results.csv into per-series means and deviations");
    c_sum->add_option("--results", results_flag, "results csv input path (default: <out>/results.csv)");
    c_sum->add_option("--summary", summary_flag, "summary csv output path (default: <out>/summary.csv)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    if (seed_opt->count()) g.seed = seed_val;
    if (out_opt->count()) g.out = out_val;
    if (jobs_opt->count()) g.jobs = jobs_val;

    try {
        Ctx ctx = make_ctx(g);
        if (fraction < 0) fraction = ctx.cfg.fractions.front();
        if (c_retrain->parsed()) {
            if (from_scratch && warm) throw std::runtime_error("--from-scratch and --warm are mutually exclusive");
            if (from_scratch) ctx.cfg.retrain_from_scratch = true;
            if (warm) ctx.cfg.retrain_from_scratch = false;
        }

        if (c_gen->parsed()) return run_gen_data(ctx, g.out);
        if (c_split->parsed()) return run_split(ctx, fraction);
        if (c_train->parsed()) return run_train(ctx, fraction, split_flag, model_out_flag);
        if (c_traces->parsed()) return run_gen_traces(ctx, fraction, split_flag, model_flag, subset, traces_flag);
        if (c_feat->parsed()) return run_features(ctx, fraction, split_flag, traces_flag, features_flag);
        if (c_oracle->parsed()) return run_oracle_train(ctx, features_flag, oracle_flag);
        if (c_aug->parsed()) return run_augment(ctx, fraction, split_flag, model_flag, oracle_flag, augmented_flag);
        if (c_retrain->parsed())
            return run_retrain(ctx, fraction, split_flag, model_flag, augmented_flag, model_out_flag);
        if (c_eval->parsed()) return run_eval(ctx, fraction, split_flag, model_flag, subset);
        if (c_exp->parsed()) return run_experiment(ctx);
        if (c_sum->parsed()) return run_summarize(ctx, results_flag, summary_flag);
    } catch (const std::exception& e) {
        std::cerr << "capp: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
