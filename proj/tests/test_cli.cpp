// Drives the installed `capp` binary as a subprocess: exit codes, summary
// lines, staged-flow artifacts, and rerun determinism. Uses a micro model
// config so the whole suite stays in CI territory.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "capp/config.hpp"
#include "capp/io.hpp"

using namespace capp;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

fs::path scratch_dir() {
    auto dir = fs::temp_directory_path() / "capp_test_cli";
    fs::create_directories(dir);
    return dir;
}

CliResult run_cli(const std::string& args) {
    auto dir = scratch_dir();
    auto so = dir / "stdout.txt";
    auto se = dir / "stderr.txt";
    std::string cmd = std::string(CAPP_BIN) + " " + args + " > " + so.string() + " 2> " + se.string();
    int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = io::read_file(so);
    r.err = io::read_file(se);
    return r;
}

// First line of stdout as key=value fields; field 0 is the subcommand name.
std::map<std::string, std::string> summary_fields(const std::string& out) {
    std::map<std::string, std::string> kv;
    std::istringstream line(out.substr(0, out.find('\n')));
    std::string tok;
    line >> kv["cmd"];
    while (line >> tok) {
        auto eq = tok.find('=');
        if (eq != std::string::npos) kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    return kv;
}

RunConfig micro_config(const fs::path& root) {
    RunConfig cfg;
    cfg.model.d_model = 16;
    cfg.model.n_heads = 2;
    cfg.model.n_layers = 1;
    cfg.model.d_ff = 32;
    cfg.train.epochs = 20;
    cfg.retrain_epochs = 2;
    cfg.oracle.gbdt.n_trees = 20;
    cfg.fractions = {0.01};
    cfg.proportions = {1.0};
    cfg.seeds = {1};
    cfg.out_dir = (root / "out").string();
    cfg.dataset = (root / "data" / "dataset.jsonl").string();
    return cfg;
}

// One shared workspace: gen-data and the staged flow write here once and the
// later sections reuse the artifacts.
const fs::path& workspace() {
    static fs::path root = [] {
        fs::path r = scratch_dir() / "flow";
        fs::remove_all(r);
        fs::create_directories(r);
        save_config(r / "config.toml", micro_config(r));
        return r;
    }();
    return root;
}

std::string cfg_arg() { return "--config " + (workspace() / "config.toml").string(); }

} // namespace

TEST_CASE("help is available everywhere and exits 0") {
    auto top = run_cli("--help");
    CHECK(top.code == 0);
    for (const char* name : {"gen-data", "split", "train", "gen-traces", "features", "oracle-train", "augment",
                             "retrain", "eval", "experiment", "summarize"})
        CHECK(top.out.find(name) != std::string::npos);

    auto sub = run_cli("retrain --help");
    CHECK(sub.code == 0);
    CHECK(sub.out.find("--from-scratch") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
    CHECK(run_cli("frobnicate").code == 1);
    CHECK(run_cli("eval --no-such-flag").code == 1);
    CHECK(run_cli("").code == 1); // missing subcommand
    CHECK(run_cli("split --fraction 2.0").code == 1);
}

TEST_CASE("runtime failures exit 2 and name the missing path") {
    auto r = run_cli(cfg_arg() + " train");
    REQUIRE(r.code == 2);
    CHECK(r.err.find("dataset.jsonl") != std::string::npos);

    auto bad_cfg = run_cli("--config /nonexistent/capp.toml gen-data");
    CHECK(bad_cfg.code == 2);
}

TEST_CASE("staged flow runs end to end with chained defaults") {
    const fs::path& root = workspace();
    const fs::path out = root / "out";

    auto gen = run_cli(cfg_arg() + " gen-data");
    REQUIRE(gen.code == 0);
    auto gf = summary_fields(gen.out);
    CHECK(gf.at("cmd") == "gen-data");
    CHECK(gf.at("parts") == "2048");
    CHECK(fs::exists(root / "data" / "dataset.jsonl"));
    CHECK(fs::exists(root / "data" / "vocab.json"));

    auto split = run_cli(cfg_arg() + " split --fraction 0.01");
    REQUIRE(split.code == 0);
    auto sf = summary_fields(split.out);
    CHECK(sf.at("train") == "20");
    CHECK(sf.at("val") == "205");
    CHECK(sf.at("test") == "1823");
    CHECK(fs::exists(out / "split_0.01_1.json"));

    // rerunning a stage overwrites with identical bytes
    std::string manifest_before = io::read_file(out / "split_0.01_1.json");
    REQUIRE(run_cli(cfg_arg() + " split --fraction 0.01").code == 0);
    CHECK(io::read_file(out / "split_0.01_1.json") == manifest_before);

    auto train = run_cli(cfg_arg() + " train");
    REQUIRE(train.code == 0);
    CHECK(summary_fields(train.out).at("pairs") != "0");
    CHECK(fs::exists(out / "model.ckpt"));

    auto traces = run_cli(cfg_arg() + " gen-traces --subset test");
    REQUIRE(traces.code == 0);
    auto tf = summary_fields(traces.out);
    CHECK(tf.at("parts") == "1823");
    CHECK(fs::exists(out / "traces.jsonl"));

    auto feats = run_cli(cfg_arg() + " features");
    REQUIRE(feats.code == 0);
    CHECK(summary_fields(feats.out).at("rows") == "1823");
    CHECK(fs::exists(out / "features.csv"));

    // test-part traces carry no labels, so oracle-train must refuse them
    auto unlabeled = run_cli(cfg_arg() + " oracle-train");
    CHECK(unlabeled.code == 2);

    // labeled rows come from the train+val subsets
    REQUIRE(run_cli(cfg_arg() + " gen-traces --subset all").code == 0);
    auto refeat = run_cli(cfg_arg() + " features");
    REQUIRE(refeat.code == 0);
    CHECK(summary_fields(refeat.out).at("labeled") == "225");

    auto oracle = run_cli(cfg_arg() + " oracle-train");
    REQUIRE(oracle.code == 0);
    CHECK(fs::exists(out / "oracle.json"));

    auto aug = run_cli(cfg_arg() + " augment");
    REQUIRE(aug.code == 0);
    auto af = summary_fields(aug.out);
    CHECK(std::stoi(af.at("pool")) == std::stoi(af.at("kept")) + std::stoi(af.at("rejected")));
    CHECK(fs::exists(out / "augmented.jsonl"));
    CHECK(fs::exists(out / "rejected.jsonl"));

    auto retrain = run_cli(cfg_arg() + " retrain --warm");
    REQUIRE(retrain.code == 0);
    CHECK(summary_fields(retrain.out).at("mode") == "warm");
    CHECK(fs::exists(out / "model_retrained.ckpt"));

    auto eval = run_cli(cfg_arg() + " eval --model " + (out / "model_retrained.ckpt").string());
    REQUIRE(eval.code == 0);
    double acc = std::stod(summary_fields(eval.out).at("accuracy"));
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);

    CHECK(run_cli(cfg_arg() + " eval --subset nonsense").code == 2);
}

TEST_CASE("experiment and summarize produce the documented files, reruns are bit-exact") {
    const fs::path& root = workspace();
    const fs::path out = root / "out";
    REQUIRE(fs::exists(root / "data" / "dataset.jsonl")); // staged flow ran first

    auto exp = run_cli(cfg_arg() + " experiment");
    REQUIRE(exp.code == 0);
    auto ef = summary_fields(exp.out);
    CHECK(ef.at("cells") == "1");
    CHECK(ef.at("rows") == "3"); // baseline + 2 strategies x 1 proportion
    CHECK(ef.at("failed") == "0");

    std::string results = io::read_file(out / "results.csv");
    CHECK(results.find("fraction,strategy,proportion,seed,") == 0);
    CHECK(results.find("baseline") != std::string::npos);
    CHECK(results.find("detector") != std::string::npos);

    // the echoed config is canonical: load + save round-trips byte-identically
    std::string echoed = io::read_file(out / "config.toml");
    CHECK(write_config(load_config(out / "config.toml")) == echoed);

    auto rerun = run_cli(cfg_arg() + " experiment");
    REQUIRE(rerun.code == 0);
    CHECK(io::read_file(out / "results.csv") == results);

    auto sum = run_cli(cfg_arg() + " summarize");
    REQUIRE(sum.code == 0);
    std::string summary = io::read_file(out / "summary.csv");
    CHECK(summary.find("fraction,strategy,proportion,n_seeds,") == 0);
    // baseline replicated at each swept proportion plus the two arm rows
    CHECK(std::stoi(summary_fields(sum.out).at("rows_out")) == 3);
}

TEST_CASE("seed and out overrides change the run identity") {
    const fs::path& root = workspace();
    const fs::path alt = root / "alt";
    auto r = run_cli(cfg_arg() + " --seed 5 --out " + alt.string() + " split --fraction 0.01");
    REQUIRE(r.code == 0);
    CHECK(fs::exists(alt / "split_0.01_5.json"));
}
