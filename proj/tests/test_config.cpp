#include "capp/config.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

using namespace capp;

namespace {

bool same_config(const RunConfig& a, const RunConfig& b) {
    return write_config(a) == write_config(b);
}

} // namespace

TEST_CASE("canonical config round-trips byte-identically") {
    RunConfig cfg;
    const std::string text = write_config(cfg);
    RunConfig parsed = parse_config(text);
    CHECK(write_config(parsed) == text);
    CHECK(parsed.model == cfg.model);
    CHECK(parsed.fractions == cfg.fractions);
    CHECK(parsed.proportions == cfg.proportions);
    CHECK(parsed.seeds == cfg.seeds);
    CHECK(parsed.strategies == cfg.strategies);
    CHECK(parsed.train.learning_rate == cfg.train.learning_rate);
    CHECK(parsed.train.adam_eps == cfg.train.adam_eps);
    CHECK(parsed.retrain_epochs == cfg.retrain_epochs);
    CHECK(parsed.retrain_from_scratch == cfg.retrain_from_scratch);
    CHECK(parsed.oracle.gbdt.n_trees == cfg.oracle.gbdt.n_trees);
    CHECK(parsed.oracle.threshold == cfg.oracle.threshold);
}

TEST_CASE("non-default values survive the round-trip") {
    RunConfig cfg;
    cfg.fractions = {0.01, 0.025};
    cfg.proportions = {1.0};
    cfg.seeds = {7, 11, 13, 17};
    cfg.strategies = {"baseline", "detector"};
    cfg.jobs = 4;
    cfg.out_dir = "runs/exp 1";
    cfg.model.n_layers = 3;
    cfg.train.learning_rate = 1e-3;
    cfg.train.epochs = 12;
    cfg.retrain_epochs = 5;
    cfg.retrain_from_scratch = !cfg.retrain_from_scratch;
    cfg.oracle.gbdt.subsample = 1.0;
    cfg.oracle.threshold = 0.75;
    RunConfig parsed = parse_config(write_config(cfg));
    CHECK(same_config(parsed, cfg));
    CHECK(parsed.seeds == cfg.seeds);
    CHECK(parsed.retrain_from_scratch == cfg.retrain_from_scratch);
}

TEST_CASE("strings with quotes and backslashes round-trip") {
    RunConfig cfg;
    cfg.out_dir = "runs/\"q\"\\back";
    cfg.dataset = "a,b#c";
    RunConfig parsed = parse_config(write_config(cfg));
    CHECK(parsed.out_dir == cfg.out_dir);
    CHECK(parsed.dataset == cfg.dataset);
    CHECK(write_config(parsed) == write_config(cfg));
}

TEST_CASE("key order and comments do not matter") {
    const std::string text =
        "# run settings\n"
        "\n"
        "[train]\n"
        "epochs = 42   # inline note\n"
        "\n"
        "[experiment]\n"
        "seeds = [5]\n"
        "jobs = 2\n"
        "fractions = [0.05, 0.01]\n";
    RunConfig cfg = parse_config(text);
    CHECK(cfg.train.epochs == 42);
    CHECK(cfg.seeds == std::vector<std::uint64_t>{5});
    CHECK(cfg.jobs == 2);
    CHECK(cfg.fractions == std::vector<double>{0.05, 0.01});
    CHECK(cfg.train.learning_rate == RunConfig{}.train.learning_rate);
}

TEST_CASE("a minimal file keeps defaults for absent keys") {
    RunConfig cfg = parse_config("[oracle]\nn_trees = 3\n");
    RunConfig def;
    CHECK(cfg.oracle.gbdt.n_trees == 3);
    def.oracle.gbdt.n_trees = 3;
    CHECK(same_config(cfg, def));
}

TEST_CASE("malformed input is rejected with a line number") {
    CHECK_THROWS_WITH(parse_config("[experiment]\nbogus = 1\n"), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(parse_config("[experiment]\njobs = 1\njobs = 2\n"),
                      Catch::Matchers::ContainsSubstring("duplicate"));
    CHECK_THROWS(parse_config("[experiment\njobs = 1\n"));
    CHECK_THROWS(parse_config("jobs 1\n"));
    CHECK_THROWS(parse_config("[experiment]\njobs = \"two\"\n"));
    CHECK_THROWS(parse_config("[experiment]\nfractions = [0.01\n"));
    CHECK_THROWS(parse_config("[experiment]\nfractions = 0.01\n"));
    CHECK_THROWS(parse_config("[experiment]\nseeds = [1, ]\n"));
    CHECK_THROWS(parse_config("[paths]\nout_dir = runs\n"));
    CHECK_THROWS(parse_config("[train]\nretrain_from_scratch = yes\n"));
}

TEST_CASE("validation rejects out-of-contract settings") {
    auto reject = [](auto mutate) {
        RunConfig cfg;
        mutate(cfg);
        CHECK_THROWS_AS(parse_config(write_config(cfg)), std::invalid_argument);
    };
    reject([](RunConfig& c) { c.fractions = {0.2}; });
    reject([](RunConfig& c) { c.fractions.clear(); });
    reject([](RunConfig& c) { c.proportions = {1.5}; });
    reject([](RunConfig& c) { c.proportions.clear(); });
    reject([](RunConfig& c) { c.seeds.clear(); });
    reject([](RunConfig& c) { c.seeds = {3, 3}; });
    reject([](RunConfig& c) { c.strategies = {"oracle"}; });
    reject([](RunConfig& c) { c.strategies = {"baseline", "baseline"}; });
    reject([](RunConfig& c) { c.oracle.val_fraction = 1.0; });
    reject([](RunConfig& c) { c.oracle.threshold = 0.0; });
    reject([](RunConfig& c) { c.model.d_model = 30; });

    CHECK_THROWS_AS(parse_config("[experiment]\njobs = 0\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_config("[experiment]\nproportions = [0]\n"), std::invalid_argument);
}

TEST_CASE("config files save and load atomically") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "capp_test_config.toml";
    RunConfig cfg;
    cfg.seeds = {101, 202, 303};
    cfg.retrain_epochs = 64;
    save_config(path, cfg);
    RunConfig loaded = load_config(path);
    CHECK(same_config(loaded, cfg));
    save_config(path, loaded);
    CHECK(io::read_file(path) == write_config(cfg));
    fs::remove(path);
}
