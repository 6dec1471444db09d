#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "capp/dataset.hpp"
#include "capp/generate.hpp"
#include "capp/model.hpp"
#include "capp/tokenizer.hpp"
#include "capp/train.hpp"

using namespace capp;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 32;
    return cfg;
}

std::vector<double> softmax(const std::vector<double>& row) {
    double mx = *std::max_element(row.begin(), row.end());
    std::vector<double> p(row.size());
    double z = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) z += p[i] = std::exp(row[i] - mx);
    for (auto& x : p) x /= z;
    return p;
}

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "capp_model_test";
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("parameter count matches the closed-form size of the architecture") {
    ModelConfig cfg; // defaults
    const std::size_t v = 38, d = 64, c = 17, ff = 256, layers = 2;
    const std::size_t per_layer = 4 * (d * d + d) // q, k, v, o projections
                                  + 4 * d         // two layer norms
                                  + (d * ff + ff) + (ff * d + d);
    const std::size_t expected = v * d + c * d + layers * per_layer + 2 * d;
    CHECK(param_count(cfg) == expected);
    CHECK(param_count(cfg) == 103616);

    Model m(cfg);
    CHECK(m.params.size() == expected);
    CHECK(m.layout.lnf_b + d == m.layout.total);
}

TEST_CASE("config validation rejects malformed dimensions") {
    ModelConfig cfg;
    cfg.n_heads = 3; // 64 % 3 != 0
    CHECK_THROWS_AS(Model(cfg), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.d_model = 0;
    CHECK_THROWS_AS(Model(cfg), std::invalid_argument);
}

TEST_CASE("initialization is seed-deterministic with unit gains and zero biases") {
    ModelConfig cfg;
    Model a = init_model(cfg, 42);
    Model b = init_model(cfg, 42);
    Model c = init_model(cfg, 43);
    CHECK(a.params == b.params);
    CHECK(a.params != c.params);

    const auto d = static_cast<std::size_t>(cfg.d_model);
    for (std::size_t i = 0; i < d; ++i) {
        CHECK(a.params[a.layout.layers[0].ln1_g + i] == 1.0);
        CHECK(a.params[a.layout.layers[0].ln1_b + i] == 0.0);
        CHECK(a.params[a.layout.layers[0].bq + i] == 0.0);
        CHECK(a.params[a.layout.lnf_g + i] == 1.0);
    }
    // weights actually drawn, not left at zero
    double sq = 0.0;
    for (std::size_t i = 0; i < d * d; ++i) sq += a.params[a.layout.layers[0].wq + i] * a.params[a.layout.layers[0].wq + i];
    CHECK(std::sqrt(sq / static_cast<double>(d * d)) == Catch::Approx(kInitStd).margin(0.01));
}

TEST_CASE("forward produces one finite logit row per position") {
    Model m = init_model(ModelConfig{}, 1);
    auto part = PartEncoding::from_index(77);
    auto prompt = tokenize(part);
    auto rows = forward_rows(m, {prompt.begin(), prompt.end()});
    REQUIRE(rows.size() == prompt.size());
    for (const auto& row : rows) {
        REQUIRE(row.size() == static_cast<std::size_t>(kVocabSize));
        for (double x : row) CHECK(std::isfinite(x));
        auto p = softmax(row);
        CHECK(std::accumulate(p.begin(), p.end(), 0.0) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("forward is causal: extending the sequence never changes earlier rows") {
    Model m = init_model(ModelConfig{}, 5);
    auto part = PartEncoding::from_index(900);
    auto chain = generate_dataset().record_for(900).chains[0];
    auto full = tokenize(part, chain);
    auto prefix_rows = forward_rows(m, std::vector<int>(full.begin(), full.begin() + 8));
    auto full_rows = forward_rows(m, {full.begin(), full.end()});
    for (std::size_t t = 0; t < prefix_rows.size(); ++t)
        for (int v = 0; v < kVocabSize; ++v)
            CHECK(std::abs(prefix_rows[t][static_cast<std::size_t>(v)] - full_rows[t][static_cast<std::size_t>(v)]) <= 1e-6);
}

TEST_CASE("forward rejects over-length and out-of-vocabulary input") {
    Model m = init_model(tiny_config(), 2);
    Workspace ws(m.cfg);
    std::vector<int> too_long(static_cast<std::size_t>(m.cfg.context_len) + 1, 4);
    CHECK_THROWS_AS(forward(m, too_long, ws), std::invalid_argument);
    std::vector<int> bad_token = {1, 2, kVocabSize};
    CHECK_THROWS_AS(forward(m, bad_token, ws), std::invalid_argument);
    std::vector<int> empty;
    CHECK_THROWS_AS(forward(m, empty, ws), std::invalid_argument);

    Workspace other(ModelConfig{});
    std::vector<int> ok = {1, 2, 3};
    CHECK_THROWS_AS(forward(m, ok, other), std::invalid_argument);
}

TEST_CASE("loss ignores targets at prompt positions") {
    Model m = init_model(tiny_config(), 9);
    Workspace ws(m.cfg);
    auto ds = generate_dataset();
    const auto& rec = ds.record_for(123);
    auto full = tokenize(rec.part, rec.chains[0]);
    std::vector<int> inputs(full.begin(), full.end() - 1);
    std::vector<int> targets(full.begin() + 1, full.end());

    const double base = masked_loss_sum(m, inputs, targets, ws);
    for (int t = 0; t < kPromptLen - 1; ++t) {
        auto perturbed = targets;
        perturbed[static_cast<std::size_t>(t)] = (targets[static_cast<std::size_t>(t)] + 7) % kVocabSize;
        CHECK(masked_loss_sum(m, inputs, perturbed, ws) == base);
    }
    // an active-row target does matter
    auto perturbed = targets;
    perturbed[static_cast<std::size_t>(kPromptLen - 1)] = kPadToken;
    CHECK(masked_loss_sum(m, inputs, perturbed, ws) != base);
}

TEST_CASE("a single pair is memorized to near-zero loss") {
    Model m = init_model(ModelConfig{}, 11);
    auto ds = generate_dataset();
    std::vector<TrainPair> pairs = {{400, ds.record_for(400).chains[0]}};
    TrainOptions opt;
    opt.learning_rate = 3e-3;
    opt.epochs = 400;
    opt.seed = 11;
    auto res = train_model(m, pairs, opt);
    REQUIRE(res.epoch_loss.size() == 400);
    CHECK(res.epoch_loss.back() < 0.01);
}

TEST_CASE("training loss decreases on a small mixed set") {
    Model m = init_model(ModelConfig{}, 13);
    auto ds = generate_dataset();
    std::vector<TrainPair> pairs;
    for (int idx = 0; idx < 2048; idx += 97) pairs.push_back({idx, ds.record_for(idx).chains[0]});
    TrainOptions opt;
    opt.epochs = 100;
    opt.seed = 13;
    auto res = train_model(m, pairs, opt);
    REQUIRE(res.epoch_loss.size() == 100);
    CHECK(res.epoch_loss.back() < 0.5 * res.epoch_loss.front());
    for (double l : res.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("training is bit-deterministic per seed") {
    auto run = [](std::uint64_t seed) {
        Model m = init_model(tiny_config(), seed);
        auto ds = generate_dataset();
        std::vector<TrainPair> pairs;
        for (int idx = 0; idx < 600; idx += 37) pairs.push_back({idx, ds.record_for(idx).chains[0]});
        TrainOptions opt;
        opt.epochs = 3;
        opt.seed = seed;
        train_model(m, pairs, opt);
        return m.params;
    };
    CHECK(run(21) == run(21));
    CHECK(run(21) != run(22));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    Model m = init_model(tiny_config(), 31);
    m.params[5] = 0.1234567890123456789;
    auto path = temp_dir() / "model.ckpt";
    save_checkpoint(m, path);
    Model back = load_checkpoint(path);
    CHECK(back.cfg == m.cfg);
    CHECK(back.params == m.params);

    auto bogus = temp_dir() / "bogus.ckpt";
    io::atomic_write(bogus, "not a checkpoint at all");
    CHECK_THROWS_AS(load_checkpoint(bogus), std::runtime_error);
    std::filesystem::remove(path);
    std::filesystem::remove(bogus);
}

TEST_CASE("greedy decoding respects the step cap and trace shape") {
    Model m = init_model(ModelConfig{}, 17);
    Workspace ws(m.cfg);
    auto part = PartEncoding::from_index(1500);
    auto gen = generate(m, part, ws);
    CHECK(gen.trace.part_id == 1500);
    CHECK(gen.trace.steps() >= 1);
    CHECK(gen.trace.steps() <= kMaxDecodeSteps);
    REQUIRE(gen.trace.step_logits.size() == gen.trace.chosen.size());
    for (const auto& row : gen.trace.step_logits) CHECK(row.size() == static_cast<std::size_t>(kVocabSize));
    if (!gen.trace.hit_cap) CHECK(gen.trace.chosen.back() == kEosToken);
    if (gen.trace.hit_cap) CHECK(gen.malformed());
    if (!gen.malformed()) {
        CHECK(gen.chain->ops.size() >= static_cast<std::size_t>(kMinChainLen));
        CHECK(gen.chain->ops.size() <= static_cast<std::size_t>(kMaxChainLen));
        for (int t : gen.chain->ops) CHECK(is_op_token(t));
    }
}

TEST_CASE("an untrained model scores near zero sequence accuracy") {
    Model m = init_model(ModelConfig{}, 19);
    auto ds = generate_dataset();
    std::vector<int> parts;
    for (int idx = 0; idx < 2048; idx += 11) parts.push_back(idx);
    CHECK(sequence_accuracy(m, parts, ds) < 0.1);
}

TEST_CASE("a handful of memorized parts decode back to feasible chains") {
    Model m = init_model(ModelConfig{}, 23);
    auto ds = generate_dataset();
    std::vector<int> part_ids = {10, 410, 820, 1230, 1640};
    std::vector<TrainPair> pairs;
    for (int idx : part_ids) pairs.push_back({idx, ds.record_for(idx).chains[0]});
    TrainOptions opt;
    opt.learning_rate = 3e-3;
    opt.epochs = 300;
    opt.seed = 23;
    train_model(m, pairs, opt);
    CHECK(sequence_accuracy(m, part_ids, ds) == 1.0);
}

TEST_CASE("sequence accuracy rejects unknown parts") {
    Model m = init_model(tiny_config(), 29);
    auto ds = generate_dataset();
    std::vector<int> bad = {kNumParts};
    CHECK_THROWS(sequence_accuracy(m, bad, ds));
}

TEST_CASE("traces round-trip through jsonl at 9 significant digits") {
    Model m = init_model(ModelConfig{}, 37);
    Workspace ws(m.cfg);
    std::vector<LogitTrace> traces;
    for (int idx : {3, 700, 2000}) traces.push_back(generate(m, PartEncoding::from_index(idx), ws).trace);
    auto path = temp_dir() / "traces.jsonl";
    write_traces(traces, path);
    auto back = read_traces(path);
    REQUIRE(back.size() == traces.size());
    for (std::size_t i = 0; i < traces.size(); ++i) {
        CHECK(back[i].part_id == traces[i].part_id);
        CHECK(back[i].chosen == traces[i].chosen);
        CHECK(back[i].hit_cap == traces[i].hit_cap);
        REQUIRE(back[i].step_logits.size() == traces[i].step_logits.size());
        for (std::size_t t = 0; t < traces[i].step_logits.size(); ++t)
            for (std::size_t v = 0; v < traces[i].step_logits[t].size(); ++v)
                CHECK(back[i].step_logits[t][v] == io::round_sig9(traces[i].step_logits[t][v]));
    }
    std::filesystem::remove(path);
}
