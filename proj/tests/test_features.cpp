#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "capp/trace_features.hpp"
#include "support/naive_features.hpp"
#include "support/random_traces.hpp"

using namespace capp;

namespace {

LogitTrace constant_trace(int t_steps, std::vector<double> row, std::vector<int> chosen_per_step) {
    LogitTrace tr;
    tr.part_id = 1;
    tr.eos_id = kEosToken;
    for (int t = 0; t < t_steps; ++t) {
        tr.step_logits.push_back(row);
        tr.chosen.push_back(chosen_per_step[static_cast<std::size_t>(t)]);
    }
    return tr;
}

} // namespace

TEST_CASE("uniform logits give the flat-distribution signal values") {
    std::vector<double> row(38, 1.5);
    auto s = step_signals(row);
    CHECK(s.p1 == Catch::Approx(1.0 / 38.0).margin(1e-12));
    CHECK(s.m12 == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.entropy == Catch::Approx(std::log(38.0)).margin(1e-12));
    CHECK(s.perplexity == Catch::Approx(38.0).margin(1e-9));
    CHECK(s.kl_uniform == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.gini == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.variance == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("a dominant logit drives the signals to their one-hot limits") {
    std::vector<double> row(38, 0.0);
    row[kEosToken] = 30.0;
    auto s = step_signals(row);
    CHECK(s.p1 > 0.999999);
    CHECK(s.m12 > 0.999999);
    CHECK(s.entropy < 1e-4);
    CHECK(s.kl_uniform == Catch::Approx(std::log(38.0)).margin(1e-4));
    CHECK(s.gini > 0.97);
}

TEST_CASE("signal invariants hold on random rows") {
    auto eng = rng::make_engine(1234);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> row(38);
        for (auto& x : row) x = 3.0 * rng::normal(eng);
        auto s = step_signals(row);
        CHECK(s.p1 >= s.p2);
        CHECK(s.p2 >= s.p3);
        CHECK(s.p3 >= 0.0);
        CHECK(s.p1 <= 1.0);
        CHECK(s.entropy >= 0.0);
        CHECK(s.entropy <= std::log(38.0) + 1e-12);
        CHECK(s.kl_uniform >= -1e-12);
        CHECK(s.gini >= 0.0);
        CHECK(s.gini < 1.0);
        CHECK(s.variance >= 0.0);
        // the sorted-form Gini must agree with the O(n^2) pairwise definition
        std::vector<double> p = testing::naive::softmax(row);
        CHECK(std::abs(s.gini - testing::naive::gini_pairwise(p)) <= 1e-10);
    }
}

TEST_CASE("non-finite logits are rejected") {
    std::vector<double> row(38, 0.0);
    row[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(step_signals(row), std::invalid_argument);
    row[5] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(step_signals(row), std::invalid_argument);
}

TEST_CASE("extractor matches the naive reference on 200 random traces") {
    auto eng = rng::make_engine(777);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int t_steps = 1 + static_cast<int>(rng::uniform_index(eng, 9));
        auto tr = testing::random_trace(eng, t_steps);
        auto fast = extract_features(tr);
        auto naive = testing::naive::extract(tr);
        for (int i = 0; i < kNumFeatures; ++i)
            worst = std::max(worst, std::abs(fast[static_cast<std::size_t>(i)] - naive[static_cast<std::size_t>(i)]));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("single-step one-hot EOS trace hits the degenerate-length rules") {
    std::vector<double> row(38, 0.0);
    row[kEosToken] = 30.0;
    auto tr = constant_trace(1, row, {kEosToken});
    auto z = extract_features(tr);
    CHECK(z[100] == 1.0);
    CHECK(z[101] == Catch::Approx(0.05));
    CHECK(z[104] > 0.999999);
    for (int i = 60; i < 100; ++i) CHECK(z[static_cast<std::size_t>(i)] == 0.0);
    CHECK(z[102] == 0.0); // repetition rate undefined at one step
    CHECK(z[105] == 0.0);
    CHECK(z[106] == 0.0);
    CHECK(z[112] == Catch::Approx(1.0).margin(1e-6));
    for (int i = 113; i < 132; ++i) CHECK(z[static_cast<std::size_t>(i)] == 0.0);
}

TEST_CASE("feature-vector invariants hold on random traces") {
    auto eng = rng::make_engine(4242);
    for (int trial = 0; trial < 60; ++trial) {
        const int t_steps = 1 + static_cast<int>(rng::uniform_index(eng, 9));
        auto tr = testing::random_trace(eng, t_steps);
        auto z = extract_features(tr);
        for (double v : z) CHECK(std::isfinite(v));
        for (int s = 0; s < 10; ++s) {
            const auto base = static_cast<std::size_t>(6 * s);
            CHECK(z[base] >= z[base + 2] - 1e-12); // mean >= min
            CHECK(z[base] <= z[base + 3] + 1e-12); // mean <= max
            const double r1 = z[static_cast<std::size_t>(60 + 4 * s + 3)];
            CHECK(r1 >= -1.0 - 1e-12);
            CHECK(r1 <= 1.0 + 1e-12);
        }
        CHECK(z[48] == Catch::Approx(std::log(38.0) - z[18]).margin(1e-9)); // KL mean vs H mean
        CHECK(z[107] == Catch::Approx(z[100] * z[108]).margin(1e-9));
        CHECK(z[109] == Catch::Approx(std::exp(-z[108])).margin(1e-9));
        for (int t = t_steps; t < kTraceTMax; ++t) CHECK(z[static_cast<std::size_t>(112 + t)] == 0.0);
        // purity
        CHECK(extract_features(tr) == z);
    }
}

TEST_CASE("permuting the tail below the top three leaves rank features alone") {
    auto eng = rng::make_engine(99);
    auto tr = testing::random_trace(eng, 5);
    auto permuted = tr;
    for (auto& row : permuted.step_logits) {
        // find the top-3 indices, then rotate the remaining entries
        std::vector<std::size_t> idx(row.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
        std::vector<double> tail;
        for (std::size_t i = 3; i < idx.size(); ++i) tail.push_back(row[idx[i]]);
        std::rotate(tail.begin(), tail.begin() + 7, tail.end());
        for (std::size_t i = 3; i < idx.size(); ++i) row[idx[i]] = tail[i - 3];
    }
    auto za = extract_features(tr);
    auto zb = extract_features(permuted);
    // p1, p2, p3, m12, m23 series occupy stat slots for series 0, 1, 2, 5, 6
    for (int s : {0, 1, 2, 5, 6}) {
        for (int k = 0; k < 6; ++k)
            CHECK(za[static_cast<std::size_t>(6 * s + k)] == Catch::Approx(zb[static_cast<std::size_t>(6 * s + k)]).margin(1e-12));
        for (int k = 0; k < 4; ++k)
            CHECK(za[static_cast<std::size_t>(60 + 4 * s + k)] == Catch::Approx(zb[static_cast<std::size_t>(60 + 4 * s + k)]).margin(1e-12));
    }
    for (int t = 0; t < 5; ++t)
        CHECK(za[static_cast<std::size_t>(112 + t)] == Catch::Approx(zb[static_cast<std::size_t>(112 + t)]).margin(1e-12));
}

TEST_CASE("constant rows zero out slopes and difference stats") {
    std::vector<double> row(38);
    auto eng = rng::make_engine(31337);
    for (auto& x : row) x = rng::normal(eng);
    auto tr = constant_trace(6, row, {4, 4, 5, 4, 6, 3});
    auto z = extract_features(tr);
    for (int s = 0; s < 10; ++s) {
        const auto base = static_cast<std::size_t>(60 + 4 * s);
        CHECK(z[base + 0] == 0.0); // mean diff
        CHECK(z[base + 1] == 0.0); // std diff
        CHECK(z[base + 2] == 0.0); // slope
        CHECK(z[base + 3] == 0.0); // autocorr of a constant series
    }
}

TEST_CASE("extractor validates its input") {
    LogitTrace empty;
    CHECK_THROWS_AS(extract_features(empty), std::invalid_argument);

    auto eng = rng::make_engine(12);
    auto tr = testing::random_trace(eng, 6);
    CHECK_THROWS_AS(extract_features(tr, 5), std::invalid_argument);

    auto ragged = tr;
    ragged.step_logits[2].pop_back();
    CHECK_THROWS_AS(extract_features(ragged), std::invalid_argument);

    auto bad_chosen = tr;
    bad_chosen.chosen[0] = 38;
    CHECK_THROWS_AS(extract_features(bad_chosen), std::invalid_argument);
}

TEST_CASE("features file round-trips exactly and validates its header") {
    auto eng = rng::make_engine(55);
    std::vector<FeatureRow> rows;
    for (int i = 0; i < 5; ++i) {
        FeatureRow r;
        r.part_id = 100 + i;
        if (i % 3 == 0)
            r.label = i % 2;
        auto tr = testing::random_trace(eng, 1 + static_cast<int>(rng::uniform_index(eng, 9)));
        r.z = extract_features(tr);
        rows.push_back(r);
    }
    auto dir = std::filesystem::temp_directory_path() / "capp_features_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "features.csv";
    write_features(rows, path);

    auto back = read_features(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].part_id == rows[i].part_id);
        CHECK(back[i].label == rows[i].label);
        CHECK(back[i].z == rows[i].z); // shortest round-trip formatting is exact
    }

    io::atomic_write(path, "# schema=fv0\nwhatever\n");
    CHECK_THROWS_AS(read_features(path), std::runtime_error);
    std::filesystem::remove_all(dir);
}
