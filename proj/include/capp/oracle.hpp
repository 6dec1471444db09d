#pragma once

// The error oracle: a binary classifier that predicts whether a greedy
// generation is correct, trained on the sequence model's behavior on its own
// labeled parts. The boosted-tree backend lives in gbdt.hpp behind a small
// fit/predict surface so another classifier could be swapped in.
//
// Fit protocol: rows are first sorted canonically (feature vector, then
// label, then part id) so the fit is invariant to input row order; an 80/20
// re-split driven by the oracle seed provides the early-stopping validation
// set. A single-class dataset degrades to a constant classifier at the class
// prior.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capp/dataset.hpp"
#include "capp/gbdt.hpp"
#include "capp/generate.hpp"
#include "capp/io.hpp"
#include "capp/trace_features.hpp"

#include <json.hpp>

namespace capp {

inline constexpr char kOracleSchema[] = "oracle-v1";

struct OracleDataset {
    std::vector<FeatureRow> rows; // every row labeled
};

struct OracleOptions {
    GbdtOptions gbdt;
    double val_fraction = 0.2;
    double threshold = 0.5; // decision boundary on the predicted probability
};

struct GbdtOracle {
    std::string feature_schema = kFeatureSchema;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    bool constant_fallback = false;
    GbdtModel model;
};

struct OraclePrediction {
    double probability = 0.0;
    int label = 0;
};

// One row per part: generate greedily, featurize the trace, label 1 iff the
// chain exactly matches a feasible chain. Malformed generations are label 0.
inline OracleDataset build_oracle_dataset(const Model& m, std::span<const int> part_indices, const Dataset& ds) {
    OracleDataset out;
    out.rows.reserve(part_indices.size());
    Workspace ws(m.cfg);
    for (int idx : part_indices) {
        const auto& rec = ds.record_for(idx);
        auto gen = generate(m, rec.part, ws);
        FeatureRow row;
        row.part_id = idx;
        row.z = extract_features(gen.trace);
        const bool correct = !gen.malformed() &&
                             std::find(rec.chains.begin(), rec.chains.end(), *gen.chain) != rec.chains.end();
        row.label = correct ? 1 : 0;
        out.rows.push_back(std::move(row));
    }
    return out;
}

// Constant classifier at a fixed prior; also the single-class fallback.
inline GbdtOracle constant_oracle(double prior, double threshold = 0.5) {
    GbdtOracle o;
    o.threshold = threshold;
    o.constant_fallback = true;
    o.model.base_score = logit(std::clamp(prior, 1e-6, 1.0 - 1e-6));
    return o;
}

inline GbdtOracle fit_oracle(const OracleDataset& ds, std::uint64_t seed, const OracleOptions& opt = {}) {
    if (ds.rows.empty()) throw std::invalid_argument("fit_oracle: empty dataset");
    for (const auto& r : ds.rows)
        if (!r.label) throw std::invalid_argument("fit_oracle: unlabeled row");

    // canonical order makes the fit a function of the row multiset
    std::vector<const FeatureRow*> rows;
    rows.reserve(ds.rows.size());
    for (const auto& r : ds.rows) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const FeatureRow* a, const FeatureRow* b) {
        if (a->z != b->z) return a->z < b->z;
        if (*a->label != *b->label) return *a->label < *b->label;
        return a->part_id < b->part_id;
    });

    double pos = 0.0;
    for (const auto* r : rows) pos += *r->label;
    if (pos == 0.0 || pos == static_cast<double>(rows.size())) {
        std::cerr << "warning: single-class oracle dataset, fitting a constant classifier\n";
        auto o = constant_oracle(pos / static_cast<double>(rows.size()), opt.threshold);
        o.seed = seed;
        o.model.options = opt.gbdt;
        return o;
    }

    auto eng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::oracle_fit));
    auto perm = rng::permutation(rows.size(), eng);
    auto n_val = static_cast<std::size_t>(std::llround(opt.val_fraction * static_cast<double>(rows.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, rows.size() - 1);

    std::vector<FeatureVector> x_fit, x_val;
    std::vector<int> y_fit, y_val;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const auto* r = rows[perm[i]];
        if (i < n_val) {
            x_val.push_back(r->z);
            y_val.push_back(*r->label);
        } else {
            x_fit.push_back(r->z);
            y_fit.push_back(*r->label);
        }
    }

    GbdtOracle o;
    o.threshold = opt.threshold;
    o.seed = seed;
    o.model = fit_gbdt(x_fit, y_fit, opt.gbdt, seed, x_val, y_val);
    return o;
}

inline OraclePrediction oracle_predict(const GbdtOracle& o, const FeatureVector& z) {
    if (o.feature_schema != kFeatureSchema)
        throw std::invalid_argument("oracle_predict: feature schema mismatch (" + o.feature_schema + ")");
    OraclePrediction pr;
    pr.probability = o.model.predict_proba(z);
    pr.label = pr.probability >= o.threshold ? 1 : 0;
    return pr;
}

inline double oracle_accuracy(const GbdtOracle& o, const OracleDataset& ds) {
    if (ds.rows.empty()) throw std::invalid_argument("oracle_accuracy: empty dataset");
    int hit = 0;
    for (const auto& r : ds.rows) {
        if (!r.label) throw std::invalid_argument("oracle_accuracy: unlabeled row");
        if (oracle_predict(o, r.z).label == *r.label) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(ds.rows.size());
}

// --- oracle checkpoint ---------------------------------------------------------

inline nlohmann::json oracle_to_json(const GbdtOracle& o) {
    nlohmann::json j;
    j["schema"] = kOracleSchema;
    j["feature_schema"] = o.feature_schema;
    j["threshold"] = o.threshold;
    j["seed"] = o.seed;
    j["constant_fallback"] = o.constant_fallback;
    j["base_score"] = o.model.base_score;
    const auto& op = o.model.options;
    j["options"] = {{"n_trees", op.n_trees},         {"max_depth", op.max_depth}, {"learning_rate", op.learning_rate},
                    {"subsample", op.subsample},     {"lambda", op.lambda},       {"min_gain", op.min_gain},
                    {"min_leaf", op.min_leaf},       {"early_stop_patience", op.early_stop_patience}};
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : o.model.trees) {
        nlohmann::json tj;
        for (const auto& nd : t.nodes) {
            tj["feature"].push_back(nd.feature);
            tj["threshold"].push_back(nd.threshold);
            tj["left"].push_back(nd.left);
            tj["right"].push_back(nd.right);
            tj["value"].push_back(nd.value);
        }
        trees.push_back(std::move(tj));
    }
    j["trees"] = std::move(trees);
    return j;
}

inline GbdtOracle oracle_from_json(const nlohmann::json& j) {
    if (j.at("schema").get<std::string>() != kOracleSchema) throw std::runtime_error("oracle file: unknown schema");
    GbdtOracle o;
    o.feature_schema = j.at("feature_schema").get<std::string>();
    o.threshold = j.at("threshold").get<double>();
    o.seed = j.at("seed").get<std::uint64_t>();
    o.constant_fallback = j.at("constant_fallback").get<bool>();
    o.model.base_score = j.at("base_score").get<double>();
    const auto& op = j.at("options");
    o.model.options.n_trees = op.at("n_trees").get<int>();
    o.model.options.max_depth = op.at("max_depth").get<int>();
    o.model.options.learning_rate = op.at("learning_rate").get<double>();
    o.model.options.subsample = op.at("subsample").get<double>();
    o.model.options.lambda = op.at("lambda").get<double>();
    o.model.options.min_gain = op.at("min_gain").get<double>();
    o.model.options.min_leaf = op.at("min_leaf").get<int>();
    o.model.options.early_stop_patience = op.at("early_stop_patience").get<int>();
    for (const auto& tj : j.at("trees")) {
        Tree t;
        const auto n = tj.at("feature").size();
        for (std::size_t i = 0; i < n; ++i) {
            TreeNode nd;
            nd.feature = tj.at("feature")[i].get<int>();
            nd.threshold = tj.at("threshold")[i].get<double>();
            nd.left = tj.at("left")[i].get<int>();
            nd.right = tj.at("right")[i].get<int>();
            nd.value = tj.at("value")[i].get<double>();
            t.nodes.push_back(nd);
        }
        o.model.trees.push_back(std::move(t));
    }
    return o;
}

inline void save_oracle(const GbdtOracle& o, const std::filesystem::path& path) {
    io::atomic_write(path, oracle_to_json(o).dump(2) + "\n");
}

inline GbdtOracle load_oracle(const std::filesystem::path& path) {
    return oracle_from_json(nlohmann::json::parse(io::read_file(path)));
}

} // namespace capp
