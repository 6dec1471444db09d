#pragma once

// Gradient-boosted regression trees on logistic loss, second order:
// g = p - y, h = p(1 - p), leaf value = -sum(g) / (sum(h) + lambda), split
// gain = 0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)). Splits are axis
// aligned with midpoint thresholds; rows route left when z[feature] < thr.
//
// Determinism: feature and split candidates are scanned in fixed order and
// ties keep the first candidate; per-round subsample indices derive from
// (seed, round), never from the data; everything is single-threaded.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "capp/rng.hpp"
#include "capp/trace_features.hpp"

namespace capp {

struct GbdtOptions {
    int n_trees = 200;
    int max_depth = 4;
    double learning_rate = 0.1;
    double subsample = 0.8;
    double lambda = 1.0;
    double min_gain = 1e-6;
    int min_leaf = 2;
    int early_stop_patience = 20; // rounds without val-logloss improvement

    void validate() const {
        if (n_trees < 0 || max_depth < 1 || min_leaf < 1) throw std::invalid_argument("GbdtOptions: bad tree shape");
        if (!(learning_rate > 0.0) || !(subsample > 0.0) || subsample > 1.0) throw std::invalid_argument("GbdtOptions: bad rates");
        if (lambda < 0.0 || min_gain < 0.0) throw std::invalid_argument("GbdtOptions: bad regularization");
    }
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double eval(const FeatureVector& z) const {
        int at = 0;
        while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(at)];
            at = z[static_cast<std::size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }

    bool is_stump() const { return nodes.size() == 1; }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct GbdtModel {
    GbdtOptions options;
    double base_score = 0.0;
    std::vector<Tree> trees;

    double raw_score(const FeatureVector& z, std::size_t first_n_trees = std::numeric_limits<std::size_t>::max()) const {
        double s = base_score;
        const std::size_t n = std::min(first_n_trees, trees.size());
        for (std::size_t i = 0; i < n; ++i) s += options.learning_rate * trees[i].eval(z);
        return s;
    }

    double predict_proba(const FeatureVector& z) const { return sigmoid(raw_score(z)); }
};

namespace detail {

struct TreeBuilder {
    const std::vector<FeatureVector>& x;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    const GbdtOptions& opt;
    Tree tree;

    int build(std::vector<std::size_t>& idx, int depth) {
        double g_sum = 0.0, h_sum = 0.0;
        for (std::size_t i : idx) {
            g_sum += grad[i];
            h_sum += hess[i];
        }
        const int node_id = static_cast<int>(tree.nodes.size());
        tree.nodes.push_back(TreeNode{});
        const double leaf_value = -g_sum / (h_sum + opt.lambda);

        if (depth >= opt.max_depth || idx.size() < 2 * static_cast<std::size_t>(opt.min_leaf)) {
            tree.nodes[static_cast<std::size_t>(node_id)].value = leaf_value;
            return node_id;
        }

        double best_gain = -1.0;
        int best_feature = -1;
        double best_thr = 0.0;
        const double parent_term = g_sum * g_sum / (h_sum + opt.lambda);
        std::vector<std::size_t> sorted = idx;
        for (int f = 0; f < kNumFeatures; ++f) {
            const auto fi = static_cast<std::size_t>(f);
            std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                if (x[a][fi] != x[b][fi]) return x[a][fi] < x[b][fi];
                return a < b;
            });
            double gl = 0.0, hl = 0.0;
            for (std::size_t pos = 0; pos + 1 < sorted.size(); ++pos) {
                gl += grad[sorted[pos]];
                hl += hess[sorted[pos]];
                if (pos + 1 < static_cast<std::size_t>(opt.min_leaf)) continue;
                if (sorted.size() - pos - 1 < static_cast<std::size_t>(opt.min_leaf)) break;
                const double lo = x[sorted[pos]][fi];
                const double hi = x[sorted[pos + 1]][fi];
                if (!(lo < hi)) continue;
                const double thr = 0.5 * (lo + hi);
                if (!(lo < thr && thr <= hi)) continue; // adjacent doubles, no representable midpoint
                const double gr = g_sum - gl;
                const double hr = h_sum - hl;
                const double gain = 0.5 * (gl * gl / (hl + opt.lambda) + gr * gr / (hr + opt.lambda) - parent_term);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_thr = thr;
                }
            }
        }

        if (best_feature < 0 || best_gain < opt.min_gain) {
            tree.nodes[static_cast<std::size_t>(node_id)].value = leaf_value;
            return node_id;
        }

        std::vector<std::size_t> left_idx, right_idx;
        for (std::size_t i : idx)
            (x[i][static_cast<std::size_t>(best_feature)] < best_thr ? left_idx : right_idx).push_back(i);

        tree.nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
        tree.nodes[static_cast<std::size_t>(node_id)].threshold = best_thr;
        const int l = build(left_idx, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].left = l;
        const int r = build(right_idx, depth + 1);
        tree.nodes[static_cast<std::size_t>(node_id)].right = r;
        return node_id;
    }
};

inline double logloss(const std::vector<double>& scores, const std::vector<int>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::clamp(sigmoid(scores[i]), 1e-12, 1.0 - 1e-12);
        s -= y[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return s / static_cast<double>(y.size());
}

} // namespace detail

// Boosts on (x, y); when a validation set is given, keeps the tree count
// that minimizes validation logloss and stops after early_stop_patience
// stale rounds. A round whose tree degenerates to a near-zero stump ends
// boosting. Bit-deterministic per (inputs, options, seed).
inline GbdtModel fit_gbdt(const std::vector<FeatureVector>& x, const std::vector<int>& y, const GbdtOptions& opt, std::uint64_t seed,
                          const std::vector<FeatureVector>& x_val = {}, const std::vector<int>& y_val = {}) {
    opt.validate();
    if (x.empty() || x.size() != y.size()) throw std::invalid_argument("fit_gbdt: empty or mismatched training data");
    if (x_val.size() != y_val.size()) throw std::invalid_argument("fit_gbdt: mismatched validation data");

    GbdtModel model;
    model.options = opt;
    double pos = 0.0;
    for (int v : y) pos += v;
    const double prior = std::clamp(pos / static_cast<double>(y.size()), 1e-6, 1.0 - 1e-6);
    model.base_score = logit(prior);

    const std::size_t n = x.size();
    std::vector<double> scores(n, model.base_score);
    std::vector<double> val_scores(x_val.size(), model.base_score);
    std::vector<double> grad(n), hess(n);

    const bool track_val = !x_val.empty();
    double best_loss = track_val ? detail::logloss(val_scores, y_val) : 0.0;
    std::size_t best_n_trees = 0;
    int stale = 0;

    const auto k_sub = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt.subsample * static_cast<double>(n))));

    for (int round = 0; round < opt.n_trees; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(scores[i]);
            grad[i] = p - static_cast<double>(y[i]);
            hess[i] = p * (1.0 - p);
        }
        auto eng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::oracle_fit, round));
        std::vector<std::size_t> idx = k_sub == n ? [&] {
            std::vector<std::size_t> all(n);
            for (std::size_t i = 0; i < n; ++i) all[i] = i;
            return all;
        }()
                                                  : rng::sample_without_replacement(n, k_sub, eng);

        detail::TreeBuilder builder{x, grad, hess, opt, {}};
        builder.build(idx, 0);
        Tree tree = std::move(builder.tree);
        if (tree.is_stump() && std::abs(tree.nodes[0].value) < 1e-12) break; // zero-gain round

        for (std::size_t i = 0; i < n; ++i) scores[i] += opt.learning_rate * tree.eval(x[i]);
        for (std::size_t i = 0; i < x_val.size(); ++i) val_scores[i] += opt.learning_rate * tree.eval(x_val[i]);
        model.trees.push_back(std::move(tree));

        if (track_val) {
            const double loss = detail::logloss(val_scores, y_val);
            if (loss < best_loss) {
                best_loss = loss;
                best_n_trees = model.trees.size();
                stale = 0;
            } else if (++stale >= opt.early_stop_patience) {
                break;
            }
        } else {
            best_n_trees = model.trees.size();
        }
    }

    model.trees.resize(best_n_trees);
    return model;
}

} // namespace capp
