#pragma once

// Straightforward reference implementation of the 132-entry feature vector,
// written directly from the definitions with no shared code and no attention
// to efficiency: full sorts, pairwise O(n^2) Gini, explicit two-pass means.
// The production extractor is checked against this, entry by entry.

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <vector>

#include "capp/generate.hpp"

namespace capp::testing::naive {

inline std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (auto& x : p) x /= z;
    return p;
}

inline double mean_of(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double pop_std_of(const std::vector<double>& x) {
    const double mu = mean_of(x);
    double s = 0.0;
    for (double v : x) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline double median_of(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return (n % 2 == 1) ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

inline double ols_slope(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) return 0.0;
    double tbar = 0.0;
    for (std::size_t t = 0; t < n; ++t) tbar += static_cast<double>(t);
    tbar /= static_cast<double>(n);
    const double xbar = mean_of(x);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        num += (static_cast<double>(t) - tbar) * (x[t] - xbar);
        den += (static_cast<double>(t) - tbar) * (static_cast<double>(t) - tbar);
    }
    return num / den;
}

inline double lag1_autocorr(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 3) return 0.0;
    bool constant = true;
    for (double v : x)
        if (v != x[0]) constant = false;
    if (constant) return 0.0;
    const double xbar = mean_of(x);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) num += (x[t] - xbar) * (x[t + 1] - xbar);
    for (std::size_t t = 0; t < n; ++t) den += (x[t] - xbar) * (x[t] - xbar);
    if (den == 0.0) return 0.0;
    return num / den;
}

inline double gini_pairwise(const std::vector<double>& p) {
    double s = 0.0;
    for (double a : p)
        for (double b : p) s += std::abs(a - b);
    return s / (2.0 * static_cast<double>(p.size()));
}

inline std::array<double, 132> extract(const LogitTrace& trace) {
    const int t_steps = static_cast<int>(trace.step_logits.size());
    const auto n = trace.step_logits[0].size();

    // per-step probability rows
    std::vector<std::vector<double>> prob;
    for (const auto& row : trace.step_logits) prob.push_back(softmax(row));

    // the ten series, in schema order
    std::vector<std::vector<double>> series(10, std::vector<double>(static_cast<std::size_t>(t_steps)));
    for (int t = 0; t < t_steps; ++t) {
        const auto& p = prob[static_cast<std::size_t>(t)];
        std::vector<double> desc = p;
        std::sort(desc.begin(), desc.end(), std::greater<>());
        const double p1 = desc[0];
        const double p2 = n >= 2 ? desc[1] : 0.0;
        const double p3 = n >= 3 ? desc[2] : 0.0;
        double ent = 0.0;
        for (double v : p)
            if (v > 0.0) ent -= v * std::log(v);
        double var = 0.0;
        for (double v : p) var += (v - 1.0 / static_cast<double>(n)) * (v - 1.0 / static_cast<double>(n));
        var /= static_cast<double>(n);
        const auto ti = static_cast<std::size_t>(t);
        series[0][ti] = p1;
        series[1][ti] = p2;
        series[2][ti] = p3;
        series[3][ti] = ent;
        series[4][ti] = std::exp(ent);
        series[5][ti] = p1 - p2;
        series[6][ti] = p2 - p3;
        series[7][ti] = gini_pairwise(p);
        series[8][ti] = std::log(static_cast<double>(n)) - ent;
        series[9][ti] = var;
    }

    std::array<double, 132> z{};
    for (int s = 0; s < 10; ++s) {
        const auto& x = series[static_cast<std::size_t>(s)];
        z[static_cast<std::size_t>(6 * s + 0)] = mean_of(x);
        z[static_cast<std::size_t>(6 * s + 1)] = pop_std_of(x);
        z[static_cast<std::size_t>(6 * s + 2)] = *std::min_element(x.begin(), x.end());
        z[static_cast<std::size_t>(6 * s + 3)] = *std::max_element(x.begin(), x.end());
        z[static_cast<std::size_t>(6 * s + 4)] = median_of(x);
        z[static_cast<std::size_t>(6 * s + 5)] = x.back();
    }
    for (int s = 0; s < 10; ++s) {
        const auto& x = series[static_cast<std::size_t>(s)];
        std::vector<double> diffs;
        for (std::size_t t = 0; t + 1 < x.size(); ++t) diffs.push_back(x[t + 1] - x[t]);
        const std::size_t base = static_cast<std::size_t>(60 + 4 * s);
        z[base + 0] = diffs.empty() ? 0.0 : mean_of(diffs);
        z[base + 1] = diffs.empty() ? 0.0 : pop_std_of(diffs);
        z[base + 2] = ols_slope(x);
        z[base + 3] = lag1_autocorr(x);
    }

    // sequence-level block
    z[100] = static_cast<double>(t_steps);
    z[101] = static_cast<double>(t_steps) / 20.0;
    int reps = 0;
    for (int t = 1; t < t_steps; ++t)
        if (trace.chosen[static_cast<std::size_t>(t)] == trace.chosen[static_cast<std::size_t>(t - 1)]) ++reps;
    z[102] = t_steps >= 2 ? static_cast<double>(reps) / static_cast<double>(t_steps - 1) : 0.0;
    z[103] = static_cast<double>(std::set<int>(trace.chosen.begin(), trace.chosen.end()).size()) / static_cast<double>(t_steps);
    z[104] = prob.back()[static_cast<std::size_t>(trace.eos_id)];
    double eos_max = 0.0, eos_sum = 0.0;
    for (int t = 0; t + 1 < t_steps; ++t) {
        const double e = prob[static_cast<std::size_t>(t)][static_cast<std::size_t>(trace.eos_id)];
        eos_max = std::max(eos_max, e);
        eos_sum += e;
    }
    z[105] = t_steps >= 2 ? eos_max : 0.0;
    z[106] = t_steps >= 2 ? eos_sum / static_cast<double>(t_steps - 1) : 0.0;
    double ll_sum = 0.0, chosen_min = 1.0;
    for (int t = 0; t < t_steps; ++t) {
        const double pc = prob[static_cast<std::size_t>(t)][static_cast<std::size_t>(trace.chosen[static_cast<std::size_t>(t)])];
        ll_sum += std::log(std::max(pc, 1e-300));
        chosen_min = std::min(chosen_min, pc);
    }
    z[107] = ll_sum;
    z[108] = ll_sum / static_cast<double>(t_steps);
    z[109] = std::exp(-z[108]);
    z[110] = chosen_min;
    int confident = 0;
    for (int t = 0; t < t_steps; ++t)
        if (series[0][static_cast<std::size_t>(t)] >= 0.9) ++confident;
    z[111] = static_cast<double>(confident) / static_cast<double>(t_steps);

    for (int t = 0; t < t_steps; ++t) z[static_cast<std::size_t>(112 + t)] = series[0][static_cast<std::size_t>(t)];
    return z;
}

} // namespace capp::testing::naive
