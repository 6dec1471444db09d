#pragma once

// Trace featurization: one LogitTrace becomes a fixed 132-entry vector fed
// to the error oracle. Layout (schema "fv1"):
//   [0..59]    for each of the 10 per-step series, in order
//              (p1, p2, p3, H, PP, m12, m23, G, KL, V):
//              mean, population std, min, max, median, last
//   [60..99]   per series: mean of first differences, population std of
//              first differences, OLS slope vs step index, lag-1
//              autocorrelation
//   [100..111] T, T/T_max, immediate repetition rate, unique-token ratio,
//              EOS prob at final step, max EOS prob over non-final steps,
//              mean EOS prob over non-final steps, cumulative log-likelihood
//              of chosen tokens, mean per-step log-likelihood,
//              exp(-mean log-likelihood), min chosen-token probability,
//              fraction of steps with p1 >= 0.9
//   [112..131] p1 per step, zero-padded to T_max = 20
//
// Definitional pins shared with the reference implementation:
//   repetition rate counts adjacent equal chosen pairs over T-1 (0 if T = 1);
//   unique-token ratio divides by T; chosen probabilities are clamped to
//   1e-300 before the log; median of an even-length series averages the two
//   middle values; the autocorrelation estimator divides the lag-1
//   autocovariance by the full-series variance, both around the full-series
//   mean; slope regresses on t = 0..T-1. Entropy is in nats, so KL from
//   uniform is exactly ln(vocab) - H. Degenerate rules: temporal stats are 0
//   when T = 1, autocorrelation is 0 when T < 3 or the series is constant,
//   slope is 0 when T < 2.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capp/generate.hpp"
#include "capp/io.hpp"

namespace capp {

inline constexpr int kNumFeatures = 132;
inline constexpr int kTraceTMax = 20;
inline constexpr char kFeatureSchema[] = "fv1";

using FeatureVector = std::array<double, kNumFeatures>;

struct StepSignals {
    double p1, p2, p3; // top-3 probabilities
    double entropy;    // nats
    double perplexity; // exp(entropy)
    double m12, m23;   // top-probability margins
    double gini;
    double kl_uniform; // ln(n) - entropy
    double variance;   // population variance of the probability vector
};

// Softmax-derived signals of one pre-softmax logit row.
inline StepSignals step_signals(std::span<const double> logits) {
    const std::size_t n = logits.size();
    if (n == 0) throw std::invalid_argument("step_signals: empty logit row");
    double mx = logits[0];
    for (double x : logits) {
        if (!std::isfinite(x)) throw std::invalid_argument("step_signals: non-finite logit");
        mx = std::max(mx, x);
    }
    std::vector<double> p(n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += p[i] = std::exp(logits[i] - mx);
    for (auto& x : p) x /= z;

    StepSignals s{};
    double ent = 0.0;
    const double uniform = 1.0 / static_cast<double>(n);
    double var = 0.0;
    for (double v : p) {
        if (v > 0.0) ent -= v * std::log(v);
        var += (v - uniform) * (v - uniform);
    }
    var /= static_cast<double>(n);

    std::vector<double> asc = p;
    std::sort(asc.begin(), asc.end());
    s.p1 = asc[n - 1];
    s.p2 = n >= 2 ? asc[n - 2] : 0.0;
    s.p3 = n >= 3 ? asc[n - 3] : 0.0;
    // sorted-values Gini; equals the pairwise mean absolute difference form
    // because the probabilities sum to 1
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) g += (2.0 * static_cast<double>(i + 1) - static_cast<double>(n) - 1.0) * asc[i];
    s.gini = g / static_cast<double>(n);
    s.entropy = ent;
    s.perplexity = std::exp(ent);
    s.m12 = s.p1 - s.p2;
    s.m23 = s.p2 - s.p3;
    s.kl_uniform = std::log(static_cast<double>(n)) - ent;
    s.variance = var;
    return s;
}

namespace detail {

struct SeriesStats {
    double mean, stdev, min, max, median, last;
};

inline SeriesStats series_stats(const std::vector<double>& x) {
    SeriesStats st{};
    const std::size_t n = x.size();
    double sum = 0.0;
    for (double v : x) sum += v;
    st.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (double v : x) sq += (v - st.mean) * (v - st.mean);
    st.stdev = std::sqrt(sq / static_cast<double>(n));
    st.min = *std::min_element(x.begin(), x.end());
    st.max = *std::max_element(x.begin(), x.end());
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    st.median = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    st.last = x.back();
    return st;
}

struct TemporalStats {
    double diff_mean = 0.0, diff_std = 0.0, slope = 0.0, autocorr = 0.0;
};

inline TemporalStats temporal_stats(const std::vector<double>& x) {
    TemporalStats ts{};
    const std::size_t n = x.size();
    if (n < 2) return ts;

    double dsum = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) dsum += x[t + 1] - x[t];
    ts.diff_mean = dsum / static_cast<double>(n - 1);
    double dsq = 0.0;
    for (std::size_t t = 0; t + 1 < n; ++t) {
        const double d = x[t + 1] - x[t] - ts.diff_mean;
        dsq += d * d;
    }
    ts.diff_std = std::sqrt(dsq / static_cast<double>(n - 1));

    double xbar = 0.0;
    for (double v : x) xbar += v;
    xbar /= static_cast<double>(n);
    const double tbar = 0.5 * static_cast<double>(n - 1);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        num += (static_cast<double>(t) - tbar) * (x[t] - xbar);
        den += (static_cast<double>(t) - tbar) * (static_cast<double>(t) - tbar);
    }
    ts.slope = num / den;

    // a constant series has zero variance by definition, even when the
    // rounded mean drifts an ulp away from the common value
    const bool constant = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    if (n >= 3 && !constant) {
        double acov = 0.0, avar = 0.0;
        for (std::size_t t = 0; t + 1 < n; ++t) acov += (x[t] - xbar) * (x[t + 1] - xbar);
        for (std::size_t t = 0; t < n; ++t) avar += (x[t] - xbar) * (x[t] - xbar);
        ts.autocorr = avar == 0.0 ? 0.0 : acov / avar;
    }
    return ts;
}

} // namespace detail

inline FeatureVector extract_features(const LogitTrace& trace, int t_max = kTraceTMax) {
    const int t_steps = trace.steps();
    if (t_steps < 1) throw std::invalid_argument("extract_features: empty trace");
    if (t_steps > t_max) throw std::invalid_argument("extract_features: trace longer than t_max");
    if (trace.step_logits.size() != trace.chosen.size())
        throw std::invalid_argument("extract_features: step count mismatch");

    const std::size_t n_vocab = trace.step_logits[0].size();
    std::array<std::vector<double>, 10> series;
    for (auto& s : series) s.resize(static_cast<std::size_t>(t_steps));
    std::vector<double> eos_prob(static_cast<std::size_t>(t_steps));
    std::vector<double> chosen_prob(static_cast<std::size_t>(t_steps));

    for (int t = 0; t < t_steps; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        const auto& row = trace.step_logits[ti];
        if (row.size() != n_vocab) throw std::invalid_argument("extract_features: ragged logit rows");
        const int chosen = trace.chosen[ti];
        if (chosen < 0 || chosen >= static_cast<int>(n_vocab) || trace.eos_id < 0 || trace.eos_id >= static_cast<int>(n_vocab))
            throw std::invalid_argument("extract_features: token id outside the logit row");

        const StepSignals s = step_signals(row);
        series[0][ti] = s.p1;
        series[1][ti] = s.p2;
        series[2][ti] = s.p3;
        series[3][ti] = s.entropy;
        series[4][ti] = s.perplexity;
        series[5][ti] = s.m12;
        series[6][ti] = s.m23;
        series[7][ti] = s.gini;
        series[8][ti] = s.kl_uniform;
        series[9][ti] = s.variance;

        // per-token probabilities need the softmax again; recompute the two
        // entries directly so step_signals stays a pure row summary
        double mx = row[0];
        for (double x : row) mx = std::max(mx, x);
        double z = 0.0;
        for (double x : row) z += std::exp(x - mx);
        eos_prob[ti] = std::exp(row[static_cast<std::size_t>(trace.eos_id)] - mx) / z;
        chosen_prob[ti] = std::exp(row[static_cast<std::size_t>(chosen)] - mx) / z;
    }

    FeatureVector fv{};
    for (int s = 0; s < 10; ++s) {
        const auto st = detail::series_stats(series[static_cast<std::size_t>(s)]);
        const auto base = static_cast<std::size_t>(6 * s);
        fv[base + 0] = st.mean;
        fv[base + 1] = st.stdev;
        fv[base + 2] = st.min;
        fv[base + 3] = st.max;
        fv[base + 4] = st.median;
        fv[base + 5] = st.last;
    }
    for (int s = 0; s < 10; ++s) {
        const auto ts = detail::temporal_stats(series[static_cast<std::size_t>(s)]);
        const auto base = static_cast<std::size_t>(60 + 4 * s);
        fv[base + 0] = ts.diff_mean;
        fv[base + 1] = ts.diff_std;
        fv[base + 2] = ts.slope;
        fv[base + 3] = ts.autocorr;
    }

    fv[100] = static_cast<double>(t_steps);
    fv[101] = static_cast<double>(t_steps) / static_cast<double>(t_max);
    int reps = 0;
    for (int t = 1; t < t_steps; ++t)
        if (trace.chosen[static_cast<std::size_t>(t)] == trace.chosen[static_cast<std::size_t>(t - 1)]) ++reps;
    fv[102] = t_steps >= 2 ? static_cast<double>(reps) / static_cast<double>(t_steps - 1) : 0.0;
    std::vector<int> uniq = trace.chosen;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    fv[103] = static_cast<double>(uniq.size()) / static_cast<double>(t_steps);
    fv[104] = eos_prob.back();
    if (t_steps >= 2) {
        double mx = 0.0, sum = 0.0;
        for (int t = 0; t + 1 < t_steps; ++t) {
            mx = std::max(mx, eos_prob[static_cast<std::size_t>(t)]);
            sum += eos_prob[static_cast<std::size_t>(t)];
        }
        fv[105] = mx;
        fv[106] = sum / static_cast<double>(t_steps - 1);
    }
    double ll = 0.0, pmin = 1.0;
    for (double pc : chosen_prob) {
        ll += std::log(std::max(pc, 1e-300));
        pmin = std::min(pmin, pc);
    }
    fv[107] = ll;
    fv[108] = ll / static_cast<double>(t_steps);
    fv[109] = std::exp(-fv[108]);
    fv[110] = pmin;
    int confident = 0;
    for (double p1 : series[0])
        if (p1 >= 0.9) ++confident;
    fv[111] = static_cast<double>(confident) / static_cast<double>(t_steps);

    for (int t = 0; t < t_steps; ++t) fv[static_cast<std::size_t>(112 + t)] = series[0][static_cast<std::size_t>(t)];
    return fv;
}

// --- features file -----------------------------------------------------------

struct FeatureRow {
    int part_id = -1;
    std::optional<int> label; // empty for unlabeled rows
    FeatureVector z{};
};

inline std::string features_header() {
    std::string h = "part_id,label";
    for (int i = 0; i < kNumFeatures; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), ",f%03d", i);
        h += buf;
    }
    return h;
}

inline void write_features(const std::vector<FeatureRow>& rows, const std::filesystem::path& path) {
    std::string out = "# schema=";
    out += kFeatureSchema;
    out += '\n';
    out += features_header();
    out += '\n';
    for (const auto& r : rows) {
        out += std::to_string(r.part_id);
        out += ',';
        if (r.label) out += std::to_string(*r.label);
        for (double v : r.z) {
            out += ',';
            out += io::format_double(v);
        }
        out += '\n';
    }
    io::atomic_write(path, out);
}

inline std::vector<FeatureRow> read_features(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open features file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != std::string("# schema=") + kFeatureSchema)
        throw std::runtime_error("features file missing schema line: " + path.string());
    if (!std::getline(in, line) || line != features_header())
        throw std::runtime_error("features file header mismatch: " + path.string());
    std::vector<FeatureRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = io::split_csv_line(line);
        if (cells.size() != 2 + static_cast<std::size_t>(kNumFeatures))
            throw std::runtime_error("features row has wrong arity: " + path.string());
        FeatureRow r;
        r.part_id = std::stoi(cells[0]);
        if (!cells[1].empty()) {
            const int lb = std::stoi(cells[1]);
            if (lb != 0 && lb != 1) throw std::runtime_error("features label must be 0 or 1: " + path.string());
            r.label = lb;
        }
        for (int i = 0; i < kNumFeatures; ++i) r.z[static_cast<std::size_t>(i)] = io::parse_double(cells[static_cast<std::size_t>(i) + 2]);
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace capp
