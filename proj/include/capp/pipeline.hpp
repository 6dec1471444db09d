#pragma once
// Experiment orchestration: one cell = (fraction, seed); inside a cell the
// stages run sequentially (split, train, oracle, generate, then one retrain
// per arm and proportion). Cells are independent and may run in parallel;
// every random draw flows from seeds derived per cell, so parallel and
// serial execution produce identical output bytes.

#include "capp/config.hpp"
#include "capp/dataset.hpp"
#include "capp/generate.hpp"
#include "capp/model.hpp"
#include "capp/oracle.hpp"
#include "capp/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace capp {

// One results.csv row. Baseline rows carry proportion 0 (no sweep); a cell
// that fails records a single row with strategy "failed" and zeroed metrics.
struct ExperimentResult {
    double fraction = 0.0;
    std::string strategy;
    double proportion = 0.0;
    std::uint64_t seed = 0;
    double acc_before = 0.0;
    double acc_after = 0.0;
    double acc_after_clean = 0.0;
    int n_augmented = 0;
    double oracle_test_acc = 0.0;
    std::string status = "ok";
};

// One rejected test-time prediction, kept for offline inspection.
struct RejectedPrediction {
    double fraction = 0.0;
    std::uint64_t seed = 0;
    int part_id = -1;
    ProcessChain chain;
    double probability = 0.0;
};

struct CellOutput {
    std::vector<ExperimentResult> rows;
    std::vector<RejectedPrediction> rejected;
};

inline nlohmann::json rejected_to_json(const RejectedPrediction& r) {
    nlohmann::json chain = nlohmann::json::array();
    for (int t : r.chain.ops) chain.push_back(token_name(t));
    return {{"fraction", r.fraction},
            {"seed", r.seed},
            {"part", r.part_id},
            {"chain", std::move(chain)},
            {"probability", r.probability}};
}

inline std::string results_csv_header() {
    return "fraction,strategy,proportion,seed,acc_before,acc_after,acc_after_clean,n_augmented,oracle_test_acc,status";
}

namespace detail {

inline std::string csv_safe(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
    return s;
}

} // namespace detail

inline std::string format_result_row(const ExperimentResult& r) {
    using io::format_double;
    return format_double(r.fraction) + "," + detail::csv_safe(r.strategy) + "," + format_double(r.proportion) + "," +
           std::to_string(r.seed) + "," + format_double(r.acc_before) + "," + format_double(r.acc_after) + "," +
           format_double(r.acc_after_clean) + "," + std::to_string(r.n_augmented) + "," +
           format_double(r.oracle_test_acc) + "," + detail::csv_safe(r.status);
}

inline std::vector<ExperimentResult> parse_results_csv(const std::string& text) {
    std::vector<ExperimentResult> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != results_csv_header())
        throw std::runtime_error("results csv: missing or unexpected header");
    int n = 1;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        auto f = io::split_csv_line(line);
        if (f.size() != 10) throw std::runtime_error("results csv line " + std::to_string(n) + ": expected 10 fields");
        ExperimentResult r;
        r.fraction = io::parse_double(f[0]);
        r.strategy = f[1];
        r.proportion = io::parse_double(f[2]);
        r.seed = static_cast<std::uint64_t>(std::stoull(f[3]));
        r.acc_before = io::parse_double(f[4]);
        r.acc_after = io::parse_double(f[5]);
        r.acc_after_clean = io::parse_double(f[6]);
        r.n_augmented = std::stoi(f[7]);
        r.oracle_test_acc = io::parse_double(f[8]);
        r.status = f[9];
        rows.push_back(std::move(r));
    }
    return rows;
}

// Union of original and augmented pairs with exact duplicates removed, in
// (part, chain) order; retraining therefore sees a set, not a multiset.
inline std::vector<TrainPair> merge_training_pairs(std::span<const TrainPair> original,
                                                   std::span<const TrainPair> augmented) {
    std::vector<TrainPair> all(original.begin(), original.end());
    all.insert(all.end(), augmented.begin(), augmented.end());
    std::sort(all.begin(), all.end(), [](const TrainPair& a, const TrainPair& b) {
        if (a.part_index != b.part_index) return a.part_index < b.part_index;
        return a.chain.ops < b.chain.ops;
    });
    all.erase(std::unique(all.begin(), all.end(),
                          [](const TrainPair& a, const TrainPair& b) {
                              return a.part_index == b.part_index && a.chain.ops == b.chain.ops;
                          }),
              all.end());
    return all;
}

namespace detail {

// One well-formed test-time generation with its oracle verdict.
struct Candidate {
    int part = -1;
    ProcessChain chain;
    double probability = 0.0;
    int oracle_label = 0;
};

// Structural leakage guard: every training pair must either be a labeled
// train-part pair or carry exactly the chain the model generated for that
// test part. Ground-truth chains of test parts can never slip in, even when
// a generated chain happens to coincide with one.
inline void assert_no_leakage(const Split& split, const std::vector<Candidate>& candidates,
                              std::span<const TrainPair> pairs) {
    std::set<int> train_parts(split.train_parts.begin(), split.train_parts.end());
    std::map<int, const ProcessChain*> generated;
    for (const auto& c : candidates) generated.emplace(c.part, &c.chain);
    for (const auto& p : pairs) {
        if (train_parts.count(p.part_index)) continue;
        auto it = generated.find(p.part_index);
        if (it == generated.end())
            throw std::logic_error("leakage guard: pair for part " + std::to_string(p.part_index) +
                                   " is neither a train part nor a test generation");
        if (!(*it->second == p.chain))
            throw std::logic_error("leakage guard: pair for part " + std::to_string(p.part_index) +
                                   " does not match the generated chain");
    }
}

inline double accuracy_excluding(const Model& m, std::span<const int> test_parts, const std::set<int>& excluded,
                                 const Dataset& ds) {
    std::vector<int> parts;
    parts.reserve(test_parts.size());
    for (int idx : test_parts)
        if (!excluded.count(idx)) parts.push_back(idx);
    if (parts.empty()) return 0.0;
    return sequence_accuracy(m, parts, ds);
}

} // namespace detail

// Retrains one arm. Warm start continues from the trained checkpoint; the
// from-scratch toggle reinitializes instead so the comparison can be run
// both ways from the same config file.
inline Model retrain_model(const RunConfig& cfg, const Model& teacher, std::span<const TrainPair> original,
                           std::span<const TrainPair> augmented, std::uint64_t retrain_seed) {
    if (original.empty()) throw std::invalid_argument("retrain_model: original pairs must be nonempty");
    auto data = merge_training_pairs(original, augmented);
    TrainOptions opt = cfg.train;
    opt.epochs = cfg.retrain_epochs;
    opt.seed = retrain_seed;
    Model m = cfg.retrain_from_scratch ? init_model(cfg.model, rng::derive_seed(retrain_seed, rng::SeedTag::model_init))
                                       : teacher;
    train_model(m, data, opt);
    return m;
}

inline CellOutput run_cell(const RunConfig& cfg, const Dataset& ds, double fraction, std::uint64_t seed) {
    CellOutput out;
    try {
        const bool want_baseline = std::count(cfg.strategies.begin(), cfg.strategies.end(), "baseline") > 0;
        const bool want_random = std::count(cfg.strategies.begin(), cfg.strategies.end(), "random") > 0;
        const bool want_detector = std::count(cfg.strategies.begin(), cfg.strategies.end(), "detector") > 0;

        Split split = split_dataset(ds, fraction, seed);

        Model teacher = init_model(cfg.model, rng::derive_seed(seed, rng::SeedTag::model_init));
        TrainOptions topt = cfg.train;
        topt.seed = seed;
        train_model(teacher, split.train_pairs, topt);
        const double acc_before = sequence_accuracy(teacher, split.test_parts, ds);

        std::vector<int> labeled = split.train_parts;
        labeled.insert(labeled.end(), split.val_parts.begin(), split.val_parts.end());
        GbdtOracle oracle = fit_oracle(build_oracle_dataset(teacher, labeled, ds), seed, cfg.oracle);

        // One pass over the test parts: oracle evaluation sees every
        // generation, the candidate pool keeps only well-formed ones.
        std::vector<detail::Candidate> candidates;
        int oracle_correct = 0;
        {
            Workspace ws(teacher.cfg);
            for (int idx : split.test_parts) {
                const auto& rec = ds.record_for(idx);
                Generation gen = generate(teacher, rec.part, ws);
                OraclePrediction pred = oracle_predict(oracle, extract_features(gen.trace));
                const bool truth = !gen.malformed() &&
                                   std::find(rec.chains.begin(), rec.chains.end(), *gen.chain) != rec.chains.end();
                oracle_correct += pred.label == (truth ? 1 : 0);
                if (gen.malformed()) continue;
                candidates.push_back({idx, *gen.chain, pred.probability, pred.label});
            }
        }
        const double oracle_test_acc =
            split.test_parts.empty() ? 0.0 : static_cast<double>(oracle_correct) / split.test_parts.size();

        for (const auto& c : candidates)
            if (!c.oracle_label) out.rejected.push_back({fraction, seed, c.part, c.chain, c.probability});

        ExperimentResult base_row;
        base_row.fraction = fraction;
        base_row.proportion = 0.0;
        base_row.seed = seed;
        base_row.acc_before = acc_before;
        base_row.oracle_test_acc = oracle_test_acc;

        if (want_baseline) {
            detail::assert_no_leakage(split, candidates, split.train_pairs);
            Model m = retrain_model(cfg, teacher, split.train_pairs, {}, rng::derive_seed(seed, rng::SeedTag::retrain, 0, 0));
            ExperimentResult r = base_row;
            r.strategy = "baseline";
            r.acc_after = sequence_accuracy(m, split.test_parts, ds);
            r.acc_after_clean = r.acc_after;
            out.rows.push_back(std::move(r));
        }

        for (std::size_t pi = 0; pi < cfg.proportions.size(); ++pi) {
            const double prop = cfg.proportions[pi];

            // Offer round(prop * pool) candidates to the oracle; keep its
            // positives. The random arm draws exactly as many pairs from the
            // same pool, oracle unseen.
            auto eng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::select, pi));
            const auto n_offered = static_cast<std::size_t>(std::llround(prop * static_cast<double>(candidates.size())));
            auto offered = rng::sample_without_replacement(candidates.size(), n_offered, eng);
            std::sort(offered.begin(), offered.end());
            std::vector<TrainPair> detector_pairs;
            for (auto ci : offered)
                if (candidates[ci].oracle_label) detector_pairs.push_back({candidates[ci].part, candidates[ci].chain});

            auto reng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::random_arm, pi));
            auto drawn = rng::sample_without_replacement(candidates.size(), detector_pairs.size(), reng);
            std::sort(drawn.begin(), drawn.end());
            std::vector<TrainPair> random_pairs;
            for (auto ci : drawn) random_pairs.push_back({candidates[ci].part, candidates[ci].chain});

            if (random_pairs.size() != detector_pairs.size())
                throw std::logic_error("control invariant: random count != detector count");

            auto run_arm = [&](const char* name, const std::vector<TrainPair>& aug, int arm_id) {
                detail::assert_no_leakage(split, candidates, aug);
                detail::assert_no_leakage(split, candidates, split.train_pairs);
                Model m = retrain_model(cfg, teacher, split.train_pairs, aug,
                                        rng::derive_seed(seed, rng::SeedTag::retrain, arm_id, pi));
                std::set<int> aug_parts;
                for (const auto& p : aug) aug_parts.insert(p.part_index);
                ExperimentResult r = base_row;
                r.strategy = name;
                r.proportion = prop;
                r.n_augmented = static_cast<int>(aug.size());
                r.acc_after = sequence_accuracy(m, split.test_parts, ds);
                r.acc_after_clean = detail::accuracy_excluding(m, split.test_parts, aug_parts, ds);
                out.rows.push_back(std::move(r));
            };
            if (want_random) run_arm("random", random_pairs, 1);
            if (want_detector) run_arm("detector", detector_pairs, 2);
        }
    } catch (const std::exception& e) {
        CellOutput failed;
        ExperimentResult r;
        r.fraction = fraction;
        r.strategy = "failed";
        r.seed = seed;
        r.status = std::string("error: ") + e.what();
        failed.rows.push_back(std::move(r));
        return failed;
    }
    return out;
}

struct ExperimentSinks {
    std::function<void(const ExperimentResult&)> on_result;
    std::function<void(const RejectedPrediction&)> on_rejected;
};

// Runs the whole grid. Cells execute with at most cfg.jobs in flight; sink
// callbacks fire on the calling thread in grid order (fractions outer, seeds
// inner), so incremental output files are deterministic.
inline std::vector<ExperimentResult> run_experiment(const RunConfig& cfg, const Dataset& ds,
                                                    const ExperimentSinks& sinks = {}) {
    cfg.validate();
    struct CellKey {
        double fraction;
        std::uint64_t seed;
    };
    std::vector<CellKey> grid;
    for (double f : cfg.fractions)
        for (std::uint64_t s : cfg.seeds) grid.push_back({f, s});

    std::vector<ExperimentResult> all;
    std::vector<std::future<CellOutput>> inflight(grid.size());
    const std::size_t window = static_cast<std::size_t>(cfg.jobs);
    std::size_t launched = 0;
    auto launch = [&](std::size_t i) {
        inflight[i] = std::async(std::launch::async,
                                 [&cfg, &ds, key = grid[i]] { return run_cell(cfg, ds, key.fraction, key.seed); });
    };
    for (; launched < grid.size() && launched < window; ++launched) launch(launched);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        CellOutput cell = inflight[i].get();
        if (launched < grid.size()) launch(launched++);
        for (const auto& rej : cell.rejected)
            if (sinks.on_rejected) sinks.on_rejected(rej);
        for (auto& row : cell.rows) {
            if (sinks.on_result) sinks.on_result(row);
            all.push_back(std::move(row));
        }
    }
    return all;
}

namespace detail {

struct Series {
    int n = 0;
    double sum = 0.0, sumsq = 0.0, before_sum = 0.0, clean_sum = 0.0;

    void add(const ExperimentResult& r) {
        n += 1;
        sum += r.acc_after;
        sumsq += r.acc_after * r.acc_after;
        before_sum += r.acc_before;
        clean_sum += r.acc_after_clean;
    }
    double mean() const { return n ? sum / n : 0.0; }
    // sample standard deviation across seeds
    double stdev() const {
        if (n < 2) return 0.0;
        double var = (sumsq - sum * sum / n) / (n - 1);
        return var > 0.0 ? std::sqrt(var) : 0.0;
    }
};

} // namespace detail

inline std::string summary_csv_header() {
    return "fraction,strategy,proportion,n_seeds,acc_before_mean,acc_after_mean,acc_after_std,acc_after_clean_mean,"
           "baseline_replicated";
}

// Per-(fraction, strategy, proportion) means and standard deviations across
// seeds. Baseline rows have no proportion sweep of their own, so the single
// baseline series is replicated at every swept proportion and flagged.
inline std::string write_summary_csv(std::span<const ExperimentResult> rows) {
    std::set<double> fractions, proportions;
    std::map<std::pair<double, std::string>, detail::Series> base_series;
    std::map<std::tuple<double, std::string, double>, detail::Series> swept;
    for (const auto& r : rows) {
        if (r.status != "ok" || r.strategy == "failed") continue;
        fractions.insert(r.fraction);
        if (r.strategy == "baseline") {
            base_series[{r.fraction, r.strategy}].add(r);
        } else {
            proportions.insert(r.proportion);
            swept[{r.fraction, r.strategy, r.proportion}].add(r);
        }
    }
    if (proportions.empty()) proportions.insert(0.0);

    std::string out = summary_csv_header() + "\n";
    auto emit = [&out](double f, const std::string& strat, double p, const detail::Series& s, bool replicated) {
        using io::format_double;
        out += format_double(f) + "," + strat + "," + format_double(p) + "," + std::to_string(s.n) + "," +
               format_double(s.n ? s.before_sum / s.n : 0.0) + "," + format_double(s.mean()) + "," +
               format_double(s.stdev()) + "," + format_double(s.n ? s.clean_sum / s.n : 0.0) + "," +
               (replicated ? "1" : "0") + "\n";
    };
    for (double f : fractions) {
        for (const char* strat : {"baseline", "random", "detector"}) {
            for (double p : proportions) {
                if (std::string(strat) == "baseline") {
                    auto it = base_series.find({f, strat});
                    if (it != base_series.end()) emit(f, strat, p, it->second, true);
                } else {
                    auto it = swept.find({f, strat, p});
                    if (it != swept.end()) emit(f, strat, p, it->second, false);
                }
            }
        }
    }
    return out;
}

} // namespace capp
