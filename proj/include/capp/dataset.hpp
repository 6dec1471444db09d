#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "capp/io.hpp"
#include "capp/part.hpp"
#include "capp/rng.hpp"
#include "capp/rules.hpp"
#include "capp/vocab.hpp"

namespace capp {

inline constexpr const char* kRuleVersion = "rules-v1";

struct DatasetRecord {
    PartEncoding part;
    std::vector<ProcessChain> chains; // 1..3, deterministic rule order
};

// One record per part encoding, in lexicographic part order.
struct Dataset {
    std::vector<DatasetRecord> records;
    std::string rule_version = kRuleVersion;

    const DatasetRecord& record_for(int part_index) const { return records.at(static_cast<std::size_t>(part_index)); }

    std::size_t total_pairs() const {
        std::size_t n = 0;
        for (const auto& r : records) n += r.chains.size();
        return n;
    }
};

inline Dataset generate_dataset() {
    Dataset ds;
    ds.records.reserve(kNumParts);
    for (const auto& part : enumerate_parts()) ds.records.push_back({part, plan_feasible_chains(part)});
    return ds;
}

inline nlohmann::json part_to_json(const PartEncoding& p) {
    nlohmann::json j = nlohmann::json::object();
    for (int i = 0; i < 6; ++i) j[kAttributeNames[static_cast<std::size_t>(i)]] = p.attr_value_name(i);
    return j;
}

inline PartEncoding part_from_json(const nlohmann::json& j) {
    auto find_value = [&](int attr_index) {
        const std::string name = j.at(kAttributeNames[static_cast<std::size_t>(attr_index)]).get<std::string>();
        const int card = kAttributeCardinality[static_cast<std::size_t>(attr_index)];
        for (int v = 0; v < card; ++v) {
            PartEncoding probe = PartEncoding::from_index(0);
            // compare against canonical value names via a scratch encoding
            switch (attr_index) {
                case 0: probe.geometry = static_cast<Geometry>(v); break;
                case 1: probe.holes = static_cast<Holes>(v); break;
                case 2: probe.external_threads = static_cast<ExternalThreads>(v); break;
                case 3: probe.surface_finish = static_cast<SurfaceFinish>(v); break;
                case 4: probe.tolerance = static_cast<Tolerance>(v); break;
                case 5: probe.batch_size = static_cast<BatchSize>(v); break;
            }
            if (probe.attr_value_name(attr_index) == name) return v;
        }
        throw std::runtime_error("part_from_json: unknown value '" + name + "' for attribute " +
                                 std::string(kAttributeNames[static_cast<std::size_t>(attr_index)]));
    };
    PartEncoding p;
    p.geometry = static_cast<Geometry>(find_value(0));
    p.holes = static_cast<Holes>(find_value(1));
    p.external_threads = static_cast<ExternalThreads>(find_value(2));
    p.surface_finish = static_cast<SurfaceFinish>(find_value(3));
    p.tolerance = static_cast<Tolerance>(find_value(4));
    p.batch_size = static_cast<BatchSize>(find_value(5));
    return p;
}

inline std::string dataset_to_jsonl(const Dataset& ds) {
    std::string out;
    for (const auto& rec : ds.records) {
        nlohmann::json j;
        j["part"] = part_to_json(rec.part);
        nlohmann::json chains = nlohmann::json::array();
        for (const auto& chain : rec.chains) {
            nlohmann::json ops = nlohmann::json::array();
            for (int t : chain.ops) ops.push_back(token_name(t));
            chains.push_back(ops);
        }
        j["chains"] = chains;
        out += j.dump();
        out += "\n";
    }
    return out;
}

// Generates the full corpus and writes it; byte-identical across rebuilds.
inline Dataset build_dataset(const std::filesystem::path& out_path) {
    Dataset ds = generate_dataset();
    io::atomic_write(out_path, dataset_to_jsonl(ds));
    return ds;
}

inline Dataset load_dataset(const std::filesystem::path& path) {
    const std::string content = io::read_file(path);
    Dataset ds;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        const std::string line = content.substr(pos, end - pos);
        pos = end + 1;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        DatasetRecord rec;
        rec.part = part_from_json(j.at("part"));
        for (const auto& jchain : j.at("chains")) {
            ProcessChain chain;
            for (const auto& jop : jchain) chain.ops.push_back(op_token_by_name(jop.get<std::string>()));
            rec.chains.push_back(std::move(chain));
        }
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.size() != static_cast<std::size_t>(kNumParts))
        throw std::runtime_error("dataset has " + std::to_string(ds.records.size()) + " records, expected " + std::to_string(kNumParts));
    for (int i = 0; i < kNumParts; ++i)
        if (ds.records[static_cast<std::size_t>(i)].part.index() != i)
            throw std::runtime_error("dataset records out of lexicographic order at line " + std::to_string(i + 1));
    return ds;
}

struct TrainPair {
    int part_index = 0;
    ProcessChain chain;

    bool operator==(const TrainPair&) const = default;
    auto operator<=>(const TrainPair&) const = default;
};

// Disjoint train/val/test partition of the 2048 part indices. Train and val
// carry one pair per feasible chain; test keeps only the part indices.
struct Split {
    double fraction = 0.0;
    std::uint64_t seed = 0;
    std::vector<int> train_parts;
    std::vector<int> val_parts;
    std::vector<int> test_parts;
    std::vector<TrainPair> train_pairs;
    std::vector<TrainPair> val_pairs;
};

inline constexpr double kValFraction = 0.10;

namespace detail {
inline std::vector<TrainPair> pairs_for_parts(const Dataset& ds, const std::vector<int>& parts) {
    std::vector<TrainPair> pairs;
    for (int p : parts)
        for (const auto& chain : ds.record_for(p).chains) pairs.push_back({p, chain});
    return pairs;
}
} // namespace detail

// Seeded permutation split. The permutation depends only on the seed, so
// train sets are nested across fractions: train(f1) is a prefix of train(f2)
// whenever f1 <= f2 under the same seed.
inline Split split_dataset(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 0.9)) throw std::invalid_argument("split_dataset: fraction must lie in (0, 0.9)");
    const int n = static_cast<int>(ds.records.size());
    const int n_train = static_cast<int>(std::lround(fraction * n));
    const int n_val = static_cast<int>(std::lround(kValFraction * n));
    if (n_train < 1) throw std::invalid_argument("split_dataset: fraction yields an empty train set");
    if (n_train + n_val >= n) throw std::invalid_argument("split_dataset: no test parts left");

    auto eng = rng::make_engine(rng::derive_seed(seed, rng::SeedTag::split));
    auto perm = rng::permutation(static_cast<std::size_t>(n), eng);

    Split s;
    s.fraction = fraction;
    s.seed = seed;
    for (int i = 0; i < n; ++i) {
        int part = static_cast<int>(perm[static_cast<std::size_t>(i)]);
        if (i < n_train)
            s.train_parts.push_back(part);
        else if (i < n_train + n_val)
            s.val_parts.push_back(part);
        else
            s.test_parts.push_back(part);
    }
    s.train_pairs = detail::pairs_for_parts(ds, s.train_parts);
    s.val_pairs = detail::pairs_for_parts(ds, s.val_parts);
    return s;
}

inline std::string split_manifest_name(double fraction, std::uint64_t seed) {
    return "split_" + io::format_double(fraction) + "_" + std::to_string(seed) + ".json";
}

inline void write_split_manifest(const Split& s, const std::filesystem::path& path) {
    nlohmann::json j;
    j["fraction"] = s.fraction;
    j["seed"] = s.seed;
    j["train"] = s.train_parts;
    j["val"] = s.val_parts;
    j["test"] = s.test_parts;
    io::atomic_write(path, j.dump(2) + "\n");
}

inline Split load_split_manifest(const Dataset& ds, const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(io::read_file(path));
    Split s;
    s.fraction = j.at("fraction").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_parts = j.at("train").get<std::vector<int>>();
    s.val_parts = j.at("val").get<std::vector<int>>();
    s.test_parts = j.at("test").get<std::vector<int>>();
    s.train_pairs = detail::pairs_for_parts(ds, s.train_parts);
    s.val_pairs = detail::pairs_for_parts(ds, s.val_parts);
    return s;
}

} // namespace capp
