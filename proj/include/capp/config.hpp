#pragma once
// Run configuration: one structured-text file drives every pipeline stage.
//
// The format is a flat TOML subset: `[section]` headers, `key = value` lines,
// `#` comments. Values are integers, reals, booleans, quoted strings, or
// homogeneous arrays of those. Every field is written explicitly (no silent
// defaults), and write_config(parse_config(text)) == text for canonical text.

#include "capp/io.hpp"
#include "capp/model.hpp"
#include "capp/oracle.hpp"
#include "capp/train.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace capp {

struct RunConfig {
    // [experiment]
    std::vector<double> fractions{0.01, 0.025, 0.05, 0.10};
    std::vector<double> proportions{0.25, 0.5, 0.75, 1.0};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::vector<std::string> strategies{"baseline", "random", "detector"};
    int jobs = 1;

    // [paths] (relative paths are resolved against the CLI's working directory)
    std::string out_dir = "runs/default";
    std::string dataset = "data/dataset.jsonl";
    std::string checkpoints = "checkpoints";
    std::string results = "results.csv";

    ModelConfig model;

    // [train] (seed is never part of the file; it flows from [experiment] seeds)
    TrainOptions train;
    int retrain_epochs = 100;
    bool retrain_from_scratch = false;

    OracleOptions oracle;

    void validate() const {
        model.validate();
        oracle.gbdt.validate();
        if (fractions.empty()) throw std::invalid_argument("config: fractions must be nonempty");
        for (double f : fractions)
            if (f != 0.01 && f != 0.025 && f != 0.05 && f != 0.10)
                throw std::invalid_argument("config: fractions must be drawn from {0.01, 0.025, 0.05, 0.1}");
        if (proportions.empty()) throw std::invalid_argument("config: proportions must be nonempty");
        for (double p : proportions)
            if (!(p > 0.0) || p > 1.0) throw std::invalid_argument("config: proportions must lie in (0, 1]");
        if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
            throw std::invalid_argument("config: seeds must be distinct");
        if (strategies.empty()) throw std::invalid_argument("config: strategies must be nonempty");
        for (const auto& s : strategies)
            if (s != "baseline" && s != "random" && s != "detector")
                throw std::invalid_argument("config: unknown strategy '" + s + "'");
        if (std::set<std::string>(strategies.begin(), strategies.end()).size() != strategies.size())
            throw std::invalid_argument("config: strategies must be distinct");
        if (jobs < 1) throw std::invalid_argument("config: jobs must be >= 1");
        if (train.learning_rate <= 0.0 || train.batch_size < 1 || train.epochs < 0 || retrain_epochs < 0)
            throw std::invalid_argument("config: bad train settings");
        if (!(oracle.val_fraction > 0.0) || oracle.val_fraction >= 1.0)
            throw std::invalid_argument("config: oracle val_fraction must lie in (0, 1)");
        if (!(oracle.threshold > 0.0) || !(oracle.threshold < 1.0))
            throw std::invalid_argument("config: oracle threshold must lie in (0, 1)");
    }
};

namespace detail {

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        if (static_cast<unsigned char>(c) < 0x20) throw std::invalid_argument("config: control character in string");
        out += c;
    }
    out += '"';
    return out;
}

template <typename T, typename Fmt>
std::string format_array(const std::vector<T>& v, Fmt fmt) {
    std::string out = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += fmt(v[i]);
    }
    out += "]";
    return out;
}

// One parsed `key = value` line; the raw value text is interpreted per key.
struct ConfigLine {
    std::string section;
    std::string key;
    std::string raw;
    int line_no = 0;
};

[[nodiscard]] inline std::string strip(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<ConfigLine> scan_config(const std::string& text) {
    std::vector<ConfigLine> lines;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        // Comments are only recognized outside quoted strings; values here
        // never contain '#', so a plain prefix cut is sound for this subset.
        bool in_str = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_str = !in_str;
            else if (line[i] == '#' && !in_str) { line.resize(i); break; }
        }
        line = strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::runtime_error("config line " + std::to_string(n) + ": unterminated section header");
            section = strip(line.substr(1, line.size() - 2));
            if (section.empty()) throw std::runtime_error("config line " + std::to_string(n) + ": empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config line " + std::to_string(n) + ": expected 'key = value'");
        ConfigLine cl;
        cl.section = section;
        cl.key = strip(line.substr(0, eq));
        cl.raw = strip(line.substr(eq + 1));
        cl.line_no = n;
        if (cl.key.empty() || cl.raw.empty()) throw std::runtime_error("config line " + std::to_string(n) + ": expected 'key = value'");
        lines.push_back(std::move(cl));
    }
    return lines;
}

[[noreturn]] inline void bad_value(const ConfigLine& cl, const char* want) {
    throw std::runtime_error("config line " + std::to_string(cl.line_no) + ": key '" + cl.section + "." + cl.key +
                             "' expects " + want);
}

inline double parse_real(const ConfigLine& cl, const std::string& tok) {
    try {
        return io::parse_double(tok);
    } catch (const std::exception&) {
        bad_value(cl, "a real number");
    }
}

inline long long parse_int(const ConfigLine& cl, const std::string& tok) {
    try {
        std::size_t used = 0;
        long long v = std::stoll(tok, &used);
        if (used != tok.size()) bad_value(cl, "an integer");
        return v;
    } catch (const std::runtime_error&) {
        throw;
    } catch (const std::exception&) {
        bad_value(cl, "an integer");
    }
}

inline bool parse_bool(const ConfigLine& cl) {
    if (cl.raw == "true") return true;
    if (cl.raw == "false") return false;
    bad_value(cl, "true or false");
}

inline std::string parse_string(const ConfigLine& cl, const std::string& tok) {
    if (tok.size() < 2 || tok.front() != '"' || tok.back() != '"') bad_value(cl, "a quoted string");
    std::string out;
    for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
        if (tok[i] == '\\') {
            ++i;
            if (i + 1 >= tok.size() || (tok[i] != '"' && tok[i] != '\\')) bad_value(cl, "a quoted string");
        } else if (tok[i] == '"') {
            bad_value(cl, "a quoted string");
        }
        out += tok[i];
    }
    return out;
}

// Splits "[a, b, c]" on top-level commas; quotes are respected, nesting is not.
inline std::vector<std::string> split_array(const ConfigLine& cl) {
    const std::string& s = cl.raw;
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') bad_value(cl, "an array");
    std::vector<std::string> toks;
    std::string cur;
    bool in_str = false;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        char c = s[i];
        if (c == '"' && s[i - 1] != '\\') in_str = !in_str;
        if (c == ',' && !in_str) {
            toks.push_back(strip(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (in_str) bad_value(cl, "an array");
    cur = strip(cur);
    if (!cur.empty()) toks.push_back(cur);
    else if (!toks.empty()) bad_value(cl, "an array without a trailing comma");
    return toks;
}

} // namespace detail

inline std::string write_config(const RunConfig& cfg) {
    using io::format_double;
    auto real = [](double v) { return io::format_double(v); };
    auto uint = [](std::uint64_t v) { return std::to_string(v); };
    std::string out;
    out += "[experiment]\n";
    out += "fractions = " + detail::format_array(cfg.fractions, real) + "\n";
    out += "proportions = " + detail::format_array(cfg.proportions, real) + "\n";
    out += "seeds = " + detail::format_array(cfg.seeds, uint) + "\n";
    out += "strategies = " + detail::format_array(cfg.strategies, detail::quote) + "\n";
    out += "jobs = " + std::to_string(cfg.jobs) + "\n";
    out += "\n[paths]\n";
    out += "out_dir = " + detail::quote(cfg.out_dir) + "\n";
    out += "dataset = " + detail::quote(cfg.dataset) + "\n";
    out += "checkpoints = " + detail::quote(cfg.checkpoints) + "\n";
    out += "results = " + detail::quote(cfg.results) + "\n";
    out += "\n[model]\n";
    out += "d_model = " + std::to_string(cfg.model.d_model) + "\n";
    out += "n_heads = " + std::to_string(cfg.model.n_heads) + "\n";
    out += "n_layers = " + std::to_string(cfg.model.n_layers) + "\n";
    out += "d_ff = " + std::to_string(cfg.model.d_ff) + "\n";
    out += "context_len = " + std::to_string(cfg.model.context_len) + "\n";
    out += "vocab_size = " + std::to_string(cfg.model.vocab_size) + "\n";
    out += "dropout = " + format_double(cfg.model.dropout) + "\n";
    out += "\n[train]\n";
    out += "learning_rate = " + format_double(cfg.train.learning_rate) + "\n";
    out += "batch_size = " + std::to_string(cfg.train.batch_size) + "\n";
    out += "epochs = " + std::to_string(cfg.train.epochs) + "\n";
    out += "retrain_epochs = " + std::to_string(cfg.retrain_epochs) + "\n";
    out += "retrain_from_scratch = " + std::string(cfg.retrain_from_scratch ? "true" : "false") + "\n";
    out += "grad_clip_norm = " + format_double(cfg.train.grad_clip_norm) + "\n";
    out += "adam_beta1 = " + format_double(cfg.train.adam_beta1) + "\n";
    out += "adam_beta2 = " + format_double(cfg.train.adam_beta2) + "\n";
    out += "adam_eps = " + format_double(cfg.train.adam_eps) + "\n";
    out += "\n[oracle]\n";
    out += "n_trees = " + std::to_string(cfg.oracle.gbdt.n_trees) + "\n";
    out += "max_depth = " + std::to_string(cfg.oracle.gbdt.max_depth) + "\n";
    out += "learning_rate = " + format_double(cfg.oracle.gbdt.learning_rate) + "\n";
    out += "subsample = " + format_double(cfg.oracle.gbdt.subsample) + "\n";
    out += "lambda = " + format_double(cfg.oracle.gbdt.lambda) + "\n";
    out += "min_gain = " + format_double(cfg.oracle.gbdt.min_gain) + "\n";
    out += "min_leaf = " + std::to_string(cfg.oracle.gbdt.min_leaf) + "\n";
    out += "early_stop_patience = " + std::to_string(cfg.oracle.gbdt.early_stop_patience) + "\n";
    out += "val_fraction = " + format_double(cfg.oracle.val_fraction) + "\n";
    out += "threshold = " + format_double(cfg.oracle.threshold) + "\n";
    return out;
}

// Parses onto defaults: present keys override, unknown keys are errors so a
// typo cannot silently fall back to a default.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::set<std::string> seen;
    for (const auto& cl : detail::scan_config(text)) {
        const std::string full = cl.section + "." + cl.key;
        if (!seen.insert(full).second)
            throw std::runtime_error("config line " + std::to_string(cl.line_no) + ": duplicate key '" + full + "'");
        auto real = [&] { return detail::parse_real(cl, cl.raw); };
        auto integer = [&](long long lo, long long hi) {
            long long v = detail::parse_int(cl, cl.raw);
            if (v < lo || v > hi) detail::bad_value(cl, "an integer in range");
            return v;
        };
        auto reals = [&] {
            std::vector<double> v;
            for (const auto& tok : detail::split_array(cl)) v.push_back(detail::parse_real(cl, tok));
            return v;
        };
        if (full == "experiment.fractions") cfg.fractions = reals();
        else if (full == "experiment.proportions") cfg.proportions = reals();
        else if (full == "experiment.seeds") {
            cfg.seeds.clear();
            for (const auto& tok : detail::split_array(cl)) {
                long long v = detail::parse_int(cl, tok);
                if (v < 0) detail::bad_value(cl, "nonnegative integers");
                cfg.seeds.push_back(static_cast<std::uint64_t>(v));
            }
        } else if (full == "experiment.strategies") {
            cfg.strategies.clear();
            for (const auto& tok : detail::split_array(cl)) cfg.strategies.push_back(detail::parse_string(cl, tok));
        } else if (full == "experiment.jobs") cfg.jobs = static_cast<int>(integer(1, 4096));
        else if (full == "paths.out_dir") cfg.out_dir = detail::parse_string(cl, cl.raw);
        else if (full == "paths.dataset") cfg.dataset = detail::parse_string(cl, cl.raw);
        else if (full == "paths.checkpoints") cfg.checkpoints = detail::parse_string(cl, cl.raw);
        else if (full == "paths.results") cfg.results = detail::parse_string(cl, cl.raw);
        else if (full == "model.d_model") cfg.model.d_model = static_cast<int>(integer(1, 1 << 16));
        else if (full == "model.n_heads") cfg.model.n_heads = static_cast<int>(integer(1, 1 << 12));
        else if (full == "model.n_layers") cfg.model.n_layers = static_cast<int>(integer(1, 1 << 10));
        else if (full == "model.d_ff") cfg.model.d_ff = static_cast<int>(integer(1, 1 << 20));
        else if (full == "model.context_len") cfg.model.context_len = static_cast<int>(integer(1, 1 << 16));
        else if (full == "model.vocab_size") cfg.model.vocab_size = static_cast<int>(integer(1, 1 << 20));
        else if (full == "model.dropout") cfg.model.dropout = real();
        else if (full == "train.learning_rate") cfg.train.learning_rate = real();
        else if (full == "train.batch_size") cfg.train.batch_size = static_cast<int>(integer(1, 1 << 20));
        else if (full == "train.epochs") cfg.train.epochs = static_cast<int>(integer(0, 1 << 24));
        else if (full == "train.retrain_epochs") cfg.retrain_epochs = static_cast<int>(integer(0, 1 << 24));
        else if (full == "train.retrain_from_scratch") cfg.retrain_from_scratch = detail::parse_bool(cl);
        else if (full == "train.grad_clip_norm") cfg.train.grad_clip_norm = real();
        else if (full == "train.adam_beta1") cfg.train.adam_beta1 = real();
        else if (full == "train.adam_beta2") cfg.train.adam_beta2 = real();
        else if (full == "train.adam_eps") cfg.train.adam_eps = real();
        else if (full == "oracle.n_trees") cfg.oracle.gbdt.n_trees = static_cast<int>(integer(0, 1 << 20));
        else if (full == "oracle.max_depth") cfg.oracle.gbdt.max_depth = static_cast<int>(integer(1, 64));
        else if (full == "oracle.learning_rate") cfg.oracle.gbdt.learning_rate = real();
        else if (full == "oracle.subsample") cfg.oracle.gbdt.subsample = real();
        else if (full == "oracle.lambda") cfg.oracle.gbdt.lambda = real();
        else if (full == "oracle.min_gain") cfg.oracle.gbdt.min_gain = real();
        else if (full == "oracle.min_leaf") cfg.oracle.gbdt.min_leaf = static_cast<int>(integer(1, 1 << 20));
        else if (full == "oracle.early_stop_patience") cfg.oracle.gbdt.early_stop_patience = static_cast<int>(integer(0, 1 << 20));
        else if (full == "oracle.val_fraction") cfg.oracle.val_fraction = real();
        else if (full == "oracle.threshold") cfg.oracle.threshold = real();
        else throw std::runtime_error("config line " + std::to_string(cl.line_no) + ": unknown key '" + full + "'");
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

inline void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
    io::atomic_write(path, write_config(cfg));
}

} // namespace capp
