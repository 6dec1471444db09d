#pragma once

// Greedy decoding with a per-step logit trace. Decoding starts from the
// 8-token prompt and appends the argmax token until EOS or a hard cap of 9
// steps (8 operations + EOS fill the 17-token context exactly). The trace
// keeps the full pre-softmax logit row of every step; downstream feature
// extraction consumes it.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capp/dataset.hpp"
#include "capp/io.hpp"
#include "capp/model.hpp"
#include "capp/tokenizer.hpp"
#include "capp/vocab.hpp"

#include <json.hpp>

namespace capp {

inline constexpr int kMaxDecodeSteps = 9;

struct LogitTrace {
    int part_id = -1;
    std::vector<std::vector<double>> step_logits; // one vocab-size row per step
    std::vector<int> chosen;                      // argmax per step, incl. EOS if reached
    int eos_id = kEosToken;
    bool hit_cap = false;

    int steps() const { return static_cast<int>(chosen.size()); }
};

struct Generation {
    std::optional<ProcessChain> chain; // empty when the output is malformed
    LogitTrace trace;

    bool malformed() const { return !chain.has_value(); }
};

// A generated suffix is malformed when decoding hits the step cap without
// EOS, when any pre-EOS token is not an operation, or when the operation
// count falls outside [kMinChainLen, kMaxChainLen].
inline std::optional<ProcessChain> chain_from_trace(const LogitTrace& tr) {
    if (tr.hit_cap || tr.chosen.empty() || tr.chosen.back() != tr.eos_id) return std::nullopt;
    std::vector<int> ops(tr.chosen.begin(), tr.chosen.end() - 1);
    if (!std::all_of(ops.begin(), ops.end(), [](int t) { return is_op_token(t); })) return std::nullopt;
    const int n = static_cast<int>(ops.size());
    if (n < kMinChainLen || n > kMaxChainLen) return std::nullopt;
    return ProcessChain{std::move(ops)};
}

inline Generation generate(const Model& m, const PartEncoding& part, Workspace& ws) {
    Generation gen;
    gen.trace.part_id = part.index();
    auto prompt = tokenize(part);
    std::vector<int> tokens(prompt.begin(), prompt.end());
    tokens.reserve(static_cast<std::size_t>(m.cfg.context_len));

    bool saw_eos = false;
    for (int step = 0; step < kMaxDecodeSteps; ++step) {
        forward(m, tokens, ws);
        const int v = m.cfg.vocab_size;
        const double* row = ws.logits.data() + (tokens.size() - 1) * static_cast<std::size_t>(v);
        gen.trace.step_logits.emplace_back(row, row + v);
        int best = 0;
        for (int i = 1; i < v; ++i)
            if (row[i] > row[best]) best = i;
        gen.trace.chosen.push_back(best);
        if (best == kEosToken) {
            saw_eos = true;
            break;
        }
        tokens.push_back(best);
    }
    gen.trace.hit_cap = !saw_eos;
    gen.chain = chain_from_trace(gen.trace);
    return gen;
}

// Fraction of parts whose greedy output exactly matches one of the part's
// feasible chains. Malformed outputs count as wrong.
inline double sequence_accuracy(const Model& m, std::span<const int> part_indices, const Dataset& ds) {
    if (part_indices.empty()) return 0.0;
    Workspace ws(m.cfg);
    int correct = 0;
    for (int idx : part_indices) {
        const auto& rec = ds.record_for(idx); // throws on unknown part
        auto gen = generate(m, rec.part, ws);
        if (!gen.malformed() &&
            std::find(rec.chains.begin(), rec.chains.end(), *gen.chain) != rec.chains.end())
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(part_indices.size());
}

// --- trace io ----------------------------------------------------------------

// One JSON object per line; logits rounded to 9 significant digits, which is
// what the feature stage consumes, so file round-trips are feature-exact.
inline nlohmann::json trace_to_json(const LogitTrace& tr) {
    nlohmann::json j;
    j["part_id"] = tr.part_id;
    j["eos_id"] = tr.eos_id;
    j["hit_cap"] = tr.hit_cap;
    j["chosen"] = tr.chosen;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : tr.step_logits) {
        nlohmann::json r = nlohmann::json::array();
        for (double x : row) r.push_back(io::round_sig9(x));
        rows.push_back(std::move(r));
    }
    j["step_logits"] = std::move(rows);
    return j;
}

inline LogitTrace trace_from_json(const nlohmann::json& j) {
    LogitTrace tr;
    tr.part_id = j.at("part_id").get<int>();
    tr.eos_id = j.at("eos_id").get<int>();
    tr.hit_cap = j.at("hit_cap").get<bool>();
    tr.chosen = j.at("chosen").get<std::vector<int>>();
    for (const auto& r : j.at("step_logits")) tr.step_logits.push_back(r.get<std::vector<double>>());
    if (tr.step_logits.size() != tr.chosen.size()) throw std::runtime_error("trace: step count mismatch");
    return tr;
}

inline void write_traces(const std::vector<LogitTrace>& traces, const std::filesystem::path& path) {
    std::string out;
    for (const auto& tr : traces) {
        out += trace_to_json(tr).dump();
        out += '\n';
    }
    io::atomic_write(path, out);
}

inline std::vector<LogitTrace> read_traces(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open traces: " + path.string());
    std::vector<LogitTrace> traces;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        traces.push_back(trace_from_json(nlohmann::json::parse(line)));
    }
    return traces;
}

} // namespace capp
