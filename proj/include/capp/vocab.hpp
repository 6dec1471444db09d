#pragma once

// Token vocabulary shared by the tokenizer, the sequence model, and every
// file format. Layout (38 tokens, contiguous):
//   0..3    specials: <pad> <bos> <sep> <eos>
//   4..15   the 12 operations, in kOperationNames order
//   16..37  attribute values, attribute-major in the canonical attribute
//           order; names are "attribute:value" so values with the same
//           spelling in different attributes stay distinct tokens.

#include <map>
#include <string>

#include <json.hpp>

#include "capp/io.hpp"
#include "capp/part.hpp"

namespace capp {

inline constexpr int kPadToken = 0;
inline constexpr int kBosToken = 1;
inline constexpr int kSepToken = 2;
inline constexpr int kEosToken = 3;
inline constexpr int kFirstOpToken = 4;
inline constexpr int kFirstAttrToken = kFirstOpToken + kNumOperations; // 16
inline constexpr int kVocabSize = kFirstAttrToken + kNumGeometry + kNumHoles + kNumThreads + kNumFinish + kNumTolerance + kNumBatch; // 38

inline constexpr bool is_special_token(int t) { return t >= 0 && t < kFirstOpToken; }
inline constexpr bool is_op_token(int t) { return t >= kFirstOpToken && t < kFirstAttrToken; }
inline constexpr bool is_attr_token(int t) { return t >= kFirstAttrToken && t < kVocabSize; }

inline int op_token(Op op) { return kFirstOpToken + static_cast<int>(op); }

// First token id of attribute i's value block.
inline int attr_token_base(int attr_index) {
    int base = kFirstAttrToken;
    for (int i = 0; i < attr_index; ++i) base += kAttributeCardinality[static_cast<std::size_t>(i)];
    return base;
}

inline int attr_token(int attr_index, int value) {
    return attr_token_base(attr_index) + value;
}

inline std::string token_name(int token) {
    switch (token) {
        case kPadToken: return "<pad>";
        case kBosToken: return "<bos>";
        case kSepToken: return "<sep>";
        case kEosToken: return "<eos>";
        default: break;
    }
    if (is_op_token(token)) return kOperationNames[static_cast<std::size_t>(token - kFirstOpToken)];
    if (is_attr_token(token)) {
        int rel = token - kFirstAttrToken;
        for (int i = 0; i < 6; ++i) {
            int card = kAttributeCardinality[static_cast<std::size_t>(i)];
            if (rel < card) {
                std::string attr = kAttributeNames[static_cast<std::size_t>(i)];
                std::string value;
                switch (i) {
                    case 0: value = kGeometryNames[static_cast<std::size_t>(rel)]; break;
                    case 1: value = kHolesNames[static_cast<std::size_t>(rel)]; break;
                    case 2: value = kThreadsNames[static_cast<std::size_t>(rel)]; break;
                    case 3: value = kFinishNames[static_cast<std::size_t>(rel)]; break;
                    case 4: value = kToleranceNames[static_cast<std::size_t>(rel)]; break;
                    case 5: value = kBatchNames[static_cast<std::size_t>(rel)]; break;
                }
                return attr + ":" + value;
            }
            rel -= card;
        }
    }
    throw std::invalid_argument("token_name: unknown token id " + std::to_string(token));
}

// Operation name -> token id; throws on unknown names.
inline int op_token_by_name(const std::string& name) {
    for (int i = 0; i < kNumOperations; ++i)
        if (name == kOperationNames[static_cast<std::size_t>(i)]) return kFirstOpToken + i;
    throw std::invalid_argument("op_token_by_name: unknown operation '" + name + "'");
}

inline nlohmann::json vocab_to_json() {
    nlohmann::json j = nlohmann::json::object();
    for (int t = 0; t < kVocabSize; ++t) j[token_name(t)] = t;
    return j;
}

inline void write_vocab(const std::filesystem::path& path) {
    io::atomic_write(path, vocab_to_json().dump(2) + "\n");
}

// Validates a vocab file against the compiled-in layout.
inline void check_vocab_file(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(io::read_file(path));
    if (j.size() != static_cast<std::size_t>(kVocabSize))
        throw std::runtime_error("vocab file has " + std::to_string(j.size()) + " tokens, expected " + std::to_string(kVocabSize));
    for (int t = 0; t < kVocabSize; ++t) {
        std::string name = token_name(t);
        if (!j.contains(name) || j[name].get<int>() != t)
            throw std::runtime_error("vocab file disagrees on token '" + name + "'");
    }
}

} // namespace capp
