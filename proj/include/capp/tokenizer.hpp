#pragma once

// Sequence layout:
//   prompt          [<bos> attr1..attr6 <sep>]                 length 8
//   full example    [<bos> attr1..attr6 <sep> op1..opK <eos>]  length 9+K, K in 2..8
// Maximum tokenized length is 17.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "capp/part.hpp"
#include "capp/vocab.hpp"

namespace capp {

inline constexpr int kPromptLen = 8;       // <bos> + 6 attributes + <sep>
inline constexpr int kMaxSeqLen = kPromptLen + kMaxChainLen + 1; // 17

class TokenParseError : public std::runtime_error {
public:
    TokenParseError(std::string what, std::size_t position)
        : std::runtime_error(std::move(what)), position_(position) {}
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

inline std::vector<int> tokenize(const PartEncoding& part, const std::optional<ProcessChain>& chain = std::nullopt) {
    std::vector<int> tokens;
    tokens.reserve(kMaxSeqLen);
    tokens.push_back(kBosToken);
    for (int i = 0; i < 6; ++i) tokens.push_back(attr_token(i, part.attr(i)));
    tokens.push_back(kSepToken);
    if (chain) {
        for (int op : chain->ops) tokens.push_back(op);
        tokens.push_back(kEosToken);
    }
    return tokens;
}

// Inverse of tokenize on well-formed input. The chain is absent for the
// prompt-only form; malformed layouts raise TokenParseError with the first
// offending position.
inline std::pair<PartEncoding, std::optional<ProcessChain>> detokenize(const std::vector<int>& tokens) {
    auto fail = [](const std::string& msg, std::size_t pos) -> void {
        throw TokenParseError(msg + " at position " + std::to_string(pos), pos);
    };
    if (tokens.empty() || tokens[0] != kBosToken) fail("expected <bos>", 0);

    PartEncoding part;
    for (int i = 0; i < 6; ++i) {
        const std::size_t pos = static_cast<std::size_t>(1 + i);
        if (pos >= tokens.size()) fail("sequence ends inside attribute block", pos);
        const int tok = tokens[pos];
        const int base = attr_token_base(i);
        const int card = kAttributeCardinality[static_cast<std::size_t>(i)];
        if (tok < base || tok >= base + card) {
            if (is_op_token(tok)) fail("operation token in attribute position", pos);
            fail("expected a value of attribute '" + std::string(kAttributeNames[static_cast<std::size_t>(i)]) + "'", pos);
        }
        const int value = tok - base;
        switch (i) {
            case 0: part.geometry = static_cast<Geometry>(value); break;
            case 1: part.holes = static_cast<Holes>(value); break;
            case 2: part.external_threads = static_cast<ExternalThreads>(value); break;
            case 3: part.surface_finish = static_cast<SurfaceFinish>(value); break;
            case 4: part.tolerance = static_cast<Tolerance>(value); break;
            case 5: part.batch_size = static_cast<BatchSize>(value); break;
        }
    }

    if (tokens.size() <= static_cast<std::size_t>(kPromptLen - 1)) fail("missing <sep>", tokens.size());
    if (tokens[kPromptLen - 1] != kSepToken) fail("expected <sep>", kPromptLen - 1);
    if (tokens.size() == kPromptLen) return {part, std::nullopt};

    // EOS-terminated op suffix.
    if (tokens.back() != kEosToken) return {part, std::nullopt};
    ProcessChain chain;
    for (std::size_t pos = kPromptLen; pos + 1 < tokens.size(); ++pos) {
        if (!is_op_token(tokens[pos])) fail("expected an operation token", pos);
        chain.ops.push_back(tokens[pos]);
    }
    return {part, std::move(chain)};
}

} // namespace capp
