#pragma once

// Deterministic rule engine mapping a part encoding to its feasible process
// chains. Four stages, concatenated in order:
//
//   1. primary shaping   rotational parts are turned, everything else is
//                        milled from stock. Freeform and thin-walled parts
//                        in batches additionally get a cast near-net shape
//                        (investment when finish or tolerance demands it,
//                        sand otherwise) followed by a cleanup pass; the
//                        machined-from-stock chain stays feasible as an
//                        alternative primary.
//   2. holes             drilling whenever holes are present, plus boring
//                        when the holes are large_functional or the
//                        tolerance is tight.
//   3. threading         tapping where the capability grid allows it,
//                        thread_milling otherwise; a narrow band admits
//                        both as alternatives.
//   4. finishing         grinding for fine finish or tight tolerance, else
//                        polishing for good finish, else deburring.
//
// One decision is table-driven rather than closed-form: whether threads
// are tapped. It is a capability grid with one bit per attribute cell,
// transcribed as hex masks. The grid is deliberately irregular, scattered
// minority islands rather than smooth bands, so neighbouring encodings
// frequently disagree and a planner has to look the cell up instead of
// interpolating. The remaining stages are smooth one- or two-attribute
// conditions. The engine is a pure function of the encoding.

#include <array>
#include <cstdint>
#include <vector>

#include "capp/part.hpp"
#include "capp/vocab.hpp"

namespace capp {

namespace detail {

// Grid layout: entry index finish*4 + tolerance, bit index holes*4 + batch.
using CapabilityGrid = std::array<std::uint16_t, 16>;

inline bool grid_bit(const CapabilityGrid& grid, const PartEncoding& p) {
    const int entry = static_cast<int>(p.surface_finish) * 4 + static_cast<int>(p.tolerance);
    const int bit = static_cast<int>(p.holes) * 4 + static_cast<int>(p.batch_size);
    return (grid[static_cast<std::size_t>(entry)] >> bit) & 1;
}

// Tapping capability, one grid per geometry (fixturing differs). Bits for
// holes == none are all zero: internal threads need a hole to tap. Inside
// the indifference band below, either threading process is economical and
// both remain feasible; the band is geometry-independent.
inline constexpr std::array<CapabilityGrid, 4> kTapGrid = {{
    {0x8fd0, 0x67a0, 0x7470, 0x4970, 0x35a0, 0x5c30, 0x5e90, 0x7c50, 0x61f0, 0x9ea0, 0xddf0, 0x6a40, 0xdd50, 0x7e60, 0xfdf0, 0x9f30},
    {0xf370, 0xf4f0, 0x3740, 0x5520, 0xfc90, 0xedd0, 0xfbd0, 0x9660, 0xf320, 0x82c0, 0x24e0, 0xfbc0, 0x3f50, 0x2db0, 0x4180, 0xa690},
    {0xaa10, 0xab90, 0x9cb0, 0xfbb0, 0xef70, 0xca30, 0x02e0, 0x3bf0, 0xdff0, 0xeb50, 0x2a40, 0xbcb0, 0xb8e0, 0x95e0, 0x6770, 0xf3d0},
    {0xd6b0, 0x38c0, 0xdf80, 0xe7e0, 0x2640, 0x7bd0, 0xa7a0, 0xd1c0, 0x4d20, 0xf730, 0xd350, 0x2d30, 0x5ae0, 0xc630, 0xdb00, 0xca70},
}};

// Indifference band: cells where tapping and thread milling cost about the
// same, so both stay feasible. A strict subset of every tap grid.
inline constexpr CapabilityGrid kBothGrid = {
    0x8210, 0x2080, 0x1400, 0x4120, 0x2400, 0x4810, 0x0280, 0x1040,
    0x4120, 0x8200, 0x0040, 0x2800, 0x1840, 0x0420, 0x4100, 0x8210};

// Sand casting versus investment casting: investment tooling pays off when
// the finish or the tolerance demands it.
inline Op casting_op(const PartEncoding& p) {
    const bool precise = p.surface_finish == SurfaceFinish::fine || p.tolerance == Tolerance::tight;
    return precise ? Op::investment_casting : Op::sand_casting;
}

// The cleanup pass after casting: five axes when a smooth finish meets
// large hole work on the cast blank, three-axis milling otherwise.
inline Op post_cast_op(const PartEncoding& p) {
    const bool smooth = p.surface_finish == SurfaceFinish::good || p.surface_finish == SurfaceFinish::fine;
    const bool large_holes = p.holes == Holes::large_plain || p.holes == Holes::large_functional;
    return smooth && large_holes ? Op::five_axis_milling : Op::milling;
}

// Primary op when the part is machined from stock.
inline Op machined_primary(const PartEncoding& p) {
    return p.geometry == Geometry::rotational ? Op::turning : Op::milling;
}

inline std::vector<std::vector<int>> primary_alternatives(const PartEncoding& p) {
    const bool castable = (p.geometry == Geometry::freeform || p.geometry == Geometry::thin_walled) &&
                          p.batch_size != BatchSize::single;
    std::vector<std::vector<int>> out;
    if (castable) out.push_back({op_token(casting_op(p)), op_token(post_cast_op(p))});
    out.push_back({op_token(machined_primary(p))});
    return out;
}

inline std::vector<int> hole_stage(const PartEncoding& p) {
    if (p.holes == Holes::none) return {};
    std::vector<int> ops = {op_token(Op::drilling)};
    if (p.holes == Holes::large_functional || p.tolerance == Tolerance::tight) ops.push_back(op_token(Op::boring));
    return ops;
}

// Tapping per the per-geometry capability grid; thread milling everywhere
// tapping is not available, and alongside it inside the indifference band.
inline std::vector<std::vector<int>> threading_alternatives(const PartEncoding& p) {
    if (p.external_threads == ExternalThreads::no) return {{}};
    const bool tap_ok = grid_bit(kTapGrid[static_cast<std::size_t>(p.geometry)], p);
    const bool both = tap_ok && grid_bit(kBothGrid, p);
    std::vector<std::vector<int>> out;
    if (tap_ok) out.push_back({op_token(Op::tapping)});
    if (!tap_ok || both) out.push_back({op_token(Op::thread_milling)});
    return out;
}

inline int finishing_op(const PartEncoding& p) {
    if (p.surface_finish == SurfaceFinish::fine || p.tolerance == Tolerance::tight) return op_token(Op::grinding);
    if (p.surface_finish == SurfaceFinish::good) return op_token(Op::polishing);
    return op_token(Op::deburring);
}

} // namespace detail

inline constexpr int kMaxChainsPerPart = 3;

// 1..3 feasible chains, each of length 2..8. Pure and total over the space.
inline std::vector<ProcessChain> plan_feasible_chains(const PartEncoding& part) {
    const auto primaries = detail::primary_alternatives(part);
    const auto holes = detail::hole_stage(part);
    const auto threadings = detail::threading_alternatives(part);
    const int finish = detail::finishing_op(part);

    std::vector<ProcessChain> chains;
    for (const auto& primary : primaries) {
        for (const auto& threading : threadings) {
            if (static_cast<int>(chains.size()) == kMaxChainsPerPart) return chains;
            ProcessChain c;
            c.ops = primary;
            c.ops.insert(c.ops.end(), holes.begin(), holes.end());
            c.ops.insert(c.ops.end(), threading.begin(), threading.end());
            c.ops.push_back(finish);
            chains.push_back(std::move(c));
        }
    }
    return chains;
}

inline bool chain_is_feasible(const PartEncoding& part, const ProcessChain& chain) {
    for (const auto& c : plan_feasible_chains(part))
        if (c == chain) return true;
    return false;
}

} // namespace capp
