#pragma once

// Part attribute schema and the manufacturing-operation vocabulary.
//
// A part is described by six categorical attributes with cardinalities
// 4/4/2/4/4/4, giving a 2048-element input space that can be enumerated
// exhaustively. Attribute value order below is the canonical order used for
// enumeration, token-id assignment, and file formats.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace capp {

enum class Geometry : std::uint8_t { prismatic, rotational, freeform, thin_walled };
enum class Holes : std::uint8_t { none, small, large_plain, large_functional };
enum class ExternalThreads : std::uint8_t { yes, no };
enum class SurfaceFinish : std::uint8_t { coarse, medium, good, fine };
enum class Tolerance : std::uint8_t { coarse, standard, medium, tight };
enum class BatchSize : std::uint8_t { single, small, medium, large };

inline constexpr int kNumGeometry = 4;
inline constexpr int kNumHoles = 4;
inline constexpr int kNumThreads = 2;
inline constexpr int kNumFinish = 4;
inline constexpr int kNumTolerance = 4;
inline constexpr int kNumBatch = 4;
inline constexpr int kNumParts = kNumGeometry * kNumHoles * kNumThreads * kNumFinish * kNumTolerance * kNumBatch; // 2048

inline constexpr std::array<const char*, 4> kGeometryNames = {"prismatic", "rotational", "freeform", "thin_walled"};
inline constexpr std::array<const char*, 4> kHolesNames = {"none", "small", "large_plain", "large_functional"};
inline constexpr std::array<const char*, 2> kThreadsNames = {"yes", "no"};
inline constexpr std::array<const char*, 4> kFinishNames = {"coarse", "medium", "good", "fine"};
inline constexpr std::array<const char*, 4> kToleranceNames = {"coarse", "standard", "medium", "tight"};
inline constexpr std::array<const char*, 4> kBatchNames = {"single", "small", "medium", "large"};

inline constexpr std::array<const char*, 6> kAttributeNames = {
    "geometry", "holes", "external_threads", "surface_finish", "tolerance", "batch_size"};

inline constexpr std::array<int, 6> kAttributeCardinality = {
    kNumGeometry, kNumHoles, kNumThreads, kNumFinish, kNumTolerance, kNumBatch};

struct PartEncoding {
    Geometry geometry = Geometry::prismatic;
    Holes holes = Holes::none;
    ExternalThreads external_threads = ExternalThreads::yes;
    SurfaceFinish surface_finish = SurfaceFinish::coarse;
    Tolerance tolerance = Tolerance::coarse;
    BatchSize batch_size = BatchSize::single;

    bool operator==(const PartEncoding&) const = default;

    // Attribute value as an integer, by attribute position.
    int attr(int i) const {
        switch (i) {
            case 0: return static_cast<int>(geometry);
            case 1: return static_cast<int>(holes);
            case 2: return static_cast<int>(external_threads);
            case 3: return static_cast<int>(surface_finish);
            case 4: return static_cast<int>(tolerance);
            case 5: return static_cast<int>(batch_size);
        }
        throw std::invalid_argument("PartEncoding::attr: index out of range");
    }

    // Index in the lexicographic enumeration (geometry most significant).
    int index() const {
        int idx = 0;
        for (int i = 0; i < 6; ++i) idx = idx * kAttributeCardinality[static_cast<std::size_t>(i)] + attr(i);
        return idx;
    }

    static PartEncoding from_index(int idx) {
        if (idx < 0 || idx >= kNumParts) throw std::invalid_argument("PartEncoding::from_index: out of range");
        std::array<int, 6> vals{};
        for (int i = 5; i >= 0; --i) {
            int card = kAttributeCardinality[static_cast<std::size_t>(i)];
            vals[static_cast<std::size_t>(i)] = idx % card;
            idx /= card;
        }
        PartEncoding p;
        p.geometry = static_cast<Geometry>(vals[0]);
        p.holes = static_cast<Holes>(vals[1]);
        p.external_threads = static_cast<ExternalThreads>(vals[2]);
        p.surface_finish = static_cast<SurfaceFinish>(vals[3]);
        p.tolerance = static_cast<Tolerance>(vals[4]);
        p.batch_size = static_cast<BatchSize>(vals[5]);
        return p;
    }

    std::string attr_value_name(int i) const {
        int v = attr(i);
        switch (i) {
            case 0: return kGeometryNames[static_cast<std::size_t>(v)];
            case 1: return kHolesNames[static_cast<std::size_t>(v)];
            case 2: return kThreadsNames[static_cast<std::size_t>(v)];
            case 3: return kFinishNames[static_cast<std::size_t>(v)];
            case 4: return kToleranceNames[static_cast<std::size_t>(v)];
            case 5: return kBatchNames[static_cast<std::size_t>(v)];
        }
        throw std::invalid_argument("PartEncoding::attr_value_name: index out of range");
    }
};

// All 2048 encodings in lexicographic attribute order.
inline std::vector<PartEncoding> enumerate_parts() {
    std::vector<PartEncoding> parts;
    parts.reserve(kNumParts);
    for (int idx = 0; idx < kNumParts; ++idx) parts.push_back(PartEncoding::from_index(idx));
    return parts;
}

// Operation vocabulary. Operation ids are the token ids from the shared
// vocabulary (dense, stable): token = kFirstOpToken + position below.
inline constexpr std::array<const char*, 12> kOperationNames = {
    "sand_casting", "investment_casting", "turning", "milling", "five_axis_milling", "drilling",
    "boring", "tapping", "thread_milling", "grinding", "polishing", "deburring"};

inline constexpr int kNumOperations = 12;

enum class Op : int {
    sand_casting = 0,
    investment_casting,
    turning,
    milling,
    five_axis_milling,
    drilling,
    boring,
    tapping,
    thread_milling,
    grinding,
    polishing,
    deburring,
};

// Ordered list of operation token ids; valid chains have length 2..8 and
// contain no special tokens.
struct ProcessChain {
    std::vector<int> ops;

    bool operator==(const ProcessChain&) const = default;
    auto operator<=>(const ProcessChain&) const = default;
};

inline constexpr int kMinChainLen = 2;
inline constexpr int kMaxChainLen = 8;

} // namespace capp
