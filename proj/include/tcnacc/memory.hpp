#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tcnacc/arch.hpp"
#include "tcnacc/network.hpp"

namespace tcnacc {

// Consecutive samples live in adjacent banks, wrapping.
struct BankLayout {
    int banks = 1;
    std::int64_t words_per_bank = kRamb18Samples;
};

struct FetchPattern {
    std::int64_t start_index = 0;
    int stride = 1;
    int lanes = ArchConfig::lanes;
    std::vector<std::int64_t> cycle_offsets{0};  // tap offsets i * d, one per cycle
};

enum class PortMode { strict = 1, dual = 2 };

struct Conflict {
    int cycle = 0;
    int bank = 0;
    std::vector<int> lanes;

    bool operator==(const Conflict&) const = default;
};

int bank_of(std::int64_t index, const BankLayout& layout);

std::vector<Conflict> detect_conflicts(const FetchPattern& pattern, const BankLayout& layout,
                                       PortMode mode = PortMode::dual);
std::string conflicts_to_json(const std::vector<Conflict>& conflicts);

// Smallest power-of-two bank count that is conflict-free for every start
// offset and every stride up to `stride`.
int min_banks(int stride, int lanes, PortMode mode = PortMode::dual);

// Per-port buffer depths in samples. The activation region of a column port
// (8 RAMB18) holds two double buffers plus the residency pool; the output
// region of a row port (16 RAMB18) holds two partial-result halves.
inline constexpr std::int64_t kActivationBufferSamples = 2048;
inline constexpr std::int64_t kResidencyPoolSamples = 4096;
inline constexpr std::int64_t kPartialBufferSamples = 8192;
inline constexpr std::int64_t kPartialRegionSamples = 16384;

struct FitReport {
    bool fits = false;
    std::int64_t weight_tile_bytes = 0;
    std::int64_t activation_tile_bytes = 0;
    std::int64_t partial_tile_bytes = 0;
    std::int64_t weight_buffer_bytes = 0;
    std::int64_t activation_buffer_bytes = 0;
    std::int64_t partial_buffer_bytes = 0;
    std::int64_t max_chunk = 0;  // largest out-sample chunk that fits
    std::string reason;
};

// Throws Error(infeasible) when the layer cannot be tiled even one output
// sample at a time.
FitReport tile_fit(const ArchConfig& cfg, const LayerDef& layer, std::int64_t in_samples, std::int64_t out_samples);

}  // namespace tcnacc
