#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tcnacc {

// MAC matrix geometry: n_rows output-feature ports by n_cols input-feature
// ports, each SoP evaluating `lanes` neighbouring windows per cycle.
struct ArchConfig {
    static constexpr int lanes = 4;
    int n_rows = 1;
    int n_cols = 1;
    double freq_mhz = 100.0;

    int sops() const { return n_rows * n_cols; }
    bool operator==(const ArchConfig&) const = default;
};

struct DeviceSpec {
    std::string name;
    int dsp_total = 0;
    int ramb18_total = 0;
    double max_freq_mhz = 0.0;
    double bw_in_bytes_per_cycle = 16.0;
    double bw_out_bytes_per_cycle = 16.0;
    int dma_latency_cycles = 64;
};

// One RAMB18 holds 1024 x 16-bit words.
inline constexpr std::int64_t kRamb18Bytes = 2048;
inline constexpr std::int64_t kRamb18Samples = 1024;
inline constexpr int kActivationRamb18PerCol = 8;
inline constexpr int kOutputRamb18PerRow = 16;

struct Capacities {
    std::int64_t weight_bytes = 0;
    std::int64_t activation_bytes = 0;
    std::int64_t output_partial_bytes = 0;
};

struct ResourceEstimate {
    int dsps = 0;
    int ramb18 = 0;
    double peak_gops = 0.0;
    std::int64_t peak_ops_per_cycle = 0;
    Capacities capacities;
};

ResourceEstimate resource_estimate(const ArchConfig& cfg);

struct Feasibility {
    bool feasible = true;
    std::vector<std::string> reasons;
};

Feasibility is_feasible(const ArchConfig& cfg, const DeviceSpec& dev);

struct GridPoint {
    ArchConfig cfg;
    ResourceEstimate estimate;
    Feasibility feasibility;
};

struct IntRange {
    int lo = 0;
    int hi = -1;
    bool empty() const { return hi < lo; }
};

struct DseResult {
    std::vector<GridPoint> grid;    // row-major over (n_rows, n_cols)
    std::vector<GridPoint> ranked;  // feasible points, best first
};

DseResult dse_grid_search(const DeviceSpec& dev, IntRange rows, IntRange cols);

DeviceSpec parse_device(std::string_view text);
DeviceSpec load_device(const std::filesystem::path& path);
std::string serialize_device(const DeviceSpec& dev);

ArchConfig parse_arch(std::string_view text);
ArchConfig load_arch(const std::filesystem::path& path);
std::string serialize_arch(const ArchConfig& cfg);

// Validates geometry and clock; throws Error(input).
void validate_arch(const ArchConfig& cfg);

}  // namespace tcnacc
