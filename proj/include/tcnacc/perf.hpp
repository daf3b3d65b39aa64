#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tcnacc/arch.hpp"
#include "tcnacc/network.hpp"
#include "tcnacc/scheduler.hpp"

namespace tcnacc {

struct TimingModel {
    double freq_mhz = 100.0;
    double bw_in = 16.0;   // bytes per cycle
    double bw_out = 16.0;  // bytes per cycle
    std::int64_t dma_latency_cycles = 64;
    std::int64_t ce_warmup_cycles = 16;

    static TimingModel from(const DeviceSpec& dev, const ArchConfig& cfg);

    // "key=value" with key one of freq_mhz, bw_in, bw_out, dma_latency_cycles,
    // ce_warmup_cycles.
    void apply_override(std::string_view assignment);
    void validate() const;
};

enum class Resource { dma_in, dma_out, ce };
Resource resource_of(CommandKind k);

std::int64_t transfer_cycles(std::int64_t bytes, double bytes_per_cycle, std::int64_t latency);
std::int64_t ce_run_cycles(int k, std::int64_t out_samples, const TimingModel& timing);
std::int64_t command_cycles(const Command& c, const TimingModel& timing);

struct Counters {
    std::int64_t ce_busy_cycles = 0;
    std::int64_t dma_in_cycles = 0;
    std::int64_t dma_out_cycles = 0;
    std::int64_t makespan_cycles = 0;  // per layer: span from the previous layer's finish
    std::int64_t bytes_in = 0;
    std::int64_t bytes_out = 0;
    std::int64_t macs = 0;
    double time_ms = 0.0;
    double achieved_gops = 0.0;
    double efficiency = 0.0;
};

struct LayerReport {
    int layer = 0;
    std::string type;
    std::int64_t start_cycle = 0;
    std::int64_t finish_cycle = 0;
    Counters counters;
};

struct RooflinePoint {
    std::int64_t batch = 0;
    double operational_intensity = 0.0;  // ops per byte
    double attainable_gops = 0.0;
    double achieved_gops = 0.0;
    double peak_gops = 0.0;
    bool bandwidth_limited = false;
};

struct SimReport {
    std::string net;
    ArchConfig cfg;
    std::int64_t batch = 0;
    Policy policy = Policy::stream;
    TimingModel timing;
    double peak_gops = 0.0;
    std::vector<LayerReport> layers;
    Counters total;
    RooflinePoint roofline;
    std::vector<std::int64_t> start;   // per command
    std::vector<std::int64_t> finish;  // per command
    std::vector<std::string> warnings;

    double max_layer_efficiency() const;
};

// Event-driven execution on three resources. At every instant each idle
// resource starts its ready command with the earliest ready time, lowest id
// first.
SimReport simulate(const CommandStream& stream, const TimingModel& timing, const ArchConfig& cfg);

RooflinePoint roofline_point(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan,
                             const CommandStream& stream, const TimingModel& timing, const SimReport& sim);

struct SweepPoint {
    std::int64_t batch = 0;
    std::optional<SimReport> report;  // empty when the point failed
    std::string error;
    double time_per_execution_ms = 0.0;
    double time_per_sample_ms = 0.0;
    std::optional<bool> real_time;  // only when the network has a sample rate
};

std::vector<SweepPoint> batch_sweep(const NetworkDef& net, const ArchConfig& cfg, const std::vector<std::int64_t>& batches,
                                    const TimingModel& timing, Policy policy);

// Reports. Columns are fixed; floating-point values use fixed decimals.
std::string report_csv(const SimReport& r);
std::string report_json(const SimReport& r);
std::string sweep_csv(const std::vector<SweepPoint>& sweep);
std::string sweep_json(const std::vector<SweepPoint>& sweep);
std::string roofline_csv(const std::vector<RooflinePoint>& points);
std::string roofline_json(const std::vector<RooflinePoint>& points);

}  // namespace tcnacc
