#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tcnacc {

enum class Activation { relu, none };

struct LayerDef {
    int id = 0;
    int in_channels = 1;
    int out_channels = 1;
    int k = 1;
    int d = 1;
    int stride = 1;
    std::optional<int> residual_from;
    Activation activation = Activation::relu;
    bool bias = false;
    int requant_shift = 0;
    std::string type;  // optional label, e.g. "t3"; empty when absent

    bool operator==(const LayerDef&) const = default;
};

struct NetworkDef {
    std::string name;
    int input_channels = 1;
    std::optional<double> sample_rate_hz;
    std::vector<LayerDef> layers;
    std::string description;

    // Position of the layer with the given id; throws for unknown ids.
    std::size_t index_of(int id) const;

    bool operator==(const NetworkDef&) const = default;
};

struct LayerPlan {
    std::int64_t in_samples = 0;
    std::int64_t out_samples = 0;

    bool operator==(const LayerPlan&) const = default;
};

// Per-execution sample counts: the last layer produces `batch` outputs.
struct StreamPlan {
    std::int64_t batch = 1;
    std::vector<LayerPlan> layers;
};

struct Workload {
    std::int64_t macs = 0;
    std::int64_t ops = 0;
};

struct Footprint {
    std::int64_t activations_bytes = 0;
    std::int64_t weights_bytes = 0;
};

NetworkDef parse_network(std::string_view text);
NetworkDef load_network(const std::filesystem::path& path);
std::string serialize_network(const NetworkDef& net);

// Throws Error(input) naming the offending layer.
void validate_network(const NetworkDef& net);

std::int64_t local_receptive_field(const LayerDef& layer);
std::int64_t receptive_field(const NetworkDef& net);

StreamPlan plan_stream(const NetworkDef& net, std::int64_t batch);
Workload workload(const NetworkDef& net, const StreamPlan& plan);
Footprint memory_footprint(const NetworkDef& net, const StreamPlan& plan);

// Output j of layer l corresponds to network input time offset[l] + j * rate[l].
struct TimeAlignment {
    std::vector<std::int64_t> offset;
    std::vector<std::int64_t> rate;
};
TimeAlignment time_alignment(const NetworkDef& net);

// Number of source outputs by which a residual source leads the consuming
// layer: output j of the layer adds source output j + lag.
std::int64_t residual_lag(const NetworkDef& net, std::size_t layer_index);

// Highest output index each layer must have produced so that the last layer
// can emit output `final_index`.
std::vector<std::int64_t> required_outputs(const NetworkDef& net, std::int64_t final_index);

}  // namespace tcnacc
