#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tcnacc/arch.hpp"
#include "tcnacc/network.hpp"
#include "tcnacc/qconv.hpp"

namespace tcnacc {

enum class CommandKind { load_weights, load_activations, load_partials, run_ce, store_partials, store_outputs };
enum class Buffer { A, B };
enum class Policy { stream, resident };

const char* to_string(CommandKind k);
const char* to_string(Buffer b);
const char* to_string(Policy p);
CommandKind command_kind_from(std::string_view s);
Policy policy_from(std::string_view s);

bool is_load(CommandKind k);
bool is_store(CommandKind k);

struct Command {
    std::int64_t id = 0;
    CommandKind kind = CommandKind::run_ce;
    int layer = 0;  // layer id
    int in_group = -1;
    int out_group = -1;
    int time_chunk = 0;
    std::int64_t bytes = 0;  // transfers
    std::int64_t macs = 0;   // run_ce
    Buffer buffer = Buffer::A;
    std::vector<std::int64_t> depends_on;
    // Output samples [sample_start, sample_start + samples) of the chunk.
    std::int64_t sample_start = 0;
    std::int64_t samples = 0;
    int kernel = 0;  // run_ce only

    bool operator==(const Command&) const = default;
};

struct LayerTiling {
    int layer = 0;  // layer id
    int in_channels = 0;
    int out_channels = 0;
    int k = 1;
    int stride = 1;
    std::int64_t rf_local = 1;
    int in_groups = 1;
    int out_groups = 1;
    std::int64_t out_samples = 0;
    std::int64_t in_samples = 0;
    std::int64_t time_chunks = 1;
    std::int64_t chunk_length = 0;
    bool spill_partials = false;
    bool resident = false;
    std::int64_t history_samples = 0;  // per port, resident layers only

    bool operator==(const LayerTiling&) const = default;
};

struct TilingPlan {
    std::vector<LayerTiling> layers;
};

struct StreamMeta {
    std::string net;
    ArchConfig cfg;
    std::int64_t batch = 1;
    Policy policy = Policy::stream;
    std::vector<LayerTiling> tiling;
};

struct CommandStream {
    std::vector<Command> commands;
    StreamMeta meta;
};

LayerTiling tile_layer(const LayerDef& layer, const ArchConfig& cfg, const LayerPlan& plan);
TilingPlan tile_network(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan);

// Layer ids kept on-chip by the resident policy.
std::vector<int> select_resident_layers(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan);

CommandStream schedule_network(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan);
CommandStream schedule_resident(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan);
CommandStream schedule(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan, Policy policy);

struct Violation {
    char rule = 'a';  // 'a'..'e'
    std::int64_t command = -1;
    std::string message;
};

// Empty result means the stream passes.
std::vector<Violation> verify_schedule(const CommandStream& stream, const ArchConfig& cfg);

struct LayerTraffic {
    int layer = 0;
    std::int64_t weight_bytes = 0;
    std::int64_t activation_bytes = 0;
    std::int64_t unique_activation_bytes = 0;  // each (in_group, chunk) window counted once
    std::int64_t partial_in_bytes = 0;
    std::int64_t partial_out_bytes = 0;
    std::int64_t output_bytes = 0;
    std::int64_t macs = 0;
    std::int64_t runs = 0;
};

struct StreamTraffic {
    std::vector<LayerTraffic> layers;
    LayerTraffic total;
    std::int64_t bytes_in() const {
        return total.weight_bytes + total.activation_bytes + total.partial_in_bytes;
    }
    std::int64_t bytes_out() const { return total.partial_out_bytes + total.output_bytes; }
};

StreamTraffic summarize(const CommandStream& stream);

// JSON lines: a {"meta": ...} header followed by one command per line.
std::string serialize_stream(const CommandStream& stream);
CommandStream parse_stream(std::string_view text);

// Data an execution reads from external memory: for layer 0 the whole input
// window, for later layers the part of the window produced by earlier
// executions; plus the time-aligned residual tile of residual layers.
struct ExecutionData {
    std::vector<QTensor> history;
    std::vector<std::optional<QTensor>> residual;
};

struct ExecutionCapture {
    ExecutionData data;
    std::vector<QTensor> expected;  // new outputs of every layer
};

// Slices execution `group` (>= 1, steady state) out of a session created
// with keep_history that has processed at least group + 1 executions.
ExecutionCapture capture_execution(const StreamSession& session, const NetworkDef& net, std::int64_t batch,
                                   std::int64_t group);

struct ReplayResult {
    std::vector<QTensor> outputs;  // new outputs of every layer
    SaturationStats saturation;
};

// Executes the stream's run_ce tiles with integer partial accumulation in
// stream order.
ReplayResult replay_stream(const CommandStream& stream, const NetworkDef& net, const WeightSet& weights,
                           const StreamPlan& plan, const ExecutionData& data);

}  // namespace tcnacc
