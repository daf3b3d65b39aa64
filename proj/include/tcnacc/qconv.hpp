#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tcnacc/network.hpp"

namespace tcnacc {

struct QFormat {
    static constexpr int total_bits = 16;
    int frac_bits = 8;

    bool operator==(const QFormat&) const = default;
};

// channels x length samples, channel-major.
struct QTensor {
    int channels = 0;
    std::int64_t length = 0;
    std::vector<std::int16_t> data;
    QFormat format;

    static QTensor zeros(int channels, std::int64_t length, QFormat format = {});

    std::int16_t at(int c, std::int64_t t) const { return data[static_cast<std::size_t>(c * length + t)]; }
    std::int16_t& at(int c, std::int64_t t) { return data[static_cast<std::size_t>(c * length + t)]; }

    // Samples [t0, t0 + n) of every channel.
    QTensor slice(std::int64_t t0, std::int64_t n) const;

    bool operator==(const QTensor&) const = default;
};

struct LayerWeights {
    int out_channels = 0;
    int in_channels = 0;
    int k = 0;
    std::vector<std::int16_t> kernel;  // [out][in][k]
    std::vector<std::int32_t> bias;    // empty or out_channels entries
    QFormat format;
    std::optional<int> requant_shift;  // overrides the layer definition when set

    std::int16_t w(int o, int i, int tap) const {
        return kernel[(static_cast<std::size_t>(o) * in_channels + i) * k + tap];
    }
    bool operator==(const LayerWeights&) const = default;
};

struct WeightSet {
    std::vector<LayerWeights> layers;
    bool operator==(const WeightSet&) const = default;
};

struct SaturationStats {
    std::int64_t requant = 0;
    std::int64_t residual = 0;

    std::int64_t total() const { return requant + residual; }
    SaturationStats& operator+=(const SaturationStats& o) {
        requant += o.requant;
        residual += o.residual;
        return *this;
    }
};

int effective_shift(const LayerDef& layer, const LayerWeights& w);

// Round-half-to-even arithmetic right shift, saturated to int16.
std::int16_t requantize(std::int64_t acc, int shift, bool& saturated);
std::int16_t saturating_add(std::int16_t a, std::int16_t b, bool& saturated);

// Output sample t of a layer applied to `input` reads input index
// t * stride + RF_local - 1 - d * tap for tap in [0, k).
std::int64_t conv_output_length(std::int64_t input_length, const LayerDef& layer);

// Adds the contributions of input channels [i0, i1) to output channels
// [o0, o1) for output samples [t0, t0 + n). acc is (o1 - o0) x n, row-major.
void accumulate_tile(const QTensor& input, const LayerWeights& w, const LayerDef& layer, int o0, int o1, int i0,
                     int i1, std::int64_t t0, std::int64_t n, std::vector<std::int64_t>& acc);

// Bias, requantization, residual add and activation for one output sample.
std::int16_t finalize_sample(std::int64_t acc, int o, const LayerDef& layer, const LayerWeights& w,
                             const std::int16_t* residual, SaturationStats& stats);

QTensor dilated_conv1d(const QTensor& input, const LayerWeights& w, const LayerDef& layer,
                       SaturationStats* stats = nullptr);

struct LayerResult {
    QTensor output;
    SaturationStats saturation;
};

LayerResult run_layer(const LayerDef& layer, const QTensor& input, const QTensor* residual, const LayerWeights& w);

// Throws when the weight set does not match the network's layer shapes.
void check_weights(const NetworkDef& net, const WeightSet& weights);

// Seeded pseudo-random weights with a fan-in-scaled range; identical across
// platforms for a given seed.
WeightSet synthetic_weights(const NetworkDef& net, std::uint64_t seed);
QTensor synthetic_stream(int channels, std::int64_t length, std::uint64_t seed, int amplitude = 256);

// Weights file: little-endian int16 in [layer][out][in][k] order. Sidecar:
// JSON array of {layer_id, frac_bits, requant_shift, bias?}.
void save_weights(const NetworkDef& net, const WeightSet& weights, const std::filesystem::path& bin_path,
                  const std::filesystem::path& sidecar_path);
WeightSet load_weights(const NetworkDef& net, const std::filesystem::path& bin_path,
                       const std::optional<std::filesystem::path>& sidecar_path);

// Sample streams: little-endian int16, frame-interleaved.
std::vector<std::int16_t> read_stream(const std::filesystem::path& path, int channels);
void write_stream(const std::filesystem::path& path, std::span<const std::int16_t> frames);
QTensor frames_to_tensor(std::span<const std::int16_t> frames, int channels, QFormat format = {});
std::vector<std::int16_t> tensor_to_frames(const QTensor& t);

// Incremental execution: per-layer history, B outputs per execution.
class StreamSession {
public:
    StreamSession(const NetworkDef& net, const WeightSet& weights, std::int64_t batch, bool keep_history = false);

    // Consumes frame-interleaved input samples and returns the frames of every
    // completed group of `batch` outputs.
    std::vector<std::int16_t> push(std::span<const std::int16_t> frames);
    // Emits whatever outputs the buffered input allows, even a partial group.
    std::vector<std::int16_t> finish();

    std::int64_t frames_consumed() const { return frames_in_; }
    std::int64_t outputs_emitted() const { return produced_.back(); }
    std::int64_t executions() const { return executions_; }
    const SaturationStats& saturation() const { return stats_; }

    // With keep_history, sequence(-1) is the full input and sequence(l) the
    // full output of layer l, each starting at index 0.
    QTensor sequence(int layer) const;

private:
    struct Buffer {
        int channels = 0;
        std::int64_t base = 0;           // absolute index of frames[0]
        std::vector<std::int16_t> frames;  // time-major
        std::int64_t end() const { return base + static_cast<std::int64_t>(frames.size()) / channels; }
    };

    std::vector<std::int16_t> advance(std::int64_t final_index);
    void trim();
    QTensor window(const Buffer& b, std::int64_t t0, std::int64_t n) const;

    NetworkDef net_;
    WeightSet weights_;
    std::int64_t batch_;
    bool keep_history_;
    std::vector<Buffer> buffers_;         // [0] network input, [l+1] output of layer l
    std::vector<std::int64_t> produced_;  // outputs produced per layer
    std::vector<std::int64_t> lag_;
    std::int64_t frames_in_ = 0;
    std::int64_t executions_ = 0;
    SaturationStats stats_;
};

// Runs a whole input tensor through a session; flush also emits a trailing
// partial group.
QTensor run_network_streaming(const NetworkDef& net, const WeightSet& weights, const QTensor& input,
                              std::int64_t batch, bool flush = true, SaturationStats* stats = nullptr);

}  // namespace tcnacc
