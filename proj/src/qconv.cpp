#include "tcnacc/qconv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tcnacc/error.hpp"

namespace tcnacc {

namespace {

constexpr std::int64_t kMax16 = INT16_MAX;
constexpr std::int64_t kMin16 = INT16_MIN;

std::int16_t clamp16(std::int64_t v, bool& saturated) {
    if (v > kMax16) {
        saturated = true;
        return INT16_MAX;
    }
    if (v < kMin16) {
        saturated = true;
        return INT16_MIN;
    }
    return static_cast<std::int16_t>(v);
}

std::int16_t requant_output(std::int64_t acc, int o, const LayerDef& layer, const LayerWeights& w,
                            SaturationStats& stats) {
    if (!w.bias.empty()) acc += w.bias[static_cast<std::size_t>(o)];
    bool sat = false;
    const std::int16_t y = requantize(acc, effective_shift(layer, w), sat);
    if (sat) ++stats.requant;
    return y;
}

}  // namespace

QTensor QTensor::zeros(int channels, std::int64_t length, QFormat format) {
    QTensor t;
    t.channels = channels;
    t.length = length;
    t.format = format;
    t.data.assign(static_cast<std::size_t>(channels * length), 0);
    return t;
}

QTensor QTensor::slice(std::int64_t t0, std::int64_t n) const {
    if (t0 < 0 || n < 0 || t0 + n > length) throw_internal("tensor slice out of range");
    QTensor s = zeros(channels, n, format);
    for (int c = 0; c < channels; ++c)
        std::copy_n(data.begin() + c * length + t0, n, s.data.begin() + c * n);
    return s;
}

int effective_shift(const LayerDef& layer, const LayerWeights& w) {
    return w.requant_shift.value_or(layer.requant_shift);
}

std::int16_t requantize(std::int64_t acc, int shift, bool& saturated) {
    std::int64_t q = acc;
    if (shift > 0) {
        q = acc >> shift;
        const std::int64_t rem = acc - q * (std::int64_t{1} << shift);
        const std::int64_t half = std::int64_t{1} << (shift - 1);
        if (rem > half || (rem == half && (q & 1) != 0)) ++q;
    }
    return clamp16(q, saturated);
}

std::int16_t saturating_add(std::int16_t a, std::int16_t b, bool& saturated) {
    return clamp16(std::int64_t{a} + b, saturated);
}

std::int64_t conv_output_length(std::int64_t input_length, const LayerDef& layer) {
    const std::int64_t rf = local_receptive_field(layer);
    if (input_length < rf) return 0;
    return (input_length - rf) / layer.stride + 1;
}

void accumulate_tile(const QTensor& input, const LayerWeights& w, const LayerDef& layer, int o0, int o1, int i0,
                     int i1, std::int64_t t0, std::int64_t n, std::vector<std::int64_t>& acc) {
    const std::int64_t rf = local_receptive_field(layer);
    const std::int64_t s = layer.stride;
    if (n <= 0) return;
    if ((t0 + n - 1) * s + rf > input.length) throw_internal("tile reads past the end of its input window");
    if (acc.size() < static_cast<std::size_t>((o1 - o0) * n)) throw_internal("tile accumulator too small");
    for (int o = o0; o < o1; ++o) {
        std::int64_t* row = acc.data() + static_cast<std::size_t>((o - o0) * n);
        for (int i = i0; i < i1; ++i) {
            const std::int16_t* x = input.data.data() + static_cast<std::size_t>(i * input.length);
            for (int tap = 0; tap < layer.k; ++tap) {
                const std::int64_t wv = w.w(o, i, tap);
                if (wv == 0) continue;
                const std::int16_t* xs = x + (t0 * s + rf - 1 - static_cast<std::int64_t>(layer.d) * tap);
                if (s == 1) {
                    for (std::int64_t t = 0; t < n; ++t) row[t] += wv * xs[t];
                } else {
                    for (std::int64_t t = 0; t < n; ++t) row[t] += wv * xs[t * s];
                }
            }
        }
    }
}

std::int16_t finalize_sample(std::int64_t acc, int o, const LayerDef& layer, const LayerWeights& w,
                             const std::int16_t* residual, SaturationStats& stats) {
    std::int16_t y = requant_output(acc, o, layer, w, stats);
    if (residual) {
        bool sat = false;
        y = saturating_add(y, *residual, sat);
        if (sat) ++stats.residual;
    }
    if (layer.activation == Activation::relu && y < 0) y = 0;
    return y;
}

QTensor dilated_conv1d(const QTensor& input, const LayerWeights& w, const LayerDef& layer, SaturationStats* stats) {
    if (input.channels != layer.in_channels)
        throw_input("layer " + std::to_string(layer.id) + ": input has " + std::to_string(input.channels) +
                    " channels, expected " + std::to_string(layer.in_channels));
    const std::int64_t rf = local_receptive_field(layer);
    if (input.length < rf)
        throw_input("layer " + std::to_string(layer.id) + ": window of " + std::to_string(input.length) +
                    " samples is shorter than the local receptive field " + std::to_string(rf));
    const std::int64_t n = conv_output_length(input.length, layer);
    std::vector<std::int64_t> acc(static_cast<std::size_t>(layer.out_channels * n), 0);
    accumulate_tile(input, w, layer, 0, layer.out_channels, 0, layer.in_channels, 0, n, acc);

    SaturationStats local;
    QTensor out = QTensor::zeros(layer.out_channels, n, input.format);
    for (int o = 0; o < layer.out_channels; ++o)
        for (std::int64_t t = 0; t < n; ++t)
            out.at(o, t) = requant_output(acc[static_cast<std::size_t>(o * n + t)], o, layer, w, local);
    if (stats) *stats += local;
    return out;
}

LayerResult run_layer(const LayerDef& layer, const QTensor& input, const QTensor* residual, const LayerWeights& w) {
    LayerResult r;
    r.output = dilated_conv1d(input, w, layer, &r.saturation);
    if (residual) {
        if (residual->channels != r.output.channels || residual->length != r.output.length)
            throw_input("layer " + std::to_string(layer.id) + ": residual shape " +
                        std::to_string(residual->channels) + "x" + std::to_string(residual->length) +
                        " does not match output " + std::to_string(r.output.channels) + "x" +
                        std::to_string(r.output.length));
        for (std::size_t i = 0; i < r.output.data.size(); ++i) {
            bool sat = false;
            r.output.data[i] = saturating_add(r.output.data[i], residual->data[i], sat);
            if (sat) ++r.saturation.residual;
        }
    }
    if (layer.activation == Activation::relu)
        for (auto& v : r.output.data) v = std::max<std::int16_t>(v, 0);
    return r;
}

void check_weights(const NetworkDef& net, const WeightSet& weights) {
    if (weights.layers.size() != net.layers.size())
        throw_input("weight set has " + std::to_string(weights.layers.size()) + " layers, network has " +
                    std::to_string(net.layers.size()));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerDef& l = net.layers[i];
        const LayerWeights& w = weights.layers[i];
        const std::string tag = "layer " + std::to_string(l.id);
        if (w.out_channels != l.out_channels || w.in_channels != l.in_channels || w.k != l.k)
            throw_input(tag + ": weight extents do not match the layer shape");
        if (w.kernel.size() != static_cast<std::size_t>(l.out_channels) * l.in_channels * l.k)
            throw_input(tag + ": kernel array has the wrong number of values");
        if (l.bias && w.bias.size() != static_cast<std::size_t>(l.out_channels))
            throw_input(tag + ": layer has a bias but the weights carry " + std::to_string(w.bias.size()) +
                        " bias values");
        if (!l.bias && !w.bias.empty()) throw_input(tag + ": weights carry a bias the layer does not declare");
        if (w.format.frac_bits < 0 || w.format.frac_bits > 15) throw_input(tag + ": frac_bits outside 0..15");
    }
}

WeightSet synthetic_weights(const NetworkDef& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WeightSet ws;
    for (const auto& l : net.layers) {
        LayerWeights w;
        w.out_channels = l.out_channels;
        w.in_channels = l.in_channels;
        w.k = l.k;
        const double fan_in = static_cast<double>(l.in_channels) * l.k;
        const auto amp = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(256.0 * 1.7 / std::sqrt(fan_in)));
        w.kernel.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.k);
        for (auto& v : w.kernel) v = static_cast<std::int16_t>(static_cast<std::int64_t>(rng() % (2 * amp + 1)) - amp);
        if (l.bias) {
            w.bias.resize(static_cast<std::size_t>(l.out_channels));
            for (auto& b : w.bias) b = static_cast<std::int32_t>(static_cast<std::int64_t>(rng() % 65537) - 32768);
        }
        ws.layers.push_back(std::move(w));
    }
    return ws;
}

QTensor synthetic_stream(int channels, std::int64_t length, std::uint64_t seed, int amplitude) {
    std::mt19937_64 rng(seed);
    QTensor t = QTensor::zeros(channels, length);
    const auto span = static_cast<std::uint64_t>(2 * amplitude + 1);
    // Fill frame by frame so a prefix of a longer stream is the shorter stream.
    for (std::int64_t s = 0; s < length; ++s)
        for (int c = 0; c < channels; ++c)
            t.at(c, s) = static_cast<std::int16_t>(static_cast<std::int64_t>(rng() % span) - amplitude);
    return t;
}

QTensor frames_to_tensor(std::span<const std::int16_t> frames, int channels, QFormat format) {
    if (channels < 1 || frames.size() % static_cast<std::size_t>(channels) != 0)
        throw_input("stream length is not a whole number of frames");
    const auto n = static_cast<std::int64_t>(frames.size()) / channels;
    QTensor t = QTensor::zeros(channels, n, format);
    for (std::int64_t s = 0; s < n; ++s)
        for (int c = 0; c < channels; ++c) t.at(c, s) = frames[static_cast<std::size_t>(s * channels + c)];
    return t;
}

std::vector<std::int16_t> tensor_to_frames(const QTensor& t) {
    std::vector<std::int16_t> f(t.data.size());
    for (std::int64_t s = 0; s < t.length; ++s)
        for (int c = 0; c < t.channels; ++c) f[static_cast<std::size_t>(s * t.channels + c)] = t.at(c, s);
    return f;
}

}  // namespace tcnacc
