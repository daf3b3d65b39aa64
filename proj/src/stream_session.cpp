#include <algorithm>

#include "tcnacc/error.hpp"
#include "tcnacc/qconv.hpp"

namespace tcnacc {

StreamSession::StreamSession(const NetworkDef& net, const WeightSet& weights, std::int64_t batch, bool keep_history)
    : net_(net), weights_(weights), batch_(batch), keep_history_(keep_history) {
    if (batch < 1) throw_input("batch size must be >= 1");
    validate_network(net_);
    check_weights(net_, weights_);
    buffers_.resize(net_.layers.size() + 1);
    buffers_[0].channels = net_.input_channels;
    for (std::size_t l = 0; l < net_.layers.size(); ++l) {
        buffers_[l + 1].channels = net_.layers[l].out_channels;
        lag_.push_back(residual_lag(net_, l));
    }
    produced_.assign(net_.layers.size(), 0);
}

QTensor StreamSession::window(const Buffer& b, std::int64_t t0, std::int64_t n) const {
    if (t0 < b.base || t0 + n > b.end()) throw_internal("stream window outside buffered history");
    QTensor t = QTensor::zeros(b.channels, n);
    const std::int64_t off = t0 - b.base;
    for (std::int64_t s = 0; s < n; ++s)
        for (int c = 0; c < b.channels; ++c)
            t.at(c, s) = b.frames[static_cast<std::size_t>((off + s) * b.channels + c)];
    return t;
}

std::vector<std::int16_t> StreamSession::advance(std::int64_t final_index) {
    const auto need = required_outputs(net_, final_index);
    std::vector<std::int16_t> emitted;
    for (std::size_t l = 0; l < net_.layers.size(); ++l) {
        const LayerDef& layer = net_.layers[l];
        const std::int64_t from = produced_[l];
        const std::int64_t n = need[l] - from + 1;
        if (n <= 0) continue;
        const std::int64_t len = (n - 1) * layer.stride + local_receptive_field(layer);
        const QTensor in = window(buffers_[l], from * layer.stride, len);

        std::optional<QTensor> res;
        if (layer.residual_from) {
            const std::size_t src = net_.index_of(*layer.residual_from);
            res = window(buffers_[src + 1], from + lag_[l], n);
        }
        LayerResult r = run_layer(layer, in, res ? &*res : nullptr, weights_.layers[l]);
        stats_ += r.saturation;

        auto frames = tensor_to_frames(r.output);
        Buffer& out = buffers_[l + 1];
        out.frames.insert(out.frames.end(), frames.begin(), frames.end());
        produced_[l] = need[l] + 1;
        if (l + 1 == net_.layers.size()) emitted = std::move(frames);
    }
    ++executions_;
    return emitted;
}

void StreamSession::trim() {
    if (keep_history_) return;
    const std::size_t L = net_.layers.size();
    std::vector<std::int64_t> keep_from(L + 1, INT64_MAX);
    for (std::size_t l = 0; l < L; ++l) {
        const LayerDef& layer = net_.layers[l];
        keep_from[l] = std::min(keep_from[l], produced_[l] * layer.stride);
        if (layer.residual_from) {
            const std::size_t src = net_.index_of(*layer.residual_from);
            keep_from[src + 1] = std::min(keep_from[src + 1], produced_[l] + lag_[l]);
        }
    }
    for (std::size_t b = 0; b <= L; ++b) {
        Buffer& buf = buffers_[b];
        const std::int64_t cut = std::min(keep_from[b], buf.end());
        if (cut <= buf.base) continue;
        buf.frames.erase(buf.frames.begin(), buf.frames.begin() + (cut - buf.base) * buf.channels);
        buf.base = cut;
    }
}

std::vector<std::int16_t> StreamSession::push(std::span<const std::int16_t> frames) {
    const int c = net_.input_channels;
    if (frames.size() % static_cast<std::size_t>(c) != 0) throw_input("pushed samples are not whole frames");
    buffers_[0].frames.insert(buffers_[0].frames.end(), frames.begin(), frames.end());
    frames_in_ += static_cast<std::int64_t>(frames.size()) / c;

    std::vector<std::int16_t> out;
    for (;;) {
        const std::int64_t target = produced_.back() + batch_ - 1;
        const auto need = required_outputs(net_, target);
        const LayerDef& first = net_.layers.front();
        const std::int64_t last_input = need[0] * first.stride + local_receptive_field(first) - 1;
        if (last_input >= buffers_[0].end()) break;
        auto f = advance(target);
        out.insert(out.end(), f.begin(), f.end());
    }
    trim();
    return out;
}

std::vector<std::int16_t> StreamSession::finish() {
    const LayerDef& first = net_.layers.front();
    std::int64_t best = -1;
    for (std::int64_t target = produced_.back(); target < produced_.back() + batch_ - 1; ++target) {
        const auto need = required_outputs(net_, target);
        if (need[0] * first.stride + local_receptive_field(first) - 1 >= buffers_[0].end()) break;
        best = target;
    }
    std::vector<std::int16_t> out;
    if (best >= 0) out = advance(best);
    trim();
    return out;
}

QTensor StreamSession::sequence(int layer) const {
    if (!keep_history_) throw_internal("sequence() requires a session created with keep_history");
    const Buffer& b = buffers_.at(static_cast<std::size_t>(layer + 1));
    return window(b, 0, b.end());
}

QTensor run_network_streaming(const NetworkDef& net, const WeightSet& weights, const QTensor& input,
                              std::int64_t batch, bool flush, SaturationStats* stats) {
    StreamSession session(net, weights, batch);
    auto out = session.push(tensor_to_frames(input));
    if (flush) {
        auto tail = session.finish();
        out.insert(out.end(), tail.begin(), tail.end());
    }
    if (stats) *stats += session.saturation();
    return frames_to_tensor(out, net.layers.back().out_channels, input.format);
}

}  // namespace tcnacc
