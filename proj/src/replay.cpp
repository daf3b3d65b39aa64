#include <algorithm>
#include <limits>
#include <map>
#include <tuple>

#include "tcnacc/error.hpp"
#include "tcnacc/scheduler.hpp"

namespace tcnacc {

namespace {

QTensor concat_time(const QTensor& a, const QTensor& b) {
    if (a.length == 0) return b;
    if (b.length == 0) return a;
    QTensor r = QTensor::zeros(a.channels, a.length + b.length, a.format);
    for (int c = 0; c < a.channels; ++c) {
        std::copy_n(a.data.begin() + c * a.length, a.length, r.data.begin() + c * r.length);
        std::copy_n(b.data.begin() + c * b.length, b.length, r.data.begin() + c * r.length + a.length);
    }
    return r;
}

}  // namespace

ExecutionCapture capture_execution(const StreamSession& session, const NetworkDef& net, std::int64_t batch,
                                   std::int64_t group) {
    if (group < 1) throw_input("capture_execution needs a steady-state execution (group >= 1)");
    if (session.executions() < group + 1) throw_input("session has not run enough executions");
    const StreamPlan plan = plan_stream(net, batch);
    const auto hi = required_outputs(net, (group + 1) * batch - 1);
    const auto prev = required_outputs(net, group * batch - 1);
    const std::size_t n_layers = net.layers.size();

    ExecutionCapture cap;
    cap.data.history.resize(n_layers);
    cap.data.residual.resize(n_layers);
    QTensor input = session.sequence(-1);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const LayerDef& L = net.layers[l];
        const std::int64_t first = prev[l] + 1;
        const std::int64_t count = hi[l] - prev[l];
        if (count != plan.layers[l].out_samples)
            throw_internal("layer " + std::to_string(L.id) + ": execution produces " + std::to_string(count) +
                           " outputs, plan says " + std::to_string(plan.layers[l].out_samples));
        const std::int64_t win_start = first * L.stride;
        const std::int64_t win_len = plan.layers[l].in_samples;
        if (l == 0) {
            cap.data.history[l] = input.slice(win_start, win_len);
        } else {
            // Samples of the window produced before this execution.
            const std::int64_t new_from = prev[l - 1] + 1;
            const std::int64_t old = std::max<std::int64_t>(0, new_from - win_start);
            cap.data.history[l] = session.sequence(static_cast<int>(l) - 1).slice(win_start, old);
        }
        if (L.residual_from) {
            const std::size_t src = net.index_of(*L.residual_from);
            cap.data.residual[l] =
                session.sequence(static_cast<int>(src)).slice(first + residual_lag(net, l), count);
        }
        cap.expected.push_back(session.sequence(static_cast<int>(l)).slice(first, count));
    }
    return cap;
}

ReplayResult replay_stream(const CommandStream& stream, const NetworkDef& net, const WeightSet& weights,
                           const StreamPlan& plan, const ExecutionData& data) {
    check_weights(net, weights);
    const std::size_t n_layers = net.layers.size();
    if (plan.layers.size() != n_layers || data.history.size() != n_layers || data.residual.size() != n_layers)
        throw_input("replay: plan and execution data must cover every layer");
    const ArchConfig& cfg = stream.meta.cfg;

    ReplayResult res;
    for (std::size_t l = 0; l < n_layers; ++l)
        res.outputs.push_back(QTensor::zeros(net.layers[l].out_channels, plan.layers[l].out_samples));

    // Windows are assembled lazily: a layer's window needs its producer's
    // outputs, which exist once the producer's stores have executed.
    std::vector<std::optional<QTensor>> windows(n_layers);
    auto window_of = [&](std::size_t l) -> const QTensor& {
        if (!windows[l]) {
            const std::int64_t need = plan.layers[l].in_samples;
            QTensor w = l == 0 ? data.history[0] : concat_time(data.history[l], res.outputs[l - 1]);
            if (w.length < need) throw_internal("replay: window of layer " + std::to_string(net.layers[l].id) + " is short");
            windows[l] = w.slice(w.length - need, need);
        }
        return *windows[l];
    };

    struct Loaded {
        std::int64_t cmd = -1;
        QTensor tile;  // activation windows only
    };
    Loaded w_slot[2], a_slot[2];
    using Key = std::tuple<int, int, int>;  // layer, out_group, chunk
    std::map<Key, std::vector<std::int64_t>> acc;
    std::map<Key, std::vector<std::int64_t>> spilled;
    std::map<Key, bool> residual_ready;
    std::map<int, std::size_t> index;
    for (std::size_t l = 0; l < n_layers; ++l) index[net.layers[l].id] = l;

    auto layer_index = [&](int id) {
        const auto it = index.find(id);
        if (it == index.end()) throw_input("replay: command refers to unknown layer " + std::to_string(id));
        return it->second;
    };

    for (const Command& c : stream.commands) {
        const std::size_t l = layer_index(c.layer);
        const LayerDef& L = net.layers[l];
        const LayerWeights& W = weights.layers[l];
        const int slot = static_cast<int>(c.buffer);
        const int o0 = std::max(0, c.out_group) * cfg.n_rows;
        const int o1 = std::min(L.out_channels, o0 + cfg.n_rows);
        const Key key{c.layer, c.out_group, c.time_chunk};
        switch (c.kind) {
        case CommandKind::load_weights: w_slot[slot] = {c.id, {}}; break;
        case CommandKind::load_activations: {
            const QTensor& win = window_of(l);
            const std::int64_t len = (c.samples - 1) * L.stride + local_receptive_field(L);
            a_slot[slot] = {c.id, win.slice(c.sample_start * L.stride, len)};
            break;
        }
        case CommandKind::load_partials:
            if (c.in_group < 0) {
                if (!data.residual[l]) throw_input("replay: residual data missing for layer " + std::to_string(L.id));
                residual_ready[key] = true;
            } else {
                auto it = spilled.find(key);
                if (it == spilled.end()) throw_internal("replay: partials reloaded before being spilled");
                acc[key] = std::move(it->second);
                spilled.erase(it);
            }
            break;
        case CommandKind::run_ce: {
            const Loaded* a = nullptr;
            bool have_w = false;
            for (std::int64_t d : c.depends_on) {
                const Command& dc = stream.commands[static_cast<std::size_t>(d)];
                if (dc.kind == CommandKind::load_weights && w_slot[static_cast<int>(dc.buffer)].cmd == d) have_w = true;
                if (dc.kind == CommandKind::load_activations && a_slot[static_cast<int>(dc.buffer)].cmd == d &&
                    dc.layer == c.layer && dc.in_group == c.in_group && dc.time_chunk == c.time_chunk)
                    a = &a_slot[static_cast<int>(dc.buffer)];
            }
            if (!have_w || !a) throw_internal("replay: run " + std::to_string(c.id) + " has no resident operands");
            const int i0 = c.in_group * cfg.n_cols;
            const int i1 = std::min(L.in_channels, i0 + cfg.n_cols);
            auto& tile = acc[key];
            tile.resize(static_cast<std::size_t>((o1 - o0) * c.samples), 0);
            accumulate_tile(a->tile, W, L, o0, o1, i0, i1, 0, c.samples, tile);
            break;
        }
        case CommandKind::store_partials: {
            auto it = acc.find(key);
            if (it == acc.end()) throw_internal("replay: spilling partials that were never computed");
            // External partials are 32-bit.
            for (auto& v : it->second) {
                const auto lo = std::numeric_limits<std::int32_t>::min();
                const auto hi = std::numeric_limits<std::int32_t>::max();
                if (v < lo || v > hi) {
                    v = std::clamp<std::int64_t>(v, lo, hi);
                    ++res.saturation.requant;
                }
            }
            spilled[key] = std::move(it->second);
            acc.erase(it);
            break;
        }
        case CommandKind::store_outputs: {
            auto it = acc.find(key);
            if (it == acc.end()) throw_internal("replay: storing outputs that were never computed");
            const bool has_res = L.residual_from.has_value();
            if (has_res && !residual_ready[key])
                throw_internal("replay: residual tile of layer " + std::to_string(L.id) + " was not loaded");
            QTensor& out = res.outputs[l];
            for (int o = o0; o < o1; ++o)
                for (std::int64_t t = 0; t < c.samples; ++t) {
                    const std::int64_t abs_t = c.sample_start + t;
                    const std::int16_t* r = nullptr;
                    std::int16_t rv = 0;
                    if (has_res) {
                        rv = data.residual[l]->at(o, abs_t);
                        r = &rv;
                    }
                    out.at(o, abs_t) = finalize_sample(it->second[static_cast<std::size_t>((o - o0) * c.samples + t)],
                                                       o, L, W, r, res.saturation);
                }
            acc.erase(it);
            break;
        }
        }
    }
    return res;
}

}  // namespace tcnacc
