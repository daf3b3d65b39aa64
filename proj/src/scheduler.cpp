#include "tcnacc/scheduler.hpp"

#include <algorithm>
#include <set>
#include <tuple>
#include <sstream>

#include <json.hpp>

#include "tcnacc/error.hpp"
#include "tcnacc/memory.hpp"

namespace tcnacc {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

constexpr const char* kKindNames[] = {"load_weights", "load_activations", "load_partials",
                                      "run_ce",       "store_partials",   "store_outputs"};

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// Double-buffer bookkeeping: each slot remembers the commands that read its
// current contents, so the next writer can wait for exactly those.
struct Slot {
    std::vector<std::int64_t> readers;
};

struct Builder {
    CommandStream out;
    Slot weights[2];
    Slot acts[2];
    Slot partials[2];
    int next_w = 0;
    int next_a = 0;
    int next_p = 0;
    std::int64_t last_run = -1;

    std::int64_t emit(Command c) {
        c.id = static_cast<std::int64_t>(out.commands.size());
        auto& d = c.depends_on;
        std::sort(d.begin(), d.end());
        d.erase(std::unique(d.begin(), d.end()), d.end());
        out.commands.push_back(std::move(c));
        return out.commands.back().id;
    }

    static std::vector<std::int64_t> claim(Slot& s) {
        std::vector<std::int64_t> r;
        r.swap(s.readers);
        return r;
    }
};

void append(std::vector<std::int64_t>& dst, const std::vector<std::int64_t>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

Command make(CommandKind kind, const LayerDef& l, int g, int o, int c) {
    Command cmd;
    cmd.kind = kind;
    cmd.layer = l.id;
    cmd.in_group = g;
    cmd.out_group = o;
    cmd.time_chunk = c;
    return cmd;
}

// Streaming layer: out_groups outer, in_groups, then time chunks. Weights are
// loaded once per (out_group, in_group) tile; the activation window is
// reloaded for every tile.
std::vector<std::int64_t> emit_stream_layer(Builder& b, const LayerDef& l, const LayerTiling& t,
                                            const ArchConfig& cfg, const std::vector<std::int64_t>& barrier) {
    std::vector<std::int64_t> stores;
    int act_loads = 0;
    const bool residual = l.residual_from.has_value();
    for (int o = 0; o < t.out_groups; ++o) {
        const int rows = std::min(cfg.n_rows, l.out_channels - o * cfg.n_rows);
        const int pslot = b.next_p;
        b.next_p ^= 1;
        const auto p_readers = Builder::claim(b.partials[pslot]);
        auto pending_p = p_readers;
        std::vector<std::int64_t> spill_store(static_cast<std::size_t>(t.time_chunks), -1);

        for (int g = 0; g < t.in_groups; ++g) {
            const int cols = std::min(cfg.n_cols, l.in_channels - g * cfg.n_cols);
            const int wslot = b.next_w;
            b.next_w ^= 1;
            Command lw = make(CommandKind::load_weights, l, g, o, -1);
            lw.bytes = static_cast<std::int64_t>(rows) * cols * l.k * 2;
            lw.buffer = static_cast<Buffer>(wslot);
            lw.depends_on = Builder::claim(b.weights[wslot]);
            const std::int64_t w_id = b.emit(std::move(lw));

            for (int c = 0; c < t.time_chunks; ++c) {
                const std::int64_t start = c * t.chunk_length;
                const std::int64_t len = std::min(t.chunk_length, t.out_samples - start);
                const std::int64_t window = (len - 1) * l.stride + t.rf_local;

                const int aslot = b.next_a;
                b.next_a ^= 1;
                Command la = make(CommandKind::load_activations, l, g, o, c);
                la.bytes = cols * window * 2;
                la.buffer = static_cast<Buffer>(aslot);
                la.sample_start = start;
                la.samples = len;
                la.depends_on = Builder::claim(b.acts[aslot]);
                if (act_loads++ < 2) append(la.depends_on, barrier);
                const std::int64_t a_id = b.emit(std::move(la));

                std::vector<std::int64_t> run_deps{w_id, a_id};
                if (b.last_run >= 0) run_deps.push_back(b.last_run);
                append(run_deps, pending_p);
                if (residual && g == 0) {
                    Command lp = make(CommandKind::load_partials, l, -1, o, c);
                    lp.bytes = rows * len * 2;
                    lp.buffer = static_cast<Buffer>(pslot);
                    lp.sample_start = start;
                    lp.samples = len;
                    lp.depends_on = barrier;
                    append(lp.depends_on, p_readers);
                    run_deps.push_back(b.emit(std::move(lp)));
                }
                if (t.spill_partials && g > 0) {
                    Command lp = make(CommandKind::load_partials, l, g, o, c);
                    lp.bytes = rows * len * 4;
                    lp.buffer = static_cast<Buffer>(pslot);
                    lp.sample_start = start;
                    lp.samples = len;
                    lp.depends_on = {spill_store[static_cast<std::size_t>(c)]};
                    run_deps.push_back(b.emit(std::move(lp)));
                }
                pending_p.clear();

                Command run = make(CommandKind::run_ce, l, g, o, c);
                run.macs = static_cast<std::int64_t>(rows) * cols * l.k * len;
                run.buffer = static_cast<Buffer>(wslot);
                run.sample_start = start;
                run.samples = len;
                run.kernel = l.k;
                run.depends_on = std::move(run_deps);
                const std::int64_t r_id = b.emit(std::move(run));
                b.last_run = r_id;
                b.weights[wslot].readers.push_back(r_id);
                b.acts[aslot].readers.push_back(r_id);

                if (g + 1 == t.in_groups) {
                    Command st = make(CommandKind::store_outputs, l, -1, o, c);
                    st.bytes = rows * len * 2;
                    st.buffer = static_cast<Buffer>(pslot);
                    st.sample_start = start;
                    st.samples = len;
                    st.depends_on = {r_id};
                    const std::int64_t s_id = b.emit(std::move(st));
                    stores.push_back(s_id);
                    b.partials[pslot].readers.push_back(s_id);
                } else if (t.spill_partials) {
                    Command sp = make(CommandKind::store_partials, l, g, o, c);
                    sp.bytes = rows * len * 4;
                    sp.buffer = static_cast<Buffer>(pslot);
                    sp.sample_start = start;
                    sp.samples = len;
                    sp.depends_on = {r_id};
                    spill_store[static_cast<std::size_t>(c)] = b.emit(std::move(sp));
                }
            }
        }
    }
    return stores;
}

// Resident layer: the receptive-field history stays on-chip, so each
// in_group loads only the new samples once and feeds every out_group.
std::vector<std::int64_t> emit_resident_layer(Builder& b, const LayerDef& l, const LayerTiling& t,
                                              const ArchConfig& cfg, const std::vector<std::int64_t>& barrier) {
    std::vector<std::int64_t> stores;
    const bool residual = l.residual_from.has_value();
    auto p_readers = Builder::claim(b.partials[0]);
    append(p_readers, Builder::claim(b.partials[1]));
    auto pending_p = p_readers;
    const std::int64_t n = t.out_samples;
    int act_loads = 0;

    for (int g = 0; g < t.in_groups; ++g) {
        const int cols = std::min(cfg.n_cols, l.in_channels - g * cfg.n_cols);
        const int aslot = b.next_a;
        b.next_a ^= 1;
        Command la = make(CommandKind::load_activations, l, g, -1, 0);
        la.bytes = cols * n * l.stride * 2;
        la.buffer = static_cast<Buffer>(aslot);
        la.sample_start = 0;
        la.samples = n;
        la.depends_on = Builder::claim(b.acts[aslot]);
        if (act_loads++ < 2) append(la.depends_on, barrier);
        const std::int64_t a_id = b.emit(std::move(la));

        for (int o = 0; o < t.out_groups; ++o) {
            const int rows = std::min(cfg.n_rows, l.out_channels - o * cfg.n_rows);
            const int wslot = b.next_w;
            b.next_w ^= 1;
            Command lw = make(CommandKind::load_weights, l, g, o, -1);
            lw.bytes = static_cast<std::int64_t>(rows) * cols * l.k * 2;
            lw.buffer = static_cast<Buffer>(wslot);
            lw.depends_on = Builder::claim(b.weights[wslot]);
            const std::int64_t w_id = b.emit(std::move(lw));

            std::vector<std::int64_t> run_deps{w_id, a_id};
            if (b.last_run >= 0) run_deps.push_back(b.last_run);
            append(run_deps, pending_p);
            if (residual && g == 0) {
                Command lp = make(CommandKind::load_partials, l, -1, o, 0);
                lp.bytes = rows * n * 2;
                lp.buffer = Buffer::A;
                lp.sample_start = 0;
                lp.samples = n;
                lp.depends_on = barrier;
                append(lp.depends_on, p_readers);
                run_deps.push_back(b.emit(std::move(lp)));
            }
            pending_p.clear();

            Command run = make(CommandKind::run_ce, l, g, o, 0);
            run.macs = static_cast<std::int64_t>(rows) * cols * l.k * n;
            run.buffer = static_cast<Buffer>(wslot);
            run.sample_start = 0;
            run.samples = n;
            run.kernel = l.k;
            run.depends_on = std::move(run_deps);
            const std::int64_t r_id = b.emit(std::move(run));
            b.last_run = r_id;
            b.weights[wslot].readers.push_back(r_id);
            b.acts[aslot].readers.push_back(r_id);

            if (g + 1 == t.in_groups) {
                Command st = make(CommandKind::store_outputs, l, -1, o, 0);
                st.bytes = rows * n * 2;
                st.buffer = Buffer::A;
                st.sample_start = 0;
                st.samples = n;
                st.depends_on = {r_id};
                const std::int64_t s_id = b.emit(std::move(st));
                stores.push_back(s_id);
                b.partials[0].readers.push_back(s_id);
                b.partials[1].readers.push_back(s_id);
            }
        }
    }
    return stores;
}

CommandStream build(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan, Policy policy) {
    validate_network(net);
    validate_arch(cfg);
    if (plan.layers.size() != net.layers.size()) throw_input("stream plan does not match the network");
    TilingPlan tiling = tile_network(net, cfg, plan);
    if (policy == Policy::resident) {
        const auto resident = select_resident_layers(net, cfg, plan);
        for (auto& t : tiling.layers) {
            if (std::find(resident.begin(), resident.end(), t.layer) == resident.end()) continue;
            t.resident = true;
            t.history_samples = std::max<std::int64_t>(0, t.rf_local - t.stride);
        }
    }

    Builder b;
    b.out.meta.net = net.name;
    b.out.meta.cfg = cfg;
    b.out.meta.batch = plan.batch;
    b.out.meta.policy = policy;
    b.out.meta.tiling = tiling.layers;

    std::vector<std::int64_t> barrier;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerTiling& t = tiling.layers[i];
        barrier = t.resident ? emit_resident_layer(b, net.layers[i], t, cfg, barrier)
                             : emit_stream_layer(b, net.layers[i], t, cfg, barrier);
    }
    return std::move(b.out);
}

}  // namespace

const char* to_string(CommandKind k) { return kKindNames[static_cast<int>(k)]; }
const char* to_string(Buffer b) { return b == Buffer::A ? "A" : "B"; }
const char* to_string(Policy p) { return p == Policy::stream ? "stream" : "resident"; }

CommandKind command_kind_from(std::string_view s) {
    for (int i = 0; i < 6; ++i)
        if (s == kKindNames[i]) return static_cast<CommandKind>(i);
    throw_input("unknown command kind '" + std::string(s) + "'");
}

Policy policy_from(std::string_view s) {
    if (s == "stream" || s == "stream_all") return Policy::stream;
    if (s == "resident") return Policy::resident;
    throw_input("unknown policy '" + std::string(s) + "' (expected stream or resident)");
}

bool is_load(CommandKind k) {
    return k == CommandKind::load_weights || k == CommandKind::load_activations || k == CommandKind::load_partials;
}
bool is_store(CommandKind k) { return k == CommandKind::store_partials || k == CommandKind::store_outputs; }

LayerTiling tile_layer(const LayerDef& layer, const ArchConfig& cfg, const LayerPlan& plan) {
    const FitReport fit = tile_fit(cfg, layer, plan.in_samples, plan.out_samples);
    LayerTiling t;
    t.layer = layer.id;
    t.in_channels = layer.in_channels;
    t.out_channels = layer.out_channels;
    t.k = layer.k;
    t.stride = layer.stride;
    t.rf_local = local_receptive_field(layer);
    t.in_groups = ceil_div(layer.in_channels, cfg.n_cols);
    t.out_groups = ceil_div(layer.out_channels, cfg.n_rows);
    t.out_samples = plan.out_samples;
    t.in_samples = plan.in_samples;
    t.chunk_length = fit.max_chunk;
    t.time_chunks = (plan.out_samples + t.chunk_length - 1) / t.chunk_length;
    t.spill_partials = plan.out_samples > kPartialBufferSamples;
    return t;
}

TilingPlan tile_network(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan) {
    TilingPlan tp;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        tp.layers.push_back(tile_layer(net.layers[i], cfg, plan.layers[i]));
    return tp;
}

std::vector<int> select_resident_layers(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan) {
    const TilingPlan tp = tile_network(net, cfg, plan);
    std::vector<std::size_t> cand;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerTiling& t = tp.layers[i];
        if (t.rf_local <= 1 || t.time_chunks != 1) continue;
        if (t.out_samples * t.stride > kActivationBufferSamples) continue;
        if (t.out_groups * t.out_samples > kPartialRegionSamples) continue;
        cand.push_back(i);
    }
    std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
        return tp.layers[a].rf_local < tp.layers[b].rf_local;
    });
    std::vector<int> chosen;
    std::int64_t used = 0;
    for (std::size_t i : cand) {
        const LayerTiling& t = tp.layers[i];
        const std::int64_t need = t.in_groups * std::max<std::int64_t>(0, t.rf_local - t.stride);
        if (used + need > kResidencyPoolSamples) break;
        used += need;
        chosen.push_back(t.layer);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

CommandStream schedule_network(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan) {
    return build(net, cfg, plan, Policy::stream);
}

CommandStream schedule_resident(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan) {
    return build(net, cfg, plan, Policy::resident);
}

CommandStream schedule(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan, Policy policy) {
    return build(net, cfg, plan, policy);
}

StreamTraffic summarize(const CommandStream& stream) {
    StreamTraffic st;
    std::map<int, std::size_t> pos;
    for (const auto& t : stream.meta.tiling) {
        pos[t.layer] = st.layers.size();
        st.layers.push_back(LayerTraffic{t.layer});
    }
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& c : stream.commands) {
        auto it = pos.find(c.layer);
        if (it == pos.end()) {
            pos[c.layer] = st.layers.size();
            st.layers.push_back(LayerTraffic{c.layer});
            it = pos.find(c.layer);
        }
        LayerTraffic& lt = st.layers[it->second];
        switch (c.kind) {
        case CommandKind::load_weights: lt.weight_bytes += c.bytes; break;
        case CommandKind::load_activations:
            lt.activation_bytes += c.bytes;
            if (seen.insert({c.layer, c.in_group, c.time_chunk}).second) lt.unique_activation_bytes += c.bytes;
            break;
        case CommandKind::load_partials: lt.partial_in_bytes += c.bytes; break;
        case CommandKind::store_partials: lt.partial_out_bytes += c.bytes; break;
        case CommandKind::store_outputs: lt.output_bytes += c.bytes; break;
        case CommandKind::run_ce:
            lt.macs += c.macs;
            ++lt.runs;
            break;
        }
    }
    for (const auto& lt : st.layers) {
        st.total.weight_bytes += lt.weight_bytes;
        st.total.activation_bytes += lt.activation_bytes;
        st.total.unique_activation_bytes += lt.unique_activation_bytes;
        st.total.partial_in_bytes += lt.partial_in_bytes;
        st.total.partial_out_bytes += lt.partial_out_bytes;
        st.total.output_bytes += lt.output_bytes;
        st.total.macs += lt.macs;
        st.total.runs += lt.runs;
    }
    return st;
}

std::string serialize_stream(const CommandStream& stream) {
    std::ostringstream out;
    ordered_json meta;
    meta["net"] = stream.meta.net;
    meta["n_rows"] = stream.meta.cfg.n_rows;
    meta["n_cols"] = stream.meta.cfg.n_cols;
    meta["freq_mhz"] = stream.meta.cfg.freq_mhz;
    meta["batch"] = stream.meta.batch;
    meta["policy"] = to_string(stream.meta.policy);
    ordered_json tiling = ordered_json::array();
    for (const auto& t : stream.meta.tiling) {
        ordered_json j;
        j["layer"] = t.layer;
        j["in_ch"] = t.in_channels;
        j["out_ch"] = t.out_channels;
        j["k"] = t.k;
        j["stride"] = t.stride;
        j["rf_local"] = t.rf_local;
        j["in_groups"] = t.in_groups;
        j["out_groups"] = t.out_groups;
        j["in_samples"] = t.in_samples;
        j["out_samples"] = t.out_samples;
        j["time_chunks"] = t.time_chunks;
        j["chunk_length"] = t.chunk_length;
        j["spill_partials"] = t.spill_partials;
        j["resident"] = t.resident;
        j["history_samples"] = t.history_samples;
        tiling.push_back(std::move(j));
    }
    meta["tiling"] = std::move(tiling);
    ordered_json head;
    head["meta"] = std::move(meta);
    out << head.dump() << '\n';
    for (const auto& c : stream.commands) {
        ordered_json j;
        j["id"] = c.id;
        j["kind"] = to_string(c.kind);
        j["layer"] = c.layer;
        j["in_group"] = c.in_group;
        j["out_group"] = c.out_group;
        j["time_chunk"] = c.time_chunk;
        if (c.kind == CommandKind::run_ce) {
            j["macs"] = c.macs;
            j["kernel"] = c.kernel;
        } else {
            j["bytes"] = c.bytes;
        }
        j["buffer"] = to_string(c.buffer);
        j["sample_start"] = c.sample_start;
        j["samples"] = c.samples;
        j["depends_on"] = c.depends_on;
        out << j.dump() << '\n';
    }
    return out.str();
}

CommandStream parse_stream(std::string_view text) {
    CommandStream s;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    bool have_meta = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = "stream line " + std::to_string(lineno);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw_input(where + ": " + e.what());
        }
        try {
            if (!have_meta) {
                if (!j.contains("meta")) throw_input(where + ": expected a {\"meta\": ...} header");
                const json& m = j["meta"];
                s.meta.net = m.at("net").get<std::string>();
                s.meta.cfg.n_rows = m.at("n_rows").get<int>();
                s.meta.cfg.n_cols = m.at("n_cols").get<int>();
                s.meta.cfg.freq_mhz = m.at("freq_mhz").get<double>();
                s.meta.batch = m.at("batch").get<std::int64_t>();
                s.meta.policy = policy_from(m.at("policy").get<std::string>());
                for (const auto& t : m.at("tiling")) {
                    LayerTiling lt;
                    lt.layer = t.at("layer").get<int>();
                    lt.in_channels = t.at("in_ch").get<int>();
                    lt.out_channels = t.at("out_ch").get<int>();
                    lt.k = t.at("k").get<int>();
                    lt.stride = t.at("stride").get<int>();
                    lt.rf_local = t.at("rf_local").get<std::int64_t>();
                    lt.in_groups = t.at("in_groups").get<int>();
                    lt.out_groups = t.at("out_groups").get<int>();
                    lt.in_samples = t.at("in_samples").get<std::int64_t>();
                    lt.out_samples = t.at("out_samples").get<std::int64_t>();
                    lt.time_chunks = t.at("time_chunks").get<std::int64_t>();
                    lt.chunk_length = t.at("chunk_length").get<std::int64_t>();
                    lt.spill_partials = t.at("spill_partials").get<bool>();
                    lt.resident = t.at("resident").get<bool>();
                    lt.history_samples = t.at("history_samples").get<std::int64_t>();
                    s.meta.tiling.push_back(lt);
                }
                have_meta = true;
                continue;
            }
            Command c;
            c.id = j.at("id").get<std::int64_t>();
            c.kind = command_kind_from(j.at("kind").get<std::string>());
            c.layer = j.at("layer").get<int>();
            c.in_group = j.at("in_group").get<int>();
            c.out_group = j.at("out_group").get<int>();
            c.time_chunk = j.at("time_chunk").get<int>();
            if (c.kind == CommandKind::run_ce) {
                c.macs = j.at("macs").get<std::int64_t>();
                c.kernel = j.at("kernel").get<int>();
            } else {
                c.bytes = j.at("bytes").get<std::int64_t>();
            }
            const auto buf = j.at("buffer").get<std::string>();
            if (buf != "A" && buf != "B") throw_input(where + ": buffer must be A or B");
            c.buffer = buf == "A" ? Buffer::A : Buffer::B;
            c.sample_start = j.at("sample_start").get<std::int64_t>();
            c.samples = j.at("samples").get<std::int64_t>();
            c.depends_on = j.at("depends_on").get<std::vector<std::int64_t>>();
            s.commands.push_back(std::move(c));
        } catch (const json::exception& e) {
            throw_input(where + ": " + e.what());
        }
    }
    if (!have_meta) throw_input("command stream is empty");
    return s;
}

}  // namespace tcnacc
