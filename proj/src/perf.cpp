#include "tcnacc/perf.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <future>
#include <map>
#include <queue>

#include "tcnacc/error.hpp"

namespace tcnacc {

TimingModel TimingModel::from(const DeviceSpec& dev, const ArchConfig& cfg) {
    TimingModel t;
    t.freq_mhz = cfg.freq_mhz;
    t.bw_in = dev.bw_in_bytes_per_cycle;
    t.bw_out = dev.bw_out_bytes_per_cycle;
    t.dma_latency_cycles = dev.dma_latency_cycles;
    return t;
}

void TimingModel::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw_input("timing override '" + std::string(assignment) + "' is not key=value");
    const std::string key(assignment.substr(0, eq));
    const std::string value(assignment.substr(eq + 1));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw_input("timing override '" + key + "': '" + value + "' is not a number");
    auto as_int = [&]() {
        if (v != std::floor(v)) throw_input("timing override '" + key + "' must be an integer");
        return static_cast<std::int64_t>(v);
    };
    if (key == "freq_mhz")
        freq_mhz = v;
    else if (key == "bw_in")
        bw_in = v;
    else if (key == "bw_out")
        bw_out = v;
    else if (key == "dma_latency_cycles")
        dma_latency_cycles = as_int();
    else if (key == "ce_warmup_cycles")
        ce_warmup_cycles = as_int();
    else
        throw_input("unknown timing override key '" + key +
                    "' (expected freq_mhz, bw_in, bw_out, dma_latency_cycles or ce_warmup_cycles)");
    validate();
}

void TimingModel::validate() const {
    if (!(freq_mhz > 0) || !(bw_in > 0) || !(bw_out > 0)) throw_input("timing: frequency and bandwidths must be positive");
    if (dma_latency_cycles < 0 || ce_warmup_cycles < 0) throw_input("timing: fixed costs must be >= 0");
}

Resource resource_of(CommandKind k) {
    if (k == CommandKind::run_ce) return Resource::ce;
    return is_load(k) ? Resource::dma_in : Resource::dma_out;
}

std::int64_t transfer_cycles(std::int64_t bytes, double bytes_per_cycle, std::int64_t latency) {
    return static_cast<std::int64_t>(std::ceil(static_cast<double>(bytes) / bytes_per_cycle)) + latency;
}

std::int64_t ce_run_cycles(int k, std::int64_t out_samples, const TimingModel& timing) {
    const std::int64_t groups = (out_samples + ArchConfig::lanes - 1) / ArchConfig::lanes;
    return k * groups + timing.ce_warmup_cycles;
}

std::int64_t command_cycles(const Command& c, const TimingModel& timing) {
    switch (resource_of(c.kind)) {
    case Resource::ce: return ce_run_cycles(c.kernel, c.samples, timing);
    case Resource::dma_in: return transfer_cycles(c.bytes, timing.bw_in, timing.dma_latency_cycles);
    case Resource::dma_out: return transfer_cycles(c.bytes, timing.bw_out, timing.dma_latency_cycles);
    }
    return 0;
}

double SimReport::max_layer_efficiency() const {
    double m = 0.0;
    for (const auto& l : layers) m = std::max(m, l.counters.efficiency);
    return m;
}

namespace {

void finish_counters(Counters& c, std::int64_t peak_ops_per_cycle, double freq_mhz) {
    const double ops = 2.0 * static_cast<double>(c.macs);
    c.time_ms = static_cast<double>(c.makespan_cycles) / (freq_mhz * 1000.0);
    if (c.makespan_cycles > 0) {
        c.achieved_gops = ops * freq_mhz / (static_cast<double>(c.makespan_cycles) * 1000.0);
        c.efficiency = ops / (static_cast<double>(peak_ops_per_cycle) * static_cast<double>(c.makespan_cycles));
    }
}

}  // namespace

SimReport simulate(const CommandStream& stream, const TimingModel& timing, const ArchConfig& cfg) {
    timing.validate();
    const std::size_t n = stream.commands.size();
    SimReport rep;
    rep.net = stream.meta.net;
    rep.cfg = cfg;
    rep.batch = stream.meta.batch;
    rep.policy = stream.meta.policy;
    rep.timing = timing;
    const ResourceEstimate est = resource_estimate(ArchConfig{cfg.n_rows, cfg.n_cols, timing.freq_mhz});
    rep.peak_gops = est.peak_gops;
    rep.start.assign(n, -1);
    rep.finish.assign(n, -1);

    std::vector<std::int64_t> cycles(n);
    std::vector<std::size_t> pending(n);
    std::vector<std::vector<std::int64_t>> users(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Command& c = stream.commands[i];
        if (c.id != static_cast<std::int64_t>(i)) throw_internal("simulate: command ids must equal positions");
        cycles[i] = command_cycles(c, timing);
        pending[i] = c.depends_on.size();
        for (std::int64_t d : c.depends_on) {
            if (d < 0 || d >= static_cast<std::int64_t>(n)) throw_internal("simulate: dependency out of range");
            users[static_cast<std::size_t>(d)].push_back(static_cast<std::int64_t>(i));
        }
    }

    using Entry = std::pair<std::int64_t, std::int64_t>;  // (time, id)
    using MinHeap = std::priority_queue<Entry, std::vector<Entry>, std::greater<>>;
    MinHeap ready[3];
    MinHeap events;
    std::int64_t busy[3] = {-1, -1, -1};
    auto res_index = [&](std::size_t i) { return static_cast<int>(resource_of(stream.commands[i].kind)); };
    for (std::size_t i = 0; i < n; ++i)
        if (pending[i] == 0) ready[res_index(i)].push({0, static_cast<std::int64_t>(i)});

    std::int64_t t = 0;
    std::size_t done = 0;
    while (done < n) {
        for (int r = 0; r < 3; ++r) {
            if (busy[r] >= 0 || ready[r].empty() || ready[r].top().first > t) continue;
            const auto id = ready[r].top().second;
            ready[r].pop();
            rep.start[static_cast<std::size_t>(id)] = t;
            rep.finish[static_cast<std::size_t>(id)] = t + cycles[static_cast<std::size_t>(id)];
            busy[r] = id;
            events.push({t + cycles[static_cast<std::size_t>(id)], id});
        }
        std::int64_t next = -1;
        if (!events.empty()) next = events.top().first;
        for (int r = 0; r < 3; ++r)
            if (busy[r] < 0 && !ready[r].empty()) {
                const std::int64_t rt = std::max(t, ready[r].top().first);
                if (next < 0 || rt < next) next = rt;
            }
        if (next < 0) throw_internal("simulate: no runnable command; the dependency graph has a cycle");
        t = next;
        while (!events.empty() && events.top().first <= t) {
            const auto id = events.top().second;
            events.pop();
            busy[res_index(static_cast<std::size_t>(id))] = -1;
            ++done;
            for (std::int64_t u : users[static_cast<std::size_t>(id)]) {
                if (--pending[static_cast<std::size_t>(u)] > 0) continue;
                std::int64_t rt = 0;
                for (std::int64_t d : stream.commands[static_cast<std::size_t>(u)].depends_on)
                    rt = std::max(rt, rep.finish[static_cast<std::size_t>(d)]);
                ready[res_index(static_cast<std::size_t>(u))].push({rt, u});
            }
        }
    }

    // Per-layer accounting in stream order of first appearance.
    std::map<int, std::size_t> pos;
    for (std::size_t i = 0; i < n; ++i) {
        const Command& c = stream.commands[i];
        auto it = pos.find(c.layer);
        if (it == pos.end()) {
            it = pos.emplace(c.layer, rep.layers.size()).first;
            LayerReport lr;
            lr.layer = c.layer;
            lr.start_cycle = rep.start[i];
            rep.layers.push_back(lr);
        }
        LayerReport& lr = rep.layers[it->second];
        lr.start_cycle = std::min(lr.start_cycle, rep.start[i]);
        lr.finish_cycle = std::max(lr.finish_cycle, rep.finish[i]);
        Counters& k = lr.counters;
        switch (resource_of(c.kind)) {
        case Resource::ce:
            k.ce_busy_cycles += cycles[i];
            k.macs += c.macs;
            break;
        case Resource::dma_in:
            k.dma_in_cycles += cycles[i];
            k.bytes_in += c.bytes;
            break;
        case Resource::dma_out:
            k.dma_out_cycles += cycles[i];
            k.bytes_out += c.bytes;
            break;
        }
    }
    std::int64_t prev_finish = 0;
    for (auto& lr : rep.layers) {
        lr.counters.makespan_cycles = std::max<std::int64_t>(0, lr.finish_cycle - prev_finish);
        prev_finish = std::max(prev_finish, lr.finish_cycle);
        finish_counters(lr.counters, est.peak_ops_per_cycle, timing.freq_mhz);
        Counters& tot = rep.total;
        tot.ce_busy_cycles += lr.counters.ce_busy_cycles;
        tot.dma_in_cycles += lr.counters.dma_in_cycles;
        tot.dma_out_cycles += lr.counters.dma_out_cycles;
        tot.bytes_in += lr.counters.bytes_in;
        tot.bytes_out += lr.counters.bytes_out;
        tot.macs += lr.counters.macs;
    }
    for (std::int64_t f : rep.finish) rep.total.makespan_cycles = std::max(rep.total.makespan_cycles, f);
    finish_counters(rep.total, est.peak_ops_per_cycle, timing.freq_mhz);

    // The first input load and the last output store cannot overlap compute.
    std::int64_t first_run_start = -1, last_run_finish = -1, first_load = -1, last_store = -1;
    for (std::size_t i = 0; i < n; ++i) {
        const Command& c = stream.commands[i];
        if (c.kind == CommandKind::run_ce) {
            if (first_run_start < 0 || rep.start[i] < first_run_start) first_run_start = rep.start[i];
            last_run_finish = std::max(last_run_finish, rep.finish[i]);
        }
        if (c.kind == CommandKind::load_activations && first_load < 0) first_load = static_cast<std::int64_t>(i);
        if (c.kind == CommandKind::store_outputs &&
            (last_store < 0 || rep.finish[i] >= rep.finish[static_cast<std::size_t>(last_store)]))
            last_store = static_cast<std::int64_t>(i);
    }
    if (first_load >= 0 && first_run_start >= 0 && first_run_start < rep.finish[static_cast<std::size_t>(first_load)])
        rep.warnings.push_back("compute started before the first input load completed");
    if (last_store >= 0 && rep.start[static_cast<std::size_t>(last_store)] < last_run_finish)
        rep.warnings.push_back("the last output store overlapped compute");
    return rep;
}

RooflinePoint roofline_point(const NetworkDef& net, const ArchConfig& cfg, const StreamPlan& plan,
                             const CommandStream& stream, const TimingModel& timing, const SimReport& sim) {
    (void)stream;
    RooflinePoint p;
    p.batch = plan.batch;
    const Workload w = workload(net, plan);
    const std::int64_t bytes = sim.total.bytes_in + sim.total.bytes_out;
    p.peak_gops = resource_estimate(ArchConfig{cfg.n_rows, cfg.n_cols, timing.freq_mhz}).peak_gops;
    p.operational_intensity = bytes > 0 ? static_cast<double>(w.ops) / static_cast<double>(bytes) : 0.0;
    const double mem_gops = p.operational_intensity * std::min(timing.bw_in, timing.bw_out) * timing.freq_mhz / 1000.0;
    p.attainable_gops = std::min(p.peak_gops, mem_gops);
    p.bandwidth_limited = mem_gops < p.peak_gops;
    if (sim.total.makespan_cycles > 0)
        p.achieved_gops = static_cast<double>(w.ops) * timing.freq_mhz /
                          (static_cast<double>(sim.total.makespan_cycles) * 1000.0);
    return p;
}

std::vector<SweepPoint> batch_sweep(const NetworkDef& net, const ArchConfig& cfg, const std::vector<std::int64_t>& batches,
                                    const TimingModel& timing, Policy policy) {
    if (batches.empty()) throw_input("batch sweep needs at least one batch size");
    for (std::int64_t b : batches)
        if (b < 1) throw_input("batch sizes must be >= 1 (got " + std::to_string(b) + ")");
    validate_network(net);
    timing.validate();

    auto one = [&net, &cfg, &timing, policy](std::int64_t b) {
        SweepPoint pt;
        pt.batch = b;
        try {
            const StreamPlan plan = plan_stream(net, b);
            const CommandStream stream = schedule(net, cfg, plan, policy);
            const auto violations = verify_schedule(stream, cfg);
            if (!violations.empty())
                throw_infeasible("schedule failed verification rule (" + std::string(1, violations.front().rule) +
                                 "): " + violations.front().message);
            SimReport rep = simulate(stream, timing, cfg);
            rep.roofline = roofline_point(net, cfg, plan, stream, timing, rep);
            pt.time_per_execution_ms = rep.total.time_ms;
            pt.time_per_sample_ms = rep.total.time_ms / static_cast<double>(b);
            if (net.sample_rate_hz) pt.real_time = pt.time_per_sample_ms <= 1000.0 / *net.sample_rate_hz;
            for (auto& lr : rep.layers) lr.type = net.layers[net.index_of(lr.layer)].type;
            pt.report = std::move(rep);
        } catch (const std::exception& e) {
            pt.error = e.what();
        }
        return pt;
    };

    std::vector<std::future<SweepPoint>> futures;
    for (std::int64_t b : batches) futures.push_back(std::async(std::launch::async, one, b));
    std::vector<SweepPoint> out;
    for (auto& f : futures) out.push_back(f.get());
    return out;
}

}  // namespace tcnacc
