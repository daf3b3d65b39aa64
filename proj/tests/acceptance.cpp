// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "helpers.hpp"
#include "oracles/oracles.hpp"
#include "tcnacc/arch.hpp"
#include "tcnacc/memory.hpp"
#include "tcnacc/network.hpp"
#include "tcnacc/perf.hpp"
#include "tcnacc/qconv.hpp"
#include "tcnacc/scheduler.hpp"

using namespace tcnacc;
using testutil::data;

namespace {

// Collects the failures of one criterion.
class Outcome {
public:
    void expect(bool ok, const std::string& what) {
        ++checks_;
        if (!ok && failures_.size() < 5) failures_.push_back(what);
        if (!ok) ++failed_;
    }
    void note(const std::string& s) { notes_.push_back(s); }
    bool ok() const { return failed_ == 0; }
    std::string detail() const {
        std::ostringstream os;
        if (failed_ == 0) {
            os << checks_ << " checks";
        } else {
            os << failed_ << " of " << checks_ << " checks failed";
            for (const auto& f : failures_) os << "; " << f;
        }
        for (const auto& n : notes_) os << "; " << n;
        return os.str();
    }

private:
    int checks_ = 0;
    int failed_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(prec);
    os << v;
    return os.str();
}

struct Target {
    std::string label;
    ArchConfig cfg;
    TimingModel timing;
};

const std::vector<Target>& targets() {
    static const std::vector<Target> t = [] {
        const auto z7020 = load_device(data("z7020.json"));
        const auto zu3eg = load_device(data("zu3eg.json"));
        const ArchConfig a{4, 12, 120.0}, b{5, 11, 110.0}, c{10, 9, 180.0};
        return std::vector<Target>{{"Z-7020 12x4", a, TimingModel::from(z7020, a)},
                                   {"Z-7020 11x5", b, TimingModel::from(z7020, b)},
                                   {"ZU3EG 9x10", c, TimingModel::from(zu3eg, c)}};
    }();
    return t;
}

const NetworkDef& bench(const std::string& file) {
    static std::map<std::string, NetworkDef> nets;
    auto it = nets.find(file);
    if (it == nets.end()) it = nets.emplace(file, load_network(data(file))).first;
    return it->second;
}

// Every simulated point, kept for the roofline check.
struct SimKey {
    std::string net;
    std::size_t target;
    Policy policy;
    std::int64_t batch;
    auto operator<=>(const SimKey&) const = default;
};
std::map<SimKey, SimReport> g_sims;

const SimReport& sim(const std::string& file, std::size_t target, std::int64_t b, Policy p) {
    const SimKey key{file, target, p, b};
    auto it = g_sims.find(key);
    if (it != g_sims.end()) return it->second;
    const auto& net = bench(file);
    const auto& t = targets()[target];
    const auto plan = plan_stream(net, b);
    const auto stream = schedule(net, t.cfg, plan, p);
    SimReport r = simulate(stream, t.timing, t.cfg);
    r.roofline = roofline_point(net, t.cfg, plan, stream, t.timing, r);
    return g_sims.emplace(key, std::move(r)).first->second;
}

const std::vector<std::int64_t> kLadder = {1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024};

Outcome resource_grid() {
    Outcome o;
    const auto z7020 = load_device(data("z7020.json"));
    const auto zu3eg = load_device(data("zu3eg.json"));
    for (int r = 4; r <= 12; ++r)
        for (int c = 4; c <= 12; ++c) {
            const auto e = resource_estimate(ArchConfig{r, c, 100.0});
            const auto& bram = oracle::kTableOne[2 * (r - 4)][c - 4];
            const auto& dsp = oracle::kTableOne[2 * (r - 4) + 1][c - 4];
            const std::string at = "(" + std::to_string(r) + "," + std::to_string(c) + ")";
            o.expect(e.ramb18 == bram.value, at + " RAMB18 " + std::to_string(e.ramb18) + " != " + std::to_string(bram.value));
            o.expect(e.dsps == dsp.value, at + " DSP " + std::to_string(e.dsps) + " != " + std::to_string(dsp.value));
            const int shade = std::max(bram.shade, dsp.shade);
            o.expect(is_feasible(ArchConfig{r, c, 100.0}, z7020).feasible == (shade == 0), at + " Z-7020 feasibility");
            o.expect(is_feasible(ArchConfig{r, c, 100.0}, zu3eg).feasible == (shade < 2), at + " ZU3EG feasibility");
        }
    o.expect(is_feasible(ArchConfig{5, 11, 100.0}, z7020).feasible, "(5,11) infeasible on Z-7020");
    o.expect(!is_feasible(ArchConfig{6, 10, 100.0}, z7020).feasible, "(6,10) feasible on Z-7020");
    return o;
}

Outcome named_configs() {
    Outcome o;
    struct Want {
        ArchConfig cfg;
        int dsp, ramb18;
        double gops;
    };
    for (const Want& w : {Want{{4, 12, 120.0}, 192, 240, 46.08}, Want{{5, 11, 110.0}, 220, 255, 48.4},
                          Want{{10, 9, 180.0}, 360, 354, 129.6}}) {
        const auto e = resource_estimate(w.cfg);
        const std::string at = std::to_string(w.cfg.n_cols) + "x" + std::to_string(w.cfg.n_rows);
        o.expect(e.dsps == w.dsp, at + " DSP " + std::to_string(e.dsps));
        o.expect(e.ramb18 == w.ramb18, at + " RAMB18 " + std::to_string(e.ramb18));
        o.expect(std::abs(e.peak_gops - w.gops) < 1e-9, at + " GOPS " + fmt(e.peak_gops, 3));
    }
    const auto big = resource_estimate(ArchConfig{10, 9, 180.0}).capacities;
    o.expect(big.activation_bytes == 144 * 1024, "activation capacity " + std::to_string(big.activation_bytes));
    o.expect(big.weight_bytes == 180 * 1024, "weight capacity " + std::to_string(big.weight_bytes));
    return o;
}

Outcome dse_selection() {
    Outcome o;
    const IntRange range{4, 12};
    const auto z = dse_grid_search(load_device(data("z7020.json")), range, range);
    const auto u = dse_grid_search(load_device(data("zu3eg.json")), range, range);
    o.expect(!z.ranked.empty() && z.ranked[0].cfg.sops() == 55, "Z-7020 top SoPs");
    o.expect(!z.ranked.empty() && z.ranked[0].cfg.n_rows == 5 && z.ranked[0].cfg.n_cols == 11, "Z-7020 top shape");
    o.expect(!u.ranked.empty() && u.ranked[0].cfg.sops() == 90, "ZU3EG top SoPs");
    const auto again = dse_grid_search(load_device(data("zu3eg.json")), range, range);
    bool same = again.ranked.size() == u.ranked.size();
    for (std::size_t i = 0; same && i < u.ranked.size(); ++i) same = again.ranked[i].cfg == u.ranked[i].cfg;
    o.expect(same, "ranking differs between runs");
    if (!u.ranked.empty())
        o.note("ZU3EG top (" + std::to_string(u.ranked[0].cfg.n_rows) + "," + std::to_string(u.ranked[0].cfg.n_cols) + ")");
    return o;
}

Outcome receptive_fields() {
    Outcome o;
    const auto l = [](int id, int k, int d) { return testutil::layer(id, 1, 1, k, d); };
    const auto three = testutil::chain({l(0, 2, 1), l(1, 3, 2), l(2, 4, 3)});
    o.expect(receptive_field(three) == 15, "illustration RF " + std::to_string(receptive_field(three)));
    o.expect(receptive_field(bench("wn_pnt.json")) == 2047,
             "WN-PNT RF " + std::to_string(receptive_field(bench("wn_pnt.json"))));
    std::mt19937_64 rng(555);
    for (int i = 0; i < 200; ++i) {
        const auto net = testutil::random_net(rng, 5, 5, 8, 2, true, false);
        o.expect(receptive_field(net) == oracle::traced_receptive_field(net), "random net " + std::to_string(i));
    }
    return o;
}

LayerWeights random_layer_weights(std::mt19937_64& rng, const LayerDef& l) {
    LayerWeights w;
    w.out_channels = l.out_channels;
    w.in_channels = l.in_channels;
    w.k = l.k;
    for (int i = 0; i < l.out_channels * l.in_channels * l.k; ++i)
        w.kernel.push_back(static_cast<std::int16_t>(static_cast<std::int64_t>(rng() % 65536) - 32768));
    if (rng() % 2)
        for (int i = 0; i < l.out_channels; ++i) w.bias.push_back(static_cast<std::int32_t>(rng() % 2000001) - 1000000);
    return w;
}

Outcome functional_exactness() {
    Outcome o;
    std::mt19937_64 rng(1000);
    for (int i = 0; i < 1000; ++i) {
        LayerDef l = testutil::layer(0, testutil::pick(rng, 1, 4), testutil::pick(rng, 1, 4), testutil::pick(rng, 1, 5),
                                     testutil::pick(rng, 1, 4), testutil::pick(rng, 1, 3));
        l.requant_shift = testutil::pick(rng, 0, 24);
        l.activation = Activation::none;
        const auto w = random_layer_weights(rng, l);
        const auto len = std::min<std::int64_t>(64, local_receptive_field(l) + testutil::pick(rng, 0, 40));
        QTensor x = QTensor::zeros(l.in_channels, len);
        for (auto& v : x.data) v = static_cast<std::int16_t>(static_cast<std::int64_t>(rng() % 65536) - 32768);
        o.expect(dilated_conv1d(x, w, l) == oracle::conv_reference(x, w, l, nullptr), "conv instance " + std::to_string(i));
    }
    for (const char* f : {"ecg.json", "res_tcn.json", "wn_pnt.json"}) {
        const auto& net = bench(f);
        const auto w = synthetic_weights(net, 3);
        std::int64_t decimation = 1;
        for (const auto& l : net.layers) decimation *= l.stride;
        const auto x = synthetic_stream(net.input_channels, receptive_field(net) + 400 * decimation, 9);
        const auto base = run_network_streaming(net, w, x, 1);
        for (std::int64_t b : {4, 8, 348}) {
            const std::int64_t capped = std::min<std::int64_t>(b, base.length);
            o.expect(run_network_streaming(net, w, x, capped) == base, std::string(f) + " B=" + std::to_string(capped));
        }
        for (std::int64_t b : {1, 8}) {
            StreamSession session(net, w, b, true);
            session.push(tensor_to_frames(synthetic_stream(net.input_channels, receptive_field(net) + 3 * b * decimation, 23)));
            const auto cap = capture_execution(session, net, b, 1);
            const auto plan = plan_stream(net, b);
            for (Policy p : {Policy::stream, Policy::resident})
                for (const auto& t : targets()) {
                    const auto s = schedule(net, t.cfg, plan, p);
                    const bool verified = verify_schedule(s, t.cfg).empty();
                    o.expect(verified && replay_stream(s, net, w, plan, cap.data).outputs == cap.expected,
                             std::string(f) + " replay B=" + std::to_string(b) + " " + to_string(p) + " " + t.label);
                }
        }
    }
    return o;
}

Outcome bank_conflicts() {
    Outcome o;
    FetchPattern pattern;
    pattern.stride = 2;
    pattern.lanes = 4;
    o.expect(!detect_conflicts(pattern, BankLayout{4}, PortMode::strict).empty(), "4 banks, stride 2: no conflict");
    o.expect(detect_conflicts(pattern, BankLayout{8}, PortMode::strict).empty(), "8 banks, stride 2: conflict");
    int worst = 0;
    for (int s = 1; s <= 3; ++s) worst = std::max(worst, min_banks(s, 4, PortMode::strict));
    o.expect(worst == 8, "min_banks over stride <= 3 is " + std::to_string(worst));
    std::mt19937_64 rng(66);
    for (int stride = 1; stride <= 3; ++stride)
        for (int banks : {2, 4, 8, 16})
            for (int start = 0; start < banks; ++start)
                for (int ports = 1; ports <= 2; ++ports) {
                    FetchPattern p;
                    p.start_index = start;
                    p.stride = stride;
                    p.lanes = 4;
                    p.cycle_offsets.clear();
                    for (int i = 0; i < 4; ++i) p.cycle_offsets.push_back(static_cast<std::int64_t>(rng() % 32));
                    const auto got = detect_conflicts(p, BankLayout{banks}, static_cast<PortMode>(ports));
                    const auto want = oracle::count_ports(start, stride, 4, p.cycle_offsets, banks, ports);
                    bool same = got.size() == want.size();
                    for (std::size_t i = 0; same && i < got.size(); ++i)
                        same = got[i].cycle == want[i].cycle && got[i].bank == want[i].bank && got[i].lanes == want[i].lanes;
                    o.expect(same, "sweep stride " + std::to_string(stride) + " banks " + std::to_string(banks) +
                                       " start " + std::to_string(start));
                }
    return o;
}

bool caught(const CommandStream& s, const ArchConfig& cfg, char rule) {
    const auto v = verify_schedule(s, cfg);
    return std::any_of(v.begin(), v.end(), [rule](const Violation& x) { return x.rule == rule; });
}

Outcome scheduler_soundness() {
    Outcome o;
    for (const char* f : {"ecg.json", "res_tcn.json", "wn_pnt.json"}) {
        const auto& net = bench(f);
        const std::int64_t big = std::string(f) == "wn_pnt.json" ? 504 : 348;
        const auto weights = memory_footprint(net, plan_stream(net, 1)).weights_bytes;
        for (const auto& t : targets())
            for (std::int64_t b : {std::int64_t{1}, std::int64_t{8}, std::int64_t{144}, big})
                for (Policy p : {Policy::stream, Policy::resident}) {
                    const auto s = schedule(net, t.cfg, plan_stream(net, b), p);
                    const auto v = verify_schedule(s, t.cfg);
                    const std::string at = std::string(f) + " " + t.label + " B=" + std::to_string(b) + " " + to_string(p);
                    o.expect(v.empty(), at + (v.empty() ? "" : ": " + v.front().message));
                    if (p == Policy::stream)
                        o.expect(summarize(s).total.weight_bytes == weights, at + " weight bytes");
                }
    }

    // Constructed violations on a three-in_group, single-SoP layer:
    // lw0 la0 run0 lw1 la1 run1 lw2 la2 run2 store.
    const ArchConfig one{1, 1, 100.0};
    const auto net = testutil::chain({testutil::layer(0, 3, 1, 1)});
    const auto base = schedule(net, one, plan_stream(net, 1), Policy::stream);
    o.expect(verify_schedule(base, one).empty(), "base stream fails verification");
    o.expect(base.commands.size() == 10, "base stream shape");
    if (base.commands.size() != 10) return o;

    auto a = base;
    a.commands[2].depends_on.push_back(5);
    o.expect(caught(a, one, 'a'), "rule (a) not caught");

    CommandStream b;  // hand-built: run before its weight load
    b.meta = schedule(testutil::chain({testutil::layer(0, 1, 1, 1)}), one,
                      plan_stream(testutil::chain({testutil::layer(0, 1, 1, 1)}), 1), Policy::stream)
                 .meta;
    b.commands = {Command{0, CommandKind::load_activations, 0, 0, 0, 0, 2, 0, Buffer::A, {}, 0, 1, 0},
                  Command{1, CommandKind::run_ce, 0, 0, 0, 0, 0, 1, Buffer::A, {0}, 0, 1, 1},
                  Command{2, CommandKind::load_weights, 0, 0, 0, -1, 2, 0, Buffer::A, {}, 0, 0, 0},
                  Command{3, CommandKind::store_outputs, 0, -1, 0, 0, 2, 0, Buffer::A, {1}, 0, 1, 0}};
    o.expect(caught(b, one, 'b'), "rule (b) not caught");

    auto c = base;
    c.commands[6].depends_on.clear();
    o.expect(caught(c, one, 'c'), "rule (c) not caught");

    auto d = base;
    d.commands[0].bytes = 1 << 20;
    o.expect(caught(d, one, 'd'), "rule (d) not caught");

    auto e = base;  // run1 repeats in_group 0, so in_group 1 never contributes
    e.commands[5].in_group = 0;
    o.expect(caught(e, one, 'e'), "rule (e) not caught");
    return o;
}

Outcome performance_trends() {
    Outcome o;
    for (std::size_t t = 0; t < targets().size(); ++t) {
        const double e1 = sim("ecg.json", t, 1, Policy::stream).total.efficiency;
        const double e348 = sim("ecg.json", t, 348, Policy::stream).total.efficiency;
        o.expect(e1 < 0.25, targets()[t].label + " ECG B=1 efficiency " + fmt(e1));
        o.expect(e348 >= 0.80, targets()[t].label + " ECG B=348 efficiency " + fmt(e348));
        o.note(targets()[t].label + " ECG " + fmt(e1) + " -> " + fmt(e348));
    }
    double wn_max = 0.0;
    for (std::size_t t = 0; t < targets().size(); ++t)
        for (std::int64_t b : kLadder) {
            const double m = sim("wn_pnt.json", t, b, Policy::stream).max_layer_efficiency();
            wn_max = std::max(wn_max, m);
            o.expect(m <= 0.60, targets()[t].label + " WN-PNT B=" + std::to_string(b) + " layer efficiency " + fmt(m));
        }
    o.note("WN-PNT max layer efficiency " + fmt(wn_max));
    for (const char* f : {"ecg.json", "res_tcn.json", "wn_pnt.json"})
        for (std::size_t t = 0; t < targets().size(); ++t) {
            double prev = 0.0;
            for (std::int64_t b : kLadder) {
                const double e = sim(f, t, b, Policy::stream).total.efficiency;
                o.expect(e >= prev, std::string(f) + " " + targets()[t].label + " efficiency drops at B=" + std::to_string(b));
                prev = e;
            }
        }
    return o;
}

Outcome real_time() {
    Outcome o;
    const auto& ecg = bench("ecg.json");
    const auto& wn = bench("wn_pnt.json");
    for (std::size_t t = 0; t < targets().size(); ++t) {
        const std::int64_t b = t == 2 ? 4 : 8;
        const auto sw = batch_sweep(ecg, targets()[t].cfg, {b}, targets()[t].timing, Policy::stream);
        const bool pass = sw[0].real_time.value_or(false);
        o.expect(pass, targets()[t].label + " ECG B=" + std::to_string(b) + " misses 300 Hz");
        o.note(targets()[t].label + " ECG B=" + std::to_string(b) + " " + fmt(sw[0].time_per_sample_ms, 3) + " ms/sample");
    }
    const auto sw = batch_sweep(wn, targets()[2].cfg, {504}, targets()[2].timing, Policy::resident);
    const double ms = sw[0].time_per_execution_ms;
    o.expect(sw[0].real_time.value_or(false), "WN-PNT resident B=504 misses 16 kHz");
    o.expect(ms >= 10.0 && ms <= 31.5, "WN-PNT resident B=504 time " + fmt(ms, 3) + " ms");
    o.note("WN-PNT resident B=504 " + fmt(ms, 3) + " ms");
    return o;
}

Outcome roofline_consistency() {
    Outcome o;
    // Points from the other criteria plus the ECG ladder under both policies.
    for (std::size_t t = 0; t < targets().size(); ++t) {
        double prev = -1.0;
        for (std::int64_t b : {1, 2, 4, 8, 16, 32, 64, 128, 256, 348, 512, 1024}) {
            const auto& r = sim("ecg.json", t, b, Policy::stream).roofline;
            o.expect(r.operational_intensity > prev,
                     targets()[t].label + " ECG OI not increasing at B=" + std::to_string(b));
            prev = r.operational_intensity;
            sim("ecg.json", t, b, Policy::resident);
        }
        o.expect(sim("ecg.json", t, 1, Policy::stream).roofline.bandwidth_limited,
                 targets()[t].label + " B=1 is compute-limited");
        o.expect(!sim("ecg.json", t, 348, Policy::stream).roofline.bandwidth_limited,
                 targets()[t].label + " B=348 is bandwidth-limited");
    }
    double worst = 0.0;
    for (const auto& [k, r] : g_sims) {
        const auto& p = r.roofline;
        worst = std::max(worst, p.achieved_gops / p.attainable_gops);
        o.expect(p.achieved_gops <= 1.01 * p.attainable_gops,
                 k.net + " " + targets()[k.target].label + " B=" + std::to_string(k.batch) + " " + to_string(k.policy) +
                     " achieved " + fmt(p.achieved_gops, 3) + " > attainable " + fmt(p.attainable_gops, 3));
    }
    o.note(std::to_string(g_sims.size()) + " points, max achieved/attainable " + fmt(worst, 3));
    return o;
}

Outcome makespan_optimality() {
    Outcome o;
    std::mt19937_64 rng(2718);
    int differ = 0;
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const auto c = testutil::random_small_stream(rng, 20);
        const auto greedy = simulate(c.stream, c.timing, c.stream.meta.cfg).total.makespan_cycles;
        const auto best = oracle::exhaustive_makespan(c.stream, c.timing);
        if (greedy != best) {
            ++differ;
            worst = std::max(worst, static_cast<double>(greedy - best) / static_cast<double>(best));
        }
        o.expect(greedy == best, "stream " + std::to_string(i) + " greedy " + std::to_string(greedy) + " vs minimum " +
                                     std::to_string(best));
    }
    o.note(std::to_string(differ) + " of 100 differ, worst gap " + fmt(100.0 * worst, 1) + "%");
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double limit_s;  // 0 = no runtime bound
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {"resource grid", 1.0, resource_grid},
        {"named configurations", 0.0, named_configs},
        {"DSE selection", 1.0, dse_selection},
        {"receptive fields", 0.0, receptive_fields},
        {"functional exactness", 120.0, functional_exactness},
        {"bank conflicts", 0.0, bank_conflicts},
        {"scheduler soundness", 0.0, scheduler_soundness},
        {"performance trends", 60.0, performance_trends},
        {"real-time verdicts", 0.0, real_time},
        {"roofline consistency", 0.0, roofline_consistency},
        {"makespan optimality", 0.0, makespan_optimality},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto& c = criteria[i];
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0) o.expect(secs < c.limit_s, "runtime " + fmt(secs, 2) + " s over " + fmt(c.limit_s, 0) + " s");
        std::printf("%s [%zu] %s: %s (%.2f s)\n", o.ok() ? "PASS" : "FAIL", i + 1, c.name, o.detail().c_str(), secs);
        std::fflush(stdout);
        if (!o.ok()) ++failed;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
