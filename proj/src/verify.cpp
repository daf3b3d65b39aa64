#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "tcnacc/memory.hpp"
#include "tcnacc/scheduler.hpp"

namespace tcnacc {

namespace {

class Checker {
public:
    Checker(const CommandStream& s, const ArchConfig& cfg) : s_(s), cfg_(cfg), stamp_(s.commands.size(), 0) {}

    std::vector<Violation> run() {
        if (!check_order()) return out_;
        check_operands();
        check_overwrites();
        check_capacity();
        check_coverage();
        return out_;
    }

private:
    const CommandStream& s_;
    const ArchConfig& cfg_;
    std::vector<Violation> out_;
    std::vector<std::uint32_t> stamp_;
    std::uint32_t epoch_ = 0;
    std::map<int, const LayerTiling*> tiling_;

    void fail(char rule, std::int64_t id, std::string msg) { out_.push_back({rule, id, std::move(msg)}); }

    const Command& at(std::int64_t id) const { return s_.commands[static_cast<std::size_t>(id)]; }

    // True when every id in `want` is reachable backwards from `from`.
    bool all_ancestors(std::int64_t from, const std::vector<std::int64_t>& want) {
        if (want.empty()) return true;
        const std::int64_t floor = *std::min_element(want.begin(), want.end());
        std::set<std::int64_t> missing(want.begin(), want.end());
        ++epoch_;
        std::vector<std::int64_t> stack{from};
        while (!stack.empty() && !missing.empty()) {
            const std::int64_t id = stack.back();
            stack.pop_back();
            for (std::int64_t dep : at(id).depends_on) {
                if (dep < floor || stamp_[static_cast<std::size_t>(dep)] == epoch_) continue;
                stamp_[static_cast<std::size_t>(dep)] = epoch_;
                missing.erase(dep);
                stack.push_back(dep);
            }
        }
        return missing.empty();
    }

    // (a) ids are positions and dependencies point backwards, so the stream is
    // both acyclic and already in topological order.
    bool check_order() {
        bool ok = true;
        for (std::size_t i = 0; i < s_.commands.size(); ++i) {
            const Command& c = s_.commands[i];
            if (c.id != static_cast<std::int64_t>(i)) {
                fail('a', c.id, "command id " + std::to_string(c.id) + " at position " + std::to_string(i));
                ok = false;
                continue;
            }
            for (std::int64_t d : c.depends_on)
                if (d < 0 || d >= c.id) {
                    fail('a', c.id, "dependency " + std::to_string(d) + " is not an earlier command");
                    ok = false;
                }
        }
        for (const auto& t : s_.meta.tiling) tiling_[t.layer] = &t;
        return ok;
    }

    // (b) each run reads the most recent load into its W and A slots, and
    // depends on both directly.
    void check_operands() {
        std::int64_t last_w[2] = {-1, -1};
        std::int64_t last_a[2] = {-1, -1};
        for (const Command& c : s_.commands) {
            const int slot = static_cast<int>(c.buffer);
            if (c.kind == CommandKind::load_weights) last_w[slot] = c.id;
            if (c.kind == CommandKind::load_activations) last_a[slot] = c.id;
            if (c.kind != CommandKind::run_ce) continue;
            std::int64_t w = -1, a = -1;
            for (std::int64_t d : c.depends_on) {
                const Command& dc = at(d);
                if (dc.layer != c.layer) continue;
                if (dc.kind == CommandKind::load_weights && dc.in_group == c.in_group && dc.out_group == c.out_group)
                    w = d;
                if (dc.kind == CommandKind::load_activations && dc.in_group == c.in_group &&
                    dc.time_chunk == c.time_chunk && (dc.out_group == c.out_group || dc.out_group == -1))
                    a = d;
            }
            if (w < 0) {
                fail('b', c.id, "run has no direct dependency on its weight tile");
            } else if (last_w[slot] != w) {
                fail('b', c.id, "weight slot " + std::string(to_string(c.buffer)) + " was overwritten by command " +
                                    std::to_string(last_w[slot]) + " before the run");
            }
            if (a < 0) {
                fail('b', c.id, "run has no direct dependency on its activation window");
            } else if (last_a[static_cast<int>(at(a).buffer)] != a) {
                fail('b', c.id, "activation slot was overwritten by command " +
                                    std::to_string(last_a[static_cast<int>(at(a).buffer)]) + " before the run");
            }
        }
    }

    // (c) a load into a W or A slot must follow every run that read the slot's
    // previous contents.
    void check_overwrites() {
        std::map<std::int64_t, std::vector<std::int64_t>> readers;  // load id -> runs
        for (const Command& c : s_.commands) {
            if (c.kind != CommandKind::run_ce) continue;
            for (std::int64_t d : c.depends_on) {
                const CommandKind k = at(d).kind;
                if (k == CommandKind::load_weights || k == CommandKind::load_activations) readers[d].push_back(c.id);
            }
        }
        std::int64_t prev[2][2] = {{-1, -1}, {-1, -1}};
        for (const Command& c : s_.commands) {
            int region;
            if (c.kind == CommandKind::load_weights)
                region = 0;
            else if (c.kind == CommandKind::load_activations)
                region = 1;
            else
                continue;
            std::int64_t& p = prev[region][static_cast<int>(c.buffer)];
            if (p >= 0) {
                const auto it = readers.find(p);
                if (it != readers.end() && !all_ancestors(c.id, it->second))
                    fail('c', c.id, "overwrites slot " + std::string(to_string(c.buffer)) +
                                        " before every reader of command " + std::to_string(p) + " finished");
            }
            p = c.id;
        }
    }

    // (d) tiles fit their buffers.
    void check_capacity() {
        const ResourceEstimate est = resource_estimate(cfg_);
        const std::int64_t w_cap = est.capacities.weight_bytes / 2;
        std::int64_t pool = 0;
        for (const auto& [id, t] : tiling_) {
            if (t->in_groups != (t->in_channels + cfg_.n_cols - 1) / cfg_.n_cols ||
                t->out_groups != (t->out_channels + cfg_.n_rows - 1) / cfg_.n_rows)
                fail('d', -1, "layer " + std::to_string(id) + ": tiling does not match the array geometry");
            if (t->resident) {
                pool += t->in_groups * t->history_samples;
                if (t->out_groups * t->out_samples > kPartialRegionSamples)
                    fail('d', -1, "layer " + std::to_string(id) + ": resident partials exceed the output region");
            } else if (!t->spill_partials && t->out_samples > kPartialBufferSamples) {
                fail('d', -1, "layer " + std::to_string(id) + ": partial results exceed the partial buffer");
            }
        }
        if (pool > kResidencyPoolSamples)
            fail('d', -1, "residency pool needs " + std::to_string(pool) + " samples per port, capacity " +
                              std::to_string(kResidencyPoolSamples));

        for (const Command& c : s_.commands) {
            const auto it = tiling_.find(c.layer);
            if (it == tiling_.end()) {
                fail('d', c.id, "layer " + std::to_string(c.layer) + " has no tiling entry");
                continue;
            }
            const LayerTiling& t = *it->second;
            if (c.kind == CommandKind::load_weights && c.bytes > w_cap)
                fail('d', c.id, "weight tile of " + std::to_string(c.bytes) + " bytes exceeds " + std::to_string(w_cap));
            if (c.kind == CommandKind::load_activations) {
                const int cols = std::min(cfg_.n_cols, t.in_channels - c.in_group * cfg_.n_cols);
                const std::int64_t per_port = cols > 0 ? c.bytes / (2 * cols) : c.bytes;
                if (per_port > kActivationBufferSamples)
                    fail('d', c.id, "activation window of " + std::to_string(per_port) + " samples exceeds " +
                                        std::to_string(kActivationBufferSamples));
            }
            if ((c.kind == CommandKind::run_ce || is_store(c.kind)) && c.samples > kPartialBufferSamples &&
                !t.resident)
                fail('d', c.id, "chunk of " + std::to_string(c.samples) + " samples exceeds the partial buffer");
        }
    }

    // (e) every output tile is accumulated over all in_groups exactly once and
    // stored after its last contribution.
    void check_coverage() {
        using Key = std::tuple<int, int, int>;
        std::map<Key, std::vector<std::int64_t>> runs;
        std::map<Key, std::vector<std::int64_t>> stores;
        for (const Command& c : s_.commands) {
            const Key k{c.layer, c.out_group, c.time_chunk};
            if (c.kind == CommandKind::run_ce) runs[k].push_back(c.id);
            if (c.kind == CommandKind::store_outputs) stores[k].push_back(c.id);
        }
        for (const auto& [id, t] : tiling_) {
            for (int o = 0; o < t->out_groups; ++o)
                for (int ch = 0; ch < t->time_chunks; ++ch) {
                    const Key k{id, o, ch};
                    const std::string tag = "layer " + std::to_string(id) + " tile (o=" + std::to_string(o) +
                                            ", chunk=" + std::to_string(ch) + ")";
                    const auto& r = runs[k];
                    std::vector<int> gs;
                    for (std::int64_t rid : r) gs.push_back(at(rid).in_group);
                    std::sort(gs.begin(), gs.end());
                    bool complete = static_cast<int>(gs.size()) == t->in_groups;
                    for (std::size_t i = 0; complete && i < gs.size(); ++i) complete = gs[i] == static_cast<int>(i);
                    if (!complete)
                        fail('e', r.empty() ? -1 : r.front(),
                             tag + ": runs cover " + std::to_string(gs.size()) + " of " +
                                 std::to_string(t->in_groups) + " in_groups exactly once");
                    const auto& st = stores[k];
                    if (st.size() != 1) {
                        fail('e', st.empty() ? -1 : st.front(),
                             tag + ": " + std::to_string(st.size()) + " store_outputs commands");
                        continue;
                    }
                    if (!all_ancestors(st.front(), r))
                        fail('e', st.front(), tag + ": stored before all of its runs completed");
                }
        }
        for (const auto& [k, r] : runs)
            if (!tiling_.count(std::get<0>(k))) fail('e', r.front(), "run for a layer without tiling");
    }
};

}  // namespace

std::vector<Violation> verify_schedule(const CommandStream& stream, const ArchConfig& cfg) {
    return Checker(stream, cfg).run();
}

}  // namespace tcnacc
