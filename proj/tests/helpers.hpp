#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tcnacc/arch.hpp"
#include "tcnacc/network.hpp"
#include "tcnacc/perf.hpp"
#include "tcnacc/scheduler.hpp"

namespace testutil {

inline std::string data(const std::string& name) { return std::string(TCNACC_DATA_DIR) + "/" + name; }

inline tcnacc::LayerDef layer(int id, int in, int out, int k, int d = 1, int s = 1) {
    tcnacc::LayerDef l;
    l.id = id;
    l.in_channels = in;
    l.out_channels = out;
    l.k = k;
    l.d = d;
    l.stride = s;
    l.requant_shift = 8;
    return l;
}

// Builds a chain where each layer feeds the next.
inline tcnacc::NetworkDef chain(const std::vector<tcnacc::LayerDef>& layers, const std::string& name = "toy") {
    tcnacc::NetworkDef n;
    n.name = name;
    n.input_channels = layers.empty() ? 1 : layers.front().in_channels;
    n.layers = layers;
    return n;
}

inline int pick(std::mt19937_64& rng, int lo, int hi) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Random small chain: up to `max_layers` layers, optional strides and
// residual edges where shapes allow.
inline tcnacc::NetworkDef random_net(std::mt19937_64& rng, int max_layers, int max_k, int max_d, int max_ch,
                                     bool strides, bool residuals) {
    std::vector<tcnacc::LayerDef> ls;
    const int n = pick(rng, 1, max_layers);
    int ch = pick(rng, 1, max_ch);
    for (int i = 0; i < n; ++i) {
        const int out = pick(rng, 1, max_ch);
        auto l = layer(i, ch, out, pick(rng, 1, max_k), pick(rng, 1, max_d), strides ? pick(rng, 1, 3) : 1);
        l.requant_shift = pick(rng, 0, 10);
        l.activation = rng() % 2 ? tcnacc::Activation::relu : tcnacc::Activation::none;
        ls.push_back(l);
        ch = out;
    }
    if (residuals) {
        // A 1x1 stride-1 layer after a layer with equal channels can add it.
        for (std::size_t i = 1; i < ls.size(); ++i) {
            auto& l = ls[i];
            if (l.k == 1 && l.stride == 1 && l.in_channels == l.out_channels && rng() % 2)
                l.residual_from = ls[i - 1].id;
        }
    }
    return chain(ls);
}

struct SmallCase {
    tcnacc::CommandStream stream;
    tcnacc::TimingModel timing;
};

// A compiled stream of at most `max_commands` commands from a random tiny
// net, array and timing model.
inline SmallCase random_small_stream(std::mt19937_64& rng, std::size_t max_commands) {
    for (;;) {
        auto net = random_net(rng, 2, 3, 2, 4, false, true);
        const tcnacc::ArchConfig cfg{pick(rng, 1, 2), pick(rng, 1, 2), 100.0};
        const auto plan = tcnacc::plan_stream(net, pick(rng, 1, 3));
        const auto policy = rng() % 2 ? tcnacc::Policy::resident : tcnacc::Policy::stream;
        auto s = tcnacc::schedule(net, cfg, plan, policy);
        if (s.commands.size() > max_commands) continue;
        tcnacc::TimingModel t;
        const double bws[] = {1.0, 2.0, 4.0, 8.0};
        t.bw_in = bws[rng() % 4];
        t.bw_out = bws[rng() % 4];
        t.dma_latency_cycles = pick(rng, 0, 8);
        t.ce_warmup_cycles = pick(rng, 0, 4);
        return {std::move(s), t};
    }
}

}  // namespace testutil
