#include "tcnacc/memory.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "tcnacc/error.hpp"

namespace tcnacc {

int bank_of(std::int64_t index, const BankLayout& layout) {
    if (index < 0) throw_input("sample index must be non-negative");
    if (layout.banks < 1) throw_input("bank layout needs at least one bank");
    return static_cast<int>(index % layout.banks);
}

std::vector<Conflict> detect_conflicts(const FetchPattern& p, const BankLayout& layout, PortMode mode) {
    if (p.lanes < 1 || p.stride < 1) throw_input("fetch pattern needs lanes >= 1 and stride >= 1");
    const int ports = static_cast<int>(mode);
    std::vector<Conflict> out;
    for (std::size_t cyc = 0; cyc < p.cycle_offsets.size(); ++cyc) {
        std::map<int, std::vector<int>> by_bank;
        for (int lane = 0; lane < p.lanes; ++lane) {
            const std::int64_t addr = p.start_index + static_cast<std::int64_t>(lane) * p.stride + p.cycle_offsets[cyc];
            by_bank[bank_of(addr, layout)].push_back(lane);
        }
        for (auto& [bank, lanes] : by_bank)
            if (static_cast<int>(lanes.size()) > ports) out.push_back({static_cast<int>(cyc), bank, lanes});
    }
    return out;
}

std::string conflicts_to_json(const std::vector<Conflict>& conflicts) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& c : conflicts) {
        nlohmann::ordered_json j;
        j["cycle"] = c.cycle;
        j["bank"] = c.bank;
        j["lane_list"] = c.lanes;
        arr.push_back(std::move(j));
    }
    return arr.dump();
}

int min_banks(int stride, int lanes, PortMode mode) {
    if (stride < 1 || lanes < 1) throw_input("min_banks needs stride >= 1 and lanes >= 1");
    for (int banks = 1;; banks *= 2) {
        bool clean = true;
        for (int s = 1; s <= stride && clean; ++s)
            for (int start = 0; start < banks && clean; ++start) {
                FetchPattern p;
                p.start_index = start;
                p.stride = s;
                p.lanes = lanes;
                clean = detect_conflicts(p, BankLayout{banks}, mode).empty();
            }
        if (clean) return banks;
    }
}

FitReport tile_fit(const ArchConfig& cfg, const LayerDef& layer, std::int64_t in_samples, std::int64_t out_samples) {
    const ResourceEstimate est = resource_estimate(cfg);
    FitReport r;
    r.weight_buffer_bytes = est.capacities.weight_bytes / 2;
    r.activation_buffer_bytes = cfg.n_cols * kActivationBufferSamples * 2;
    r.partial_buffer_bytes = cfg.n_rows * kPartialBufferSamples * 2;
    r.weight_tile_bytes = static_cast<std::int64_t>(cfg.n_rows) * cfg.n_cols * layer.k * 2;
    r.activation_tile_bytes = cfg.n_cols * in_samples * 2;
    r.partial_tile_bytes = cfg.n_rows * out_samples * 2;

    const std::string tag = "layer " + std::to_string(layer.id);
    if (r.weight_tile_bytes > r.weight_buffer_bytes)
        throw_infeasible(tag + ": weight tile of " + std::to_string(r.weight_tile_bytes) +
                         " bytes exceeds the weight buffer (" + std::to_string(r.weight_buffer_bytes) + " bytes)");
    const std::int64_t rf = local_receptive_field(layer);
    if (rf > kActivationBufferSamples)
        throw_infeasible(tag + ": RF_local window of " + std::to_string(rf) +
                         " samples exceeds the activation buffer depth of " +
                         std::to_string(kActivationBufferSamples));

    // Largest chunk whose window fits one activation buffer.
    const std::int64_t by_window = (kActivationBufferSamples - rf) / layer.stride + 1;
    const bool window_fits = in_samples <= kActivationBufferSamples;
    const bool partial_fits = out_samples <= kPartialBufferSamples;
    r.fits = window_fits && partial_fits;
    if (window_fits) {
        r.max_chunk = out_samples;
    } else {
        std::int64_t c = std::min<std::int64_t>(by_window, 4);
        while (c * 2 <= by_window) c *= 2;
        r.max_chunk = c;
        r.reason = "window of " + std::to_string(in_samples) + " samples exceeds the " +
                   std::to_string(kActivationBufferSamples) + "-sample activation buffer";
    }
    if (!partial_fits) {
        if (!r.reason.empty()) r.reason += "; ";
        r.reason += "partial results of " + std::to_string(out_samples) + " samples exceed the " +
                    std::to_string(kPartialBufferSamples) + "-sample partial buffer";
    }
    return r;
}

}  // namespace tcnacc
