#include "tcnacc/arch.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tcnacc/error.hpp"

namespace tcnacc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ResourceEstimate resource_estimate(const ArchConfig& cfg) {
    ResourceEstimate r;
    const int sops = cfg.sops();
    r.dsps = sops * ArchConfig::lanes;
    r.ramb18 = sops + cfg.n_cols * kActivationRamb18PerCol + cfg.n_rows * kOutputRamb18PerRow + 32;
    r.peak_ops_per_cycle = static_cast<std::int64_t>(r.dsps) * 2;
    r.peak_gops = static_cast<double>(r.peak_ops_per_cycle) * cfg.freq_mhz / 1000.0;
    r.capacities.weight_bytes = sops * kRamb18Bytes;
    r.capacities.activation_bytes = static_cast<std::int64_t>(cfg.n_cols) * kActivationRamb18PerCol * kRamb18Bytes;
    r.capacities.output_partial_bytes = static_cast<std::int64_t>(cfg.n_rows) * kOutputRamb18PerRow * kRamb18Bytes;
    return r;
}

Feasibility is_feasible(const ArchConfig& cfg, const DeviceSpec& dev) {
    const ResourceEstimate r = resource_estimate(cfg);
    Feasibility f;
    if (r.dsps > dev.dsp_total)
        f.reasons.push_back("DSP " + std::to_string(r.dsps) + " > " + std::to_string(dev.dsp_total));
    if (r.ramb18 > dev.ramb18_total)
        f.reasons.push_back("RAMB18 " + std::to_string(r.ramb18) + " > " + std::to_string(dev.ramb18_total));
    if (cfg.freq_mhz > dev.max_freq_mhz) {
        std::ostringstream ss;
        ss << "frequency " << cfg.freq_mhz << " MHz > " << dev.max_freq_mhz << " MHz";
        f.reasons.push_back(ss.str());
    }
    f.feasible = f.reasons.empty();
    return f;
}

DseResult dse_grid_search(const DeviceSpec& dev, IntRange rows, IntRange cols) {
    if (rows.empty() || cols.empty()) throw_input("design-space ranges must be non-empty");
    if (rows.lo < 1 || cols.lo < 1) throw_input("design-space ranges must start at 1 or more");
    DseResult res;
    for (int r = rows.lo; r <= rows.hi; ++r)
        for (int c = cols.lo; c <= cols.hi; ++c) {
            GridPoint p;
            p.cfg = ArchConfig{r, c, dev.max_freq_mhz};
            p.estimate = resource_estimate(p.cfg);
            p.feasibility = is_feasible(p.cfg, dev);
            res.grid.push_back(p);
        }
    for (const auto& p : res.grid)
        if (p.feasibility.feasible) res.ranked.push_back(p);
    std::sort(res.ranked.begin(), res.ranked.end(), [](const GridPoint& a, const GridPoint& b) {
        if (a.cfg.sops() != b.cfg.sops()) return a.cfg.sops() > b.cfg.sops();
        if (a.estimate.ramb18 != b.estimate.ramb18) return a.estimate.ramb18 < b.estimate.ramb18;
        if (a.cfg.n_rows != b.cfg.n_rows) return a.cfg.n_rows < b.cfg.n_rows;
        return a.cfg.n_cols < b.cfg.n_cols;
    });
    return res;
}

namespace {

json parse_doc(std::string_view text, const char* what) {
    try {
        json doc = json::parse(text.begin(), text.end());
        if (!doc.is_object()) throw_input(std::string(what) + " must be a JSON object");
        return doc;
    } catch (const json::parse_error& e) {
        throw_input(std::string(what) + ": " + e.what());
    }
}

template <typename T>
T field(const json& doc, const char* key, const char* what) {
    auto it = doc.find(key);
    if (it == doc.end()) throw_input(std::string(what) + ": missing field '" + key + "'");
    try {
        if constexpr (std::is_integral_v<T>) {
            if (!it->is_number_integer()) throw_input(std::string(what) + "." + key + ": expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!it->is_number()) throw_input(std::string(what) + "." + key + ": expected a number");
        }
        return it->get<T>();
    } catch (const json::exception& e) {
        throw_input(std::string(what) + "." + key + ": " + e.what());
    }
}

std::string slurp(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_input(std::string("cannot open ") + what + " '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

DeviceSpec parse_device(std::string_view text) {
    const json doc = parse_doc(text, "device");
    DeviceSpec d;
    d.name = field<std::string>(doc, "name", "device");
    d.dsp_total = field<int>(doc, "dsp_total", "device");
    d.ramb18_total = field<int>(doc, "ramb18_total", "device");
    d.max_freq_mhz = field<double>(doc, "max_freq_mhz", "device");
    if (doc.contains("bw_in_Bpc")) d.bw_in_bytes_per_cycle = field<double>(doc, "bw_in_Bpc", "device");
    if (doc.contains("bw_out_Bpc")) d.bw_out_bytes_per_cycle = field<double>(doc, "bw_out_Bpc", "device");
    if (doc.contains("dma_latency_cycles")) d.dma_latency_cycles = field<int>(doc, "dma_latency_cycles", "device");
    if (d.dsp_total < 0 || d.ramb18_total < 0) throw_input("device: resource counts must be non-negative");
    if (!(d.max_freq_mhz > 0) || !(d.bw_in_bytes_per_cycle > 0) || !(d.bw_out_bytes_per_cycle > 0))
        throw_input("device: frequency and bandwidths must be positive");
    if (d.dma_latency_cycles < 0) throw_input("device: dma_latency_cycles must be >= 0");
    return d;
}

DeviceSpec load_device(const std::filesystem::path& path) {
    try {
        return parse_device(slurp(path, "device file"));
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string serialize_device(const DeviceSpec& d) {
    ordered_json j;
    j["name"] = d.name;
    j["dsp_total"] = d.dsp_total;
    j["ramb18_total"] = d.ramb18_total;
    j["max_freq_mhz"] = d.max_freq_mhz;
    j["bw_in_Bpc"] = d.bw_in_bytes_per_cycle;
    j["bw_out_Bpc"] = d.bw_out_bytes_per_cycle;
    j["dma_latency_cycles"] = d.dma_latency_cycles;
    return j.dump(2) + "\n";
}

void validate_arch(const ArchConfig& cfg) {
    if (cfg.n_rows < 1 || cfg.n_cols < 1) throw_input("arch: n_rows and n_cols must be >= 1");
    if (!(cfg.freq_mhz > 0)) throw_input("arch: freq_mhz must be positive");
}

ArchConfig parse_arch(std::string_view text) {
    const json doc = parse_doc(text, "arch");
    ArchConfig cfg;
    cfg.n_rows = field<int>(doc, "n_rows", "arch");
    cfg.n_cols = field<int>(doc, "n_cols", "arch");
    cfg.freq_mhz = field<double>(doc, "freq_mhz", "arch");
    validate_arch(cfg);
    return cfg;
}

ArchConfig load_arch(const std::filesystem::path& path) {
    try {
        return parse_arch(slurp(path, "arch file"));
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string serialize_arch(const ArchConfig& cfg) {
    ordered_json j;
    j["n_rows"] = cfg.n_rows;
    j["n_cols"] = cfg.n_cols;
    j["freq_mhz"] = cfg.freq_mhz;
    return j.dump(2) + "\n";
}

}  // namespace tcnacc
