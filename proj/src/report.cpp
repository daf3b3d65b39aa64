#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "tcnacc/perf.hpp"

namespace tcnacc {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// JSON numbers carry the same fixed decimals as the CSV columns.
ordered_json fixed_json(double v, int decimals) { return ordered_json::parse(fixed(v, decimals)); }

constexpr const char* kLayerHeader =
    "layer,type,start_cycle,finish_cycle,makespan_cycles,ce_busy_cycles,dma_in_cycles,dma_out_cycles,"
    "bytes_in,bytes_out,macs,time_ms,achieved_gops,efficiency\n";

void counters_csv(std::ostream& o, const Counters& c) {
    o << c.makespan_cycles << ',' << c.ce_busy_cycles << ',' << c.dma_in_cycles << ',' << c.dma_out_cycles << ','
      << c.bytes_in << ',' << c.bytes_out << ',' << c.macs << ',' << fixed(c.time_ms, 6) << ','
      << fixed(c.achieved_gops, 3) << ',' << fixed(c.efficiency, 4);
}

ordered_json counters_json(const Counters& c) {
    ordered_json j;
    j["makespan_cycles"] = c.makespan_cycles;
    j["ce_busy_cycles"] = c.ce_busy_cycles;
    j["dma_in_cycles"] = c.dma_in_cycles;
    j["dma_out_cycles"] = c.dma_out_cycles;
    j["bytes_in"] = c.bytes_in;
    j["bytes_out"] = c.bytes_out;
    j["macs"] = c.macs;
    j["time_ms"] = fixed_json(c.time_ms, 6);
    j["achieved_gops"] = fixed_json(c.achieved_gops, 3);
    j["efficiency"] = fixed_json(c.efficiency, 4);
    return j;
}

ordered_json roofline_to_json(const RooflinePoint& p) {
    ordered_json j;
    j["batch"] = p.batch;
    j["operational_intensity"] = fixed_json(p.operational_intensity, 4);
    j["attainable_gops"] = fixed_json(p.attainable_gops, 3);
    j["achieved_gops"] = fixed_json(p.achieved_gops, 3);
    j["peak_gops"] = fixed_json(p.peak_gops, 3);
    j["region"] = p.bandwidth_limited ? "bandwidth" : "compute";
    return j;
}

ordered_json report_to_json(const SimReport& r) {
    ordered_json j;
    j["net"] = r.net;
    j["n_rows"] = r.cfg.n_rows;
    j["n_cols"] = r.cfg.n_cols;
    j["freq_mhz"] = fixed_json(r.timing.freq_mhz, 3);
    j["batch"] = r.batch;
    j["policy"] = to_string(r.policy);
    j["timing"] = {{"bw_in", fixed_json(r.timing.bw_in, 3)},
                   {"bw_out", fixed_json(r.timing.bw_out, 3)},
                   {"dma_latency_cycles", r.timing.dma_latency_cycles},
                   {"ce_warmup_cycles", r.timing.ce_warmup_cycles}};
    j["peak_gops"] = fixed_json(r.peak_gops, 3);
    ordered_json layers = ordered_json::array();
    for (const auto& l : r.layers) {
        ordered_json lj;
        lj["layer"] = l.layer;
        lj["type"] = l.type;
        lj["start_cycle"] = l.start_cycle;
        lj["finish_cycle"] = l.finish_cycle;
        lj.update(counters_json(l.counters));
        layers.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers);
    j["total"] = counters_json(r.total);
    j["roofline"] = roofline_to_json(r.roofline);
    j["warnings"] = r.warnings;
    return j;
}

}  // namespace

std::string report_csv(const SimReport& r) {
    std::ostringstream o;
    o << kLayerHeader;
    for (const auto& l : r.layers) {
        o << l.layer << ',' << l.type << ',' << l.start_cycle << ',' << l.finish_cycle << ',';
        counters_csv(o, l.counters);
        o << '\n';
    }
    o << "total,,0," << r.total.makespan_cycles << ',';
    counters_csv(o, r.total);
    o << '\n';
    return o.str();
}

std::string report_json(const SimReport& r) { return report_to_json(r).dump(2) + "\n"; }

std::string sweep_csv(const std::vector<SweepPoint>& sweep) {
    std::ostringstream o;
    o << "batch,status,makespan_cycles,time_per_execution_ms,time_per_sample_ms,efficiency,max_layer_efficiency,"
         "bytes_in,bytes_out,operational_intensity,attainable_gops,achieved_gops,real_time,error\n";
    for (const auto& p : sweep) {
        o << p.batch << ',';
        if (!p.report) {
            o << "error,,,,,,,,,,,,\"" << p.error << "\"\n";
            continue;
        }
        const SimReport& r = *p.report;
        o << "ok," << r.total.makespan_cycles << ',' << fixed(p.time_per_execution_ms, 6) << ','
          << fixed(p.time_per_sample_ms, 6) << ',' << fixed(r.total.efficiency, 4) << ','
          << fixed(r.max_layer_efficiency(), 4) << ',' << r.total.bytes_in << ',' << r.total.bytes_out << ','
          << fixed(r.roofline.operational_intensity, 4) << ',' << fixed(r.roofline.attainable_gops, 3) << ','
          << fixed(r.roofline.achieved_gops, 3) << ',';
        if (p.real_time) o << (*p.real_time ? "PASS" : "FAIL");
        o << ",\n";
    }
    return o.str();
}

std::string sweep_json(const std::vector<SweepPoint>& sweep) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : sweep) {
        ordered_json j;
        j["batch"] = p.batch;
        if (!p.report) {
            j["status"] = "error";
            j["error"] = p.error;
        } else {
            j["status"] = "ok";
            j["time_per_execution_ms"] = fixed_json(p.time_per_execution_ms, 6);
            j["time_per_sample_ms"] = fixed_json(p.time_per_sample_ms, 6);
            if (p.real_time) j["real_time"] = *p.real_time ? "PASS" : "FAIL";
            j["report"] = report_to_json(*p.report);
        }
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::string roofline_csv(const std::vector<RooflinePoint>& points) {
    std::ostringstream o;
    o << "batch,operational_intensity,attainable_gops,achieved_gops,peak_gops,region\n";
    for (const auto& p : points)
        o << p.batch << ',' << fixed(p.operational_intensity, 4) << ',' << fixed(p.attainable_gops, 3) << ','
          << fixed(p.achieved_gops, 3) << ',' << fixed(p.peak_gops, 3) << ','
          << (p.bandwidth_limited ? "bandwidth" : "compute") << '\n';
    return o.str();
}

std::string roofline_json(const std::vector<RooflinePoint>& points) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : points) arr.push_back(roofline_to_json(p));
    return arr.dump(2) + "\n";
}

}  // namespace tcnacc
