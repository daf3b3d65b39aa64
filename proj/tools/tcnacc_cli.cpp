// tcnacc: design-space exploration, scheduling, simulation and inference for
// TCN accelerator models.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "tcnacc/arch.hpp"
#include "tcnacc/error.hpp"
#include "tcnacc/memory.hpp"
#include "tcnacc/network.hpp"
#include "tcnacc/perf.hpp"
#include "tcnacc/qconv.hpp"
#include "tcnacc/scheduler.hpp"

namespace fs = std::filesystem;
using namespace tcnacc;

namespace {

enum class Format { csv, json };

struct Common {
    std::string net;
    std::string device;
    std::string arch;
    int rows = 0;
    int cols = 0;
    double freq = 0.0;
    std::vector<std::int64_t> batches;
    std::string policy = "stream";
    std::vector<std::string> overrides;
    std::string out;
    Format format = Format::csv;
};

// Files are staged and renamed only once every output has been produced.
class Outputs {
public:
    explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    void commit(std::ostream& console) const {
        if (dir_.empty()) {
            for (const auto& [name, content] : files_) console << content;
            return;
        }
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw_input("cannot create output directory '" + dir_ + "': " + ec.message());
        std::vector<std::pair<fs::path, fs::path>> staged;
        for (const auto& [name, content] : files_) {
            const fs::path final_path = fs::path(dir_) / name;
            fs::path tmp = final_path;
            tmp += ".tmp";
            std::ofstream f(tmp, std::ios::binary);
            f << content;
            if (!f) {
                for (const auto& s : staged) fs::remove(s.first, ec);
                fs::remove(tmp, ec);
                throw_input("cannot write '" + final_path.string() + "'");
            }
            staged.emplace_back(tmp, final_path);
        }
        for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
    }

private:
    std::string dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

void add_arch_options(CLI::App* app, Common& c) {
    app->add_option("--arch", c.arch, "Architecture file {n_rows, n_cols, freq_mhz}");
    app->add_option("--rows", c.rows, "MAC matrix rows (output-feature ports)");
    app->add_option("--cols", c.cols, "MAC matrix columns (input-feature ports)");
    app->add_option("--freq", c.freq, "Clock in MHz (defaults to the device maximum)");
}

void add_batch_option(CLI::App* app, Common& c, bool required) {
    auto* o = app->add_option("--batch", c.batches, "Batch sizes, comma separated")->delimiter(',');
    if (required) o->required();
}

void add_format_options(CLI::App* app, Common& c) {
    app->add_option("--out", c.out, "Output directory (stdout when omitted)");
    const std::map<std::string, Format> formats{{"csv", Format::csv}, {"json", Format::json}};
    app->add_option("--format", c.format, "csv or json")->transform(CLI::CheckedTransformer(formats, CLI::ignore_case));
}

DeviceSpec require_device(const Common& c) {
    if (c.device.empty()) throw_input("--device is required");
    return load_device(c.device);
}

ArchConfig resolve_arch(const Common& c, const std::optional<DeviceSpec>& dev) {
    if (!c.arch.empty()) {
        if (c.rows || c.cols) throw_input("use either --arch or --rows/--cols, not both");
        ArchConfig cfg = load_arch(c.arch);
        if (c.freq > 0) cfg.freq_mhz = c.freq;
        return cfg;
    }
    if (!c.rows || !c.cols) throw_input("an architecture is required: --arch FILE or --rows N --cols M");
    ArchConfig cfg{c.rows, c.cols, c.freq};
    if (!(c.freq > 0)) {
        if (!dev) throw_input("--freq is required without --device");
        cfg.freq_mhz = dev->max_freq_mhz;
    }
    validate_arch(cfg);
    return cfg;
}

void check_batches(const std::vector<std::int64_t>& batches) {
    if (batches.empty()) throw_input("--batch needs at least one value");
    for (auto b : batches)
        if (b < 1) throw_input("batch size must be >= 1 (got " + std::to_string(b) + ")");
}

void check_fits(const ArchConfig& cfg, const DeviceSpec& dev) {
    const Feasibility f = is_feasible(cfg, dev);
    if (f.feasible) return;
    std::string why;
    for (const auto& r : f.reasons) why += (why.empty() ? "" : "; ") + r;
    throw_infeasible("configuration " + std::to_string(cfg.n_rows) + "x" + std::to_string(cfg.n_cols) +
                     " does not fit " + dev.name + ": " + why);
}

TimingModel timing_for(const Common& c, const DeviceSpec& dev, const ArchConfig& cfg) {
    TimingModel t = TimingModel::from(dev, cfg);
    for (const auto& o : c.overrides) t.apply_override(o);
    return t;
}

std::string fmt(double v, int decimals) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(decimals);
    ss << v;
    return ss.str();
}

IntRange parse_range(const std::string& s, const char* what) {
    IntRange r;
    const auto sep = s.find("..");
    try {
        std::size_t used = 0;
        if (sep == std::string::npos) {
            r.lo = r.hi = std::stoi(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
        } else {
            const std::string a = s.substr(0, sep), b = s.substr(sep + 2);
            r.lo = std::stoi(a, &used);
            if (used != a.size()) throw std::invalid_argument(s);
            r.hi = std::stoi(b, &used);
            if (used != b.size()) throw std::invalid_argument(s);
        }
    } catch (const std::exception&) {
        throw_input(std::string(what) + ": expected N or LO..HI, got '" + s + "'");
    }
    if (r.empty()) throw_input(std::string(what) + ": empty range '" + s + "'");
    return r;
}

// ---- subcommands ---------------------------------------------------------

int cmd_dse(const Common& c, const std::string& rows_s, const std::string& cols_s, int top_k) {
    const DeviceSpec dev = require_device(c);
    const DseResult res = dse_grid_search(dev, parse_range(rows_s, "--row-range"), parse_range(cols_s, "--col-range"));
    Outputs out(c.out);
    if (c.format == Format::csv) {
        std::ostringstream g;
        g << "n_rows,n_cols,sops,dsp,ramb18,peak_gops,feasible,reasons\n";
        for (const auto& p : res.grid) {
            std::string why;
            for (const auto& r : p.feasibility.reasons) why += (why.empty() ? "" : "; ") + r;
            g << p.cfg.n_rows << ',' << p.cfg.n_cols << ',' << p.cfg.sops() << ',' << p.estimate.dsps << ','
              << p.estimate.ramb18 << ',' << fmt(p.estimate.peak_gops, 3) << ','
              << (p.feasibility.feasible ? "yes" : "no") << ",\"" << why << "\"\n";
        }
        std::ostringstream r;
        r << "rank,n_rows,n_cols,sops,dsp,ramb18,peak_gops\n";
        for (std::size_t i = 0; i < res.ranked.size() && static_cast<int>(i) < top_k; ++i) {
            const auto& p = res.ranked[i];
            r << i + 1 << ',' << p.cfg.n_rows << ',' << p.cfg.n_cols << ',' << p.cfg.sops() << ',' << p.estimate.dsps
              << ',' << p.estimate.ramb18 << ',' << fmt(p.estimate.peak_gops, 3) << '\n';
        }
        out.add("dse_grid.csv", g.str());
        out.add("dse_ranked.csv", r.str());
    } else {
        nlohmann::ordered_json j;
        j["device"] = dev.name;
        auto point = [](const GridPoint& p) {
            nlohmann::ordered_json e;
            e["n_rows"] = p.cfg.n_rows;
            e["n_cols"] = p.cfg.n_cols;
            e["sops"] = p.cfg.sops();
            e["dsp"] = p.estimate.dsps;
            e["ramb18"] = p.estimate.ramb18;
            e["peak_gops"] = nlohmann::ordered_json::parse(fmt(p.estimate.peak_gops, 3));
            e["feasible"] = p.feasibility.feasible;
            e["reasons"] = p.feasibility.reasons;
            return e;
        };
        j["grid"] = nlohmann::ordered_json::array();
        for (const auto& p : res.grid) j["grid"].push_back(point(p));
        j["ranked"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < res.ranked.size() && static_cast<int>(i) < top_k; ++i)
            j["ranked"].push_back(point(res.ranked[i]));
        out.add("dse.json", j.dump(2) + "\n");
    }
    out.commit(std::cout);
    if (res.ranked.empty()) {
        std::cerr << "no feasible configuration on " << dev.name << "\n";
        return 2;
    }
    if (!c.out.empty()) {
        const auto& best = res.ranked.front();
        std::cerr << "best on " << dev.name << ": " << best.cfg.n_rows << "x" << best.cfg.n_cols << " ("
                  << best.cfg.sops() << " SoPs, " << best.estimate.dsps << " DSP, " << best.estimate.ramb18
                  << " RAMB18)\n";
    }
    return 0;
}

void print_residency(const NetworkDef& net, const CommandStream& s, std::ostream& os) {
    std::map<std::string, std::pair<int, int>> by_type;  // type -> (resident, total)
    std::vector<std::string> order;
    for (const auto& t : s.meta.tiling) {
        const LayerDef& l = net.layers[net.index_of(t.layer)];
        if (local_receptive_field(l) <= 1) continue;
        const std::string type = l.type.empty() ? "layer" + std::to_string(l.id) : l.type;
        if (!by_type.count(type)) order.push_back(type);
        auto& e = by_type[type];
        e.first += t.resident ? 1 : 0;
        e.second += 1;
    }
    os << "residency map (layers with RF_local > 1):\n";
    std::string streamed;
    for (const auto& type : order) {
        const auto& [r, n] = by_type[type];
        os << "  " << type << ": " << r << "/" << n << " resident\n";
        if (r < n) streamed += (streamed.empty() ? "" : ", ") + type;
    }
    os << "non-resident types: " << (streamed.empty() ? "none" : streamed) << "\n";
}

int cmd_schedule(const Common& c) {
    if (c.net.empty()) throw_input("--net is required");
    const NetworkDef net = load_network(c.net);
    std::optional<DeviceSpec> dev;
    if (!c.device.empty()) dev = load_device(c.device);
    const ArchConfig cfg = resolve_arch(c, dev);
    if (dev) check_fits(cfg, *dev);
    check_batches(c.batches);
    if (c.batches.size() != 1) throw_input("schedule takes a single --batch value");
    const Policy policy = policy_from(c.policy);
    const StreamPlan plan = plan_stream(net, c.batches.front());
    const CommandStream stream = schedule(net, cfg, plan, policy);
    const auto violations = verify_schedule(stream, cfg);
    const StreamTraffic traffic = summarize(stream);

    Outputs out(c.out);
    const std::string name = "stream_B" + std::to_string(plan.batch) + ".jsonl";
    out.add(name, serialize_stream(stream));
    std::ostream& info = c.out.empty() ? std::cerr : std::cout;
    if (violations.empty()) out.commit(std::cout);

    info << net.name << " on " << cfg.n_rows << "x" << cfg.n_cols << ", B=" << plan.batch << ", policy "
         << to_string(policy) << ": " << stream.commands.size() << " commands\n";
    info << "weight bytes " << traffic.total.weight_bytes << " (footprint "
         << memory_footprint(net, plan).weights_bytes << "), activation bytes " << traffic.total.activation_bytes
         << ", output bytes " << traffic.total.output_bytes << "\n";
    if (policy == Policy::resident) print_residency(net, stream, info);
    for (const auto& t : stream.meta.tiling)
        if (t.spill_partials) info << "layer " << t.layer << ": partial results spill to external memory\n";
    if (!violations.empty()) {
        for (const auto& v : violations)
            std::cerr << "violation (" << v.rule << ") at command " << v.command << ": " << v.message << "\n";
        return 2;
    }
    info << "verification: PASS\n";
    return 0;
}

int cmd_simulate(const Common& c) {
    if (c.net.empty()) throw_input("--net is required");
    const NetworkDef net = load_network(c.net);
    const DeviceSpec dev = require_device(c);
    const ArchConfig cfg = resolve_arch(c, dev);
    check_fits(cfg, dev);
    check_batches(c.batches);
    const TimingModel timing = timing_for(c, dev, cfg);
    const auto sweep = batch_sweep(net, cfg, c.batches, timing, policy_from(c.policy));

    Outputs out(c.out);
    if (c.format == Format::csv) {
        if (!c.out.empty())
            for (const auto& p : sweep)
                if (p.report) out.add("report_B" + std::to_string(p.batch) + ".csv", report_csv(*p.report));
        out.add("sweep.csv", sweep_csv(sweep));
    } else {
        out.add("sweep.json", sweep_json(sweep));
    }
    out.commit(std::cout);

    int rc = 0;
    for (const auto& p : sweep) {
        if (!p.report) {
            std::cerr << "B=" << p.batch << ": " << p.error << "\n";
            rc = 2;
            continue;
        }
        std::cerr << "B=" << p.batch << ": efficiency " << fmt(p.report->total.efficiency, 4) << ", "
                  << fmt(p.time_per_execution_ms, 3) << " ms per execution, " << fmt(p.time_per_sample_ms, 4)
                  << " ms per sample";
        if (p.real_time) std::cerr << ", real-time " << (*p.real_time ? "PASS" : "FAIL");
        std::cerr << "\n";
        for (const auto& w : p.report->warnings) std::cerr << "  warning: " << w << "\n";
    }
    return rc;
}

int cmd_roofline(const Common& c) {
    if (c.net.empty()) throw_input("--net is required");
    const NetworkDef net = load_network(c.net);
    const DeviceSpec dev = require_device(c);
    const ArchConfig cfg = resolve_arch(c, dev);
    check_fits(cfg, dev);
    check_batches(c.batches);
    const TimingModel timing = timing_for(c, dev, cfg);
    const auto sweep = batch_sweep(net, cfg, c.batches, timing, policy_from(c.policy));
    std::vector<RooflinePoint> pts;
    int rc = 0;
    for (const auto& p : sweep) {
        if (p.report) {
            pts.push_back(p.report->roofline);
        } else {
            std::cerr << "B=" << p.batch << ": " << p.error << "\n";
            rc = 2;
        }
    }
    Outputs out(c.out);
    if (c.format == Format::csv)
        out.add("roofline.csv", roofline_csv(pts));
    else
        out.add("roofline.json", roofline_json(pts));
    out.commit(std::cout);
    return rc;
}

int cmd_infer(const Common& c, const std::string& weights, const std::string& sidecar,
              std::optional<std::uint64_t> seed, const std::string& input, std::int64_t synthetic_len,
              const std::string& output) {
    if (c.net.empty()) throw_input("--net is required");
    const NetworkDef net = load_network(c.net);
    validate_network(net);
    check_batches(c.batches);
    if (c.batches.size() != 1) throw_input("infer takes a single --batch value");
    if (weights.empty() == !seed.has_value()) throw_input("give exactly one of --weights or --synthetic-seed");
    if (input.empty() == (synthetic_len <= 0)) throw_input("give exactly one of --input or --synthetic-input");
    if (output.empty()) throw_input("--output is required");

    const WeightSet w = seed ? synthetic_weights(net, *seed)
                             : load_weights(net, weights, sidecar.empty() ? std::nullopt
                                                                           : std::optional<fs::path>(sidecar));
    std::vector<std::int16_t> frames;
    if (!input.empty())
        frames = read_stream(input, net.input_channels);
    else
        frames = tensor_to_frames(synthetic_stream(net.input_channels, synthetic_len, seed.value_or(1) + 1));
    if (frames.empty()) std::cerr << "warning: input stream has zero frames\n";

    StreamSession session(net, w, c.batches.front());
    std::vector<std::int16_t> result = session.push(frames);
    const auto tail = session.finish();
    result.insert(result.end(), tail.begin(), tail.end());

    const fs::path out_path(output);
    fs::path tmp = out_path;
    tmp += ".tmp";
    write_stream(tmp, result);
    fs::rename(tmp, out_path);

    const int oc = net.layers.back().out_channels;
    std::cout << "frames in " << session.frames_consumed() << ", frames out "
              << static_cast<std::int64_t>(result.size()) / oc << ", executions " << session.executions()
              << ", saturations requant " << session.saturation().requant << " residual "
              << session.saturation().residual << "\n";
    return 0;
}

int cmd_validate(const Common& c, const std::string& weights, const std::string& sidecar) {
    if (c.net.empty() && c.device.empty() && c.arch.empty()) throw_input("nothing to validate: give --net, --device or --arch");
    std::optional<DeviceSpec> dev;
    if (!c.device.empty()) {
        dev = load_device(c.device);
        std::cout << "device " << dev->name << ": " << dev->dsp_total << " DSP, " << dev->ramb18_total
                  << " RAMB18, " << dev->max_freq_mhz << " MHz: OK\n";
    }
    std::optional<ArchConfig> cfg;
    if (!c.arch.empty() || c.rows || c.cols) {
        cfg = resolve_arch(c, dev);
        const ResourceEstimate e = resource_estimate(*cfg);
        std::cout << "arch " << cfg->n_rows << "x" << cfg->n_cols << " @ " << fmt(cfg->freq_mhz, 1) << " MHz: "
                  << e.dsps << " DSP, " << e.ramb18 << " RAMB18, " << fmt(e.peak_gops, 2) << " GOPS\n";
        if (dev) check_fits(*cfg, *dev);
    }
    if (!c.net.empty()) {
        const NetworkDef net = load_network(c.net);
        validate_network(net);
        const StreamPlan plan = plan_stream(net, 1);
        const Footprint fp = memory_footprint(net, plan);
        std::cout << "network " << net.name << ": " << net.layers.size() << " layers, receptive field "
                  << receptive_field(net) << ", weights " << fp.weights_bytes << " bytes, activations at B=1 "
                  << fp.activations_bytes << " bytes: OK\n";
        if (!weights.empty()) {
            load_weights(net, weights, sidecar.empty() ? std::nullopt : std::optional<fs::path>(sidecar));
            std::cout << "weights " << weights << ": OK\n";
        }
        if (cfg) {
            for (std::size_t i = 0; i < net.layers.size(); ++i) tile_layer(net.layers[i], *cfg, plan.layers[i]);
            std::cout << "tiling at B=1: OK\n";
        }
    }
    return 0;
}

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::input: return 1;
    case ErrorKind::infeasible: return 2;
    case ErrorKind::internal: return 3;
    }
    return 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TCN accelerator modeling toolkit"};
    app.require_subcommand(1);
    Common c;

    auto* dse = app.add_subcommand("dse", "Grid search over MAC matrix shapes for a device");
    std::string row_range = "4..12", col_range = "4..12";
    int top_k = 10;
    dse->add_option("--device", c.device, "Device file")->required();
    dse->add_option("--row-range", row_range, "n_rows range LO..HI")->capture_default_str();
    dse->add_option("--col-range", col_range, "n_cols range LO..HI")->capture_default_str();
    dse->add_option("--top-k", top_k, "Ranked entries to emit")->capture_default_str()->check(CLI::PositiveNumber);
    add_format_options(dse, c);

    auto* sched = app.add_subcommand("schedule", "Compile and verify a command stream");
    sched->add_option("--net", c.net, "Network file")->required();
    sched->add_option("--device", c.device, "Device file (optional; checks fit and supplies the clock)");
    add_arch_options(sched, c);
    add_batch_option(sched, c, true);
    sched->add_option("--policy", c.policy, "stream or resident")->capture_default_str();
    sched->add_option("--out", c.out, "Output directory (stream on stdout when omitted)");

    auto* sim = app.add_subcommand("simulate", "Simulate execution for one or more batch sizes");
    sim->add_option("--net", c.net, "Network file")->required();
    sim->add_option("--device", c.device, "Device file")->required();
    add_arch_options(sim, c);
    add_batch_option(sim, c, true);
    sim->add_option("--policy", c.policy, "stream or resident")->capture_default_str();
    sim->add_option("--timing-override", c.overrides, "key=value timing override (repeatable)");
    add_format_options(sim, c);

    auto* roof = app.add_subcommand("roofline", "Roofline points for a batch ladder");
    roof->add_option("--net", c.net, "Network file")->required();
    roof->add_option("--device", c.device, "Device file")->required();
    add_arch_options(roof, c);
    add_batch_option(roof, c, true);
    roof->add_option("--policy", c.policy, "stream or resident")->capture_default_str();
    roof->add_option("--timing-override", c.overrides, "key=value timing override (repeatable)");
    add_format_options(roof, c);

    auto* infer = app.add_subcommand("infer", "Run fixed-point streaming inference");
    std::string weights, sidecar, input, output;
    std::optional<std::uint64_t> seed;
    std::int64_t synthetic_len = 0;
    infer->add_option("--net", c.net, "Network file")->required();
    infer->add_option("--weights", weights, "Weights file (little-endian int16)");
    infer->add_option("--sidecar", sidecar, "Weights sidecar JSON");
    infer->add_option("--synthetic-seed", seed, "Use seeded synthetic weights");
    infer->add_option("--input", input, "Input stream (frame-interleaved int16)");
    infer->add_option("--synthetic-input", synthetic_len, "Generate this many synthetic input frames");
    infer->add_option("--output", output, "Output stream file");
    add_batch_option(infer, c, true);

    auto* val = app.add_subcommand("validate", "Validate network, device, arch and weights files");
    val->add_option("--net", c.net, "Network file");
    val->add_option("--device", c.device, "Device file");
    add_arch_options(val, c);
    val->add_option("--weights", weights, "Weights file");
    val->add_option("--sidecar", sidecar, "Weights sidecar JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (dse->parsed()) return cmd_dse(c, row_range, col_range, top_k);
        if (sched->parsed()) return cmd_schedule(c);
        if (sim->parsed()) return cmd_simulate(c);
        if (roof->parsed()) return cmd_roofline(c);
        if (infer->parsed()) return cmd_infer(c, weights, sidecar, seed, input, synthetic_len, output);
        if (val->parsed()) return cmd_validate(c, weights, sidecar);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
