#include "tcnacc/network.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tcnacc/error.hpp"

namespace tcnacc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string layer_tag(const LayerDef& l) { return "layer " + std::to_string(l.id); }

// Maps a byte offset reported by the JSON parser to a 1-based line number.
std::size_t line_of(std::string_view text, std::size_t byte) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

const json& require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw_input(where + ": missing field '" + key + "'");
    return *it;
}

int as_int(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw_input(where + ": expected an integer");
    auto x = v.get<std::int64_t>();
    if (x < INT32_MIN || x > INT32_MAX) throw_input(where + ": integer out of range");
    return static_cast<int>(x);
}

int int_field(const json& obj, const char* key, const std::string& where) {
    return as_int(require(obj, key, where), where + "." + key);
}

int int_field_or(const json& obj, const char* key, const std::string& where, int fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    return as_int(*it, where + "." + key);
}

LayerDef parse_layer(const json& j, std::size_t pos) {
    const std::string where = "layers[" + std::to_string(pos) + "]";
    if (!j.is_object()) throw_input(where + ": expected an object");
    LayerDef l;
    l.id = int_field(j, "id", where);
    l.in_channels = int_field(j, "in_ch", where);
    l.out_channels = int_field(j, "out_ch", where);
    l.k = int_field(j, "k", where);
    l.d = int_field_or(j, "d", where, 1);
    l.stride = int_field_or(j, "stride", where, 1);
    l.requant_shift = int_field_or(j, "requant_shift", where, 0);
    if (auto it = j.find("residual_from"); it != j.end() && !it->is_null())
        l.residual_from = as_int(*it, where + ".residual_from");
    if (auto it = j.find("activation"); it != j.end()) {
        if (!it->is_string()) throw_input(where + ".activation: expected a string");
        auto a = it->get<std::string>();
        if (a == "relu") l.activation = Activation::relu;
        else if (a == "none") l.activation = Activation::none;
        else throw_input(where + ".activation: unknown activation '" + a + "'");
    }
    if (auto it = j.find("bias"); it != j.end()) {
        if (!it->is_boolean()) throw_input(where + ".bias: expected a boolean");
        l.bias = it->get<bool>();
    }
    if (auto it = j.find("type"); it != j.end()) {
        if (!it->is_string()) throw_input(where + ".type: expected a string");
        l.type = it->get<std::string>();
    }
    return l;
}

}  // namespace

std::size_t NetworkDef::index_of(int id) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].id == id) return i;
    throw_input("unknown layer id " + std::to_string(id));
}

NetworkDef parse_network(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw_input("syntax error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    if (!doc.is_object()) throw_input("network document must be a JSON object");

    NetworkDef net;
    const json& name = require(doc, "name", "network");
    if (!name.is_string()) throw_input("network.name: expected a string");
    net.name = name.get<std::string>();
    net.input_channels = int_field(doc, "input_channels", "network");
    if (auto it = doc.find("sample_rate_hz"); it != doc.end() && !it->is_null()) {
        if (!it->is_number()) throw_input("network.sample_rate_hz: expected a number");
        net.sample_rate_hz = it->get<double>();
    }
    if (auto it = doc.find("description"); it != doc.end()) {
        if (!it->is_string()) throw_input("network.description: expected a string");
        net.description = it->get<std::string>();
    }
    const json& layers = require(doc, "layers", "network");
    if (!layers.is_array()) throw_input("network.layers: expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i) net.layers.push_back(parse_layer(layers[i], i));
    validate_network(net);
    return net;
}

NetworkDef load_network(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_input("cannot open network file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_network(ss.str());
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

std::string serialize_network(const NetworkDef& net) {
    ordered_json doc;
    doc["name"] = net.name;
    if (!net.description.empty()) doc["description"] = net.description;
    doc["input_channels"] = net.input_channels;
    if (net.sample_rate_hz) doc["sample_rate_hz"] = *net.sample_rate_hz;
    doc["layers"] = ordered_json::array();
    for (const auto& l : net.layers) {
        ordered_json j;
        j["id"] = l.id;
        if (!l.type.empty()) j["type"] = l.type;
        j["in_ch"] = l.in_channels;
        j["out_ch"] = l.out_channels;
        j["k"] = l.k;
        j["d"] = l.d;
        j["stride"] = l.stride;
        if (l.residual_from) j["residual_from"] = *l.residual_from;
        j["activation"] = l.activation == Activation::relu ? "relu" : "none";
        j["bias"] = l.bias;
        j["requant_shift"] = l.requant_shift;
        doc["layers"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

void validate_network(const NetworkDef& net) {
    if (net.layers.empty()) throw_input("network has no layers");
    if (net.input_channels < 1) throw_input("network: input_channels must be >= 1");
    if (net.sample_rate_hz && !(*net.sample_rate_hz > 0.0))
        throw_input("network: sample_rate_hz must be positive");

    int expected_in = net.input_channels;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerDef& l = net.layers[i];
        const std::string tag = layer_tag(l);
        if (i > 0 && l.id <= net.layers[i - 1].id)
            throw_input(tag + ": ids must be unique and increasing");
        if (l.in_channels < 1 || l.out_channels < 1) throw_input(tag + ": channel counts must be >= 1");
        if (l.k < 1) throw_input(tag + ": kernel size must be >= 1");
        if (l.d < 1) throw_input(tag + ": dilation must be >= 1");
        if (l.stride < 1 || l.stride > 3)
            throw_input(tag + ": stride " + std::to_string(l.stride) +
                        " outside the supported range 1..3");
        if (l.requant_shift < 0 || l.requant_shift > 40)
            throw_input(tag + ": requant_shift must be within 0..40");
        if (l.in_channels != expected_in)
            throw_input(tag + ": in_ch " + std::to_string(l.in_channels) + " does not match producer's " +
                        std::to_string(expected_in) + " channels");
        expected_in = l.out_channels;
    }

    const TimeAlignment ta = time_alignment(net);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerDef& l = net.layers[i];
        if (!l.residual_from) continue;
        const std::string tag = layer_tag(l);
        std::size_t src = net.layers.size();
        for (std::size_t j = 0; j < i; ++j)
            if (net.layers[j].id == *l.residual_from) src = j;
        if (src == net.layers.size())
            throw_input(tag + ": residual_from " + std::to_string(*l.residual_from) +
                        " does not name an earlier layer");
        if (net.layers[src].out_channels != l.out_channels)
            throw_input(tag + ": residual source has " + std::to_string(net.layers[src].out_channels) +
                        " channels, expected " + std::to_string(l.out_channels));
        if (ta.rate[src] != ta.rate[i] || (ta.offset[i] - ta.offset[src]) % ta.rate[i] != 0)
            throw_input(tag + ": residual source is not time-aligned with the layer output");
    }
}

std::int64_t local_receptive_field(const LayerDef& layer) {
    return 1 + static_cast<std::int64_t>(layer.k - 1) * layer.d;
}

std::int64_t receptive_field(const NetworkDef& net) {
    std::int64_t rf = 1;
    std::int64_t scale = 1;
    for (const auto& l : net.layers) {
        rf += (local_receptive_field(l) - 1) * scale;
        scale *= l.stride;
    }
    return rf;
}

StreamPlan plan_stream(const NetworkDef& net, std::int64_t batch) {
    if (batch < 1) throw_input("batch size must be >= 1");
    StreamPlan plan;
    plan.batch = batch;
    plan.layers.resize(net.layers.size());
    std::int64_t out = batch;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        const LayerDef& l = net.layers[i];
        plan.layers[i].out_samples = out;
        plan.layers[i].in_samples = local_receptive_field(l) + (out - 1) * l.stride;
        out *= l.stride;
    }
    return plan;
}

Workload workload(const NetworkDef& net, const StreamPlan& plan) {
    Workload w;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerDef& l = net.layers[i];
        w.macs += static_cast<std::int64_t>(l.in_channels) * l.out_channels * l.k * plan.layers[i].out_samples;
    }
    w.ops = 2 * w.macs;
    return w;
}

Footprint memory_footprint(const NetworkDef& net, const StreamPlan& plan) {
    Footprint f;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerDef& l = net.layers[i];
        f.weights_bytes += static_cast<std::int64_t>(l.k) * l.in_channels * l.out_channels * 2;
        if (l.bias) f.weights_bytes += static_cast<std::int64_t>(l.out_channels) * 4;
        f.activations_bytes += plan.layers[i].in_samples * l.in_channels * 2;
    }
    f.activations_bytes += plan.layers.back().out_samples * net.layers.back().out_channels * 2;
    return f;
}

TimeAlignment time_alignment(const NetworkDef& net) {
    TimeAlignment ta;
    std::int64_t offset = 0;
    std::int64_t rate = 1;
    for (const auto& l : net.layers) {
        offset += (local_receptive_field(l) - 1) * rate;
        rate *= l.stride;
        ta.offset.push_back(offset);
        ta.rate.push_back(rate);
    }
    return ta;
}

std::int64_t residual_lag(const NetworkDef& net, std::size_t layer_index) {
    const LayerDef& l = net.layers.at(layer_index);
    if (!l.residual_from) return 0;
    const std::size_t src = net.index_of(*l.residual_from);
    const TimeAlignment ta = time_alignment(net);
    return (ta.offset[layer_index] - ta.offset[src]) / ta.rate[layer_index];
}

std::vector<std::int64_t> required_outputs(const NetworkDef& net, std::int64_t final_index) {
    std::vector<std::int64_t> need(net.layers.size());
    std::int64_t idx = final_index;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        need[i] = idx;
        const LayerDef& l = net.layers[i];
        idx = idx * l.stride + local_receptive_field(l) - 1;
    }
    return need;
}

}  // namespace tcnacc
