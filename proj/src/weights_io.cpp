#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tcnacc/error.hpp"
#include "tcnacc/qconv.hpp"

namespace tcnacc {

using json = nlohmann::json;

namespace {

std::vector<char> read_all(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_input(std::string("cannot open ") + what + " '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::int16_t le16(const char* p) {
    const auto lo = static_cast<std::uint8_t>(p[0]);
    const auto hi = static_cast<std::uint8_t>(p[1]);
    return static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
}

void put_le16(std::string& out, std::int16_t v) {
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(static_cast<char>(u & 0xff));
    out.push_back(static_cast<char>(u >> 8));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw_input("cannot write '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw_input("short write to '" + path.string() + "'");
}

}  // namespace

void save_weights(const NetworkDef& net, const WeightSet& weights, const std::filesystem::path& bin_path,
                  const std::filesystem::path& sidecar_path) {
    check_weights(net, weights);
    std::string bin;
    json side = json::array();
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerWeights& w = weights.layers[i];
        for (auto v : w.kernel) put_le16(bin, v);
        json e;
        e["layer_id"] = net.layers[i].id;
        e["frac_bits"] = w.format.frac_bits;
        e["requant_shift"] = effective_shift(net.layers[i], w);
        if (!w.bias.empty()) e["bias"] = w.bias;
        side.push_back(std::move(e));
    }
    write_file(bin_path, bin);
    write_file(sidecar_path, side.dump(2) + "\n");
}

WeightSet load_weights(const NetworkDef& net, const std::filesystem::path& bin_path,
                       const std::optional<std::filesystem::path>& sidecar_path) {
    const auto bytes = read_all(bin_path, "weights file");
    std::size_t expected = 0;
    for (const auto& l : net.layers) expected += static_cast<std::size_t>(l.out_channels) * l.in_channels * l.k * 2;
    if (bytes.size() != expected)
        throw_input("weights file '" + bin_path.string() + "' has " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected));

    std::map<int, json> meta;
    if (sidecar_path) {
        const auto text = read_all(*sidecar_path, "weights sidecar");
        json doc;
        try {
            doc = json::parse(text.begin(), text.end());
        } catch (const json::parse_error& e) {
            throw_input("weights sidecar: " + std::string(e.what()));
        }
        if (!doc.is_array()) throw_input("weights sidecar must be a JSON array");
        for (const auto& e : doc) {
            if (!e.is_object() || !e.contains("layer_id") || !e["layer_id"].is_number_integer())
                throw_input("weights sidecar: every entry needs an integer layer_id");
            meta[e["layer_id"].get<int>()] = e;
        }
    }

    WeightSet ws;
    std::size_t pos = 0;
    for (const auto& l : net.layers) {
        LayerWeights w;
        w.out_channels = l.out_channels;
        w.in_channels = l.in_channels;
        w.k = l.k;
        w.kernel.resize(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.k);
        for (auto& v : w.kernel) {
            v = le16(bytes.data() + pos);
            pos += 2;
        }
        if (auto it = meta.find(l.id); it != meta.end()) {
            const json& e = it->second;
            try {
                if (e.contains("frac_bits")) w.format.frac_bits = e["frac_bits"].get<int>();
                if (e.contains("requant_shift")) {
                    // A shift equal to the layer's own is not an override.
                    const int shift = e["requant_shift"].get<int>();
                    if (shift != l.requant_shift) w.requant_shift = shift;
                }
                if (e.contains("bias")) w.bias = e["bias"].get<std::vector<std::int32_t>>();
            } catch (const json::exception& ex) {
                throw_input("weights sidecar, layer " + std::to_string(l.id) + ": " + ex.what());
            }
        }
        ws.layers.push_back(std::move(w));
    }
    check_weights(net, ws);
    return ws;
}

std::vector<std::int16_t> read_stream(const std::filesystem::path& path, int channels) {
    const auto bytes = read_all(path, "sample stream");
    const std::size_t frame_bytes = static_cast<std::size_t>(channels) * 2;
    if (bytes.size() % frame_bytes != 0)
        throw_input("sample stream '" + path.string() + "' has " + std::to_string(bytes.size()) +
                    " bytes, not a multiple of the " + std::to_string(frame_bytes) + "-byte frame");
    std::vector<std::int16_t> out(bytes.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = le16(bytes.data() + 2 * i);
    return out;
}

void write_stream(const std::filesystem::path& path, std::span<const std::int16_t> frames) {
    std::string bytes;
    bytes.reserve(frames.size() * 2);
    for (auto v : frames) put_le16(bytes, v);
    write_file(path, bytes);
}

}  // namespace tcnacc
