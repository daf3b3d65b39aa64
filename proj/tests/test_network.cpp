#include <doctest.h>

#include <functional>
#include <random>

#include "helpers.hpp"
#include "oracles/oracles.hpp"
#include "tcnacc/error.hpp"
#include "tcnacc/network.hpp"

using namespace tcnacc;
using testutil::chain;
using testutil::layer;

namespace {

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("receptive field of the three-layer illustration is 15") {
    const auto net = chain({layer(0, 1, 1, 2, 1), layer(1, 1, 1, 3, 2), layer(2, 1, 1, 4, 3)});
    CHECK(receptive_field(net) == 15);
    CHECK(oracle::traced_receptive_field(net) == 15);
}

TEST_CASE("receptive field of a pointwise layer is 1") {
    CHECK(receptive_field(chain({layer(0, 3, 3, 1, 7)})) == 1);
}

TEST_CASE("WN-PNT receptive field is 2047") {
    const auto net = load_network(testutil::data("wn_pnt.json"));
    CHECK(receptive_field(net) == 2047);
    CHECK(oracle::traced_receptive_field(net) == 2047);
}

TEST_CASE("local receptive field") {
    CHECK(local_receptive_field(layer(0, 1, 1, 8, 8)) == 57);
    CHECK(local_receptive_field(layer(0, 1, 1, 1, 5)) == 1);
    CHECK(local_receptive_field(layer(0, 1, 1, 24, 1)) == 24);
}

TEST_CASE("receptive field matches dependency tracing on random strided nets") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        const auto net = testutil::random_net(rng, 5, 5, 8, 2, true, false);
        CAPTURE(serialize_network(net));
        CHECK(receptive_field(net) == oracle::traced_receptive_field(net));
    }
}

TEST_CASE("ECG file has the eight layer shapes in order") {
    const auto net = load_network(testutil::data("ecg.json"));
    std::vector<std::pair<int, int>> shapes;
    for (const auto& l : net.layers) {
        std::pair<int, int> kd{l.k, l.d};
        if (shapes.empty() || l.type != net.layers[&l - &net.layers[0] - 1].type) shapes.push_back(kd);
    }
    const std::vector<std::pair<int, int>> want{{24, 1}, {16, 2}, {16, 4}, {8, 4}, {8, 6}, {8, 8}, {8, 8}, {8, 8}};
    CHECK(shapes == want);
    CHECK(net.sample_rate_hz.value_or(0) == 300);
}

TEST_CASE("parse errors") {
    SUBCASE("empty layer list") {
        CHECK(error_of([] { validate_network(parse_network(R"({"name":"x","input_channels":1,"layers":[]})")); }) ==
              "network has no layers");
    }
    SUBCASE("stride above 3") {
        const auto msg = error_of([] {
            validate_network(parse_network(
                R"({"name":"x","input_channels":1,"layers":[{"id":4,"in_ch":1,"out_ch":1,"k":2,"d":1,"stride":4,"activation":"relu","requant_shift":0}]})"));
        });
        CHECK(msg.find("layer 4") != std::string::npos);
        CHECK(msg.find("stride 4") != std::string::npos);
        CHECK(msg.find("1..3") != std::string::npos);
    }
    SUBCASE("syntax error names the line") {
        const auto msg = error_of([] { parse_network("{\n  \"name\": \"x\",\n  \"layers\": [,]\n}"); });
        CHECK(msg.find("line 3") != std::string::npos);
    }
    SUBCASE("field error names the layer entry") {
        const auto msg = error_of([] {
            parse_network(R"({"name":"x","input_channels":1,"layers":[{"id":0,"in_ch":1,"out_ch":1,"k":"two"}]})");
        });
        CHECK(msg.find("layers[0].k") != std::string::npos);
    }
    SUBCASE("channel chaining") {
        const auto msg = error_of([] { validate_network(chain({layer(0, 1, 4, 2), layer(1, 3, 4, 2)})); });
        CHECK(msg.find("layer 1") != std::string::npos);
    }
    SUBCASE("residual with mismatched channels") {
        auto net = chain({layer(0, 1, 4, 2), layer(1, 4, 2, 1)});
        net.layers[1].residual_from = 0;
        CHECK(error_of([&] { validate_network(net); }).find("channels") != std::string::npos);
    }
    SUBCASE("residual from a later layer") {
        auto net = chain({layer(0, 1, 4, 2), layer(1, 4, 4, 1)});
        net.layers[0].residual_from = 1;
        CHECK(error_of([&] { validate_network(net); }).find("earlier") != std::string::npos);
    }
    SUBCASE("residual across a stride change") {
        auto net = chain({layer(0, 1, 4, 2), layer(1, 4, 4, 2, 1, 2)});
        net.layers[1].residual_from = 0;
        CHECK(error_of([&] { validate_network(net); }).find("time-aligned") != std::string::npos);
    }
}

TEST_CASE("serialize and parse round-trip") {
    for (const char* f : {"ecg.json", "res_tcn.json", "wn_pnt.json"}) {
        const auto net = load_network(testutil::data(f));
        CHECK(parse_network(serialize_network(net)) == net);
    }
    std::mt19937_64 rng(5);
    for (int i = 0; i < 50; ++i) {
        auto net = testutil::random_net(rng, 6, 4, 4, 3, true, true);
        net.layers.back().bias = true;
        net.sample_rate_hz = 1000.0 + i;
        CHECK(parse_network(serialize_network(net)) == net);
    }
}

TEST_CASE("stream plan") {
    SUBCASE("B=1 windows equal the local receptive field") {
        const auto net = load_network(testutil::data("ecg.json"));
        const auto plan = plan_stream(net, 1);
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            CHECK(plan.layers[i].in_samples == local_receptive_field(net.layers[i]));
            CHECK(plan.layers[i].out_samples == 1);
        }
    }
    SUBCASE("single k=2 layer at B=504") {
        CHECK(plan_stream(chain({layer(0, 1, 1, 2)}), 504).layers[0].in_samples == 505);
    }
    SUBCASE("stride-2 pair: producer count follows from steady-state tracing") {
        const auto net = chain({layer(0, 1, 1, 3, 1, 2), layer(1, 1, 1, 3, 1, 2)});
        const auto plan = plan_stream(net, 1);
        // Highest producer index required for final outputs 0..g, traced directly.
        auto highest = [&](std::int64_t g) {
            std::int64_t hi = 0;
            for (int tap = 0; tap < 3; ++tap) hi = std::max<std::int64_t>(hi, g * 2 + tap);
            return hi;
        };
        const std::int64_t fresh = highest(5) - highest(4);
        CHECK(plan.layers[0].out_samples == fresh);
        CHECK(plan.layers[1].in_samples == 3);
        CHECK(plan.layers[0].in_samples == 3 + (fresh - 1) * 2);
    }
    SUBCASE("batch below 1 is rejected") {
        CHECK_THROWS_AS(plan_stream(chain({layer(0, 1, 1, 2)}), 0), Error);
    }
    SUBCASE("monotone in B") {
        const auto net = load_network(testutil::data("res_tcn.json"));
        auto prev = plan_stream(net, 1);
        for (std::int64_t b : {2, 3, 7, 64, 144}) {
            const auto p = plan_stream(net, b);
            for (std::size_t i = 0; i < net.layers.size(); ++i)
                CHECK(p.layers[i].in_samples >= prev.layers[i].in_samples);
            prev = p;
        }
    }
}

TEST_CASE("workload") {
    const auto one = chain({layer(0, 1, 1, 3)});
    auto plan = plan_stream(one, 4);
    CHECK(workload(one, plan).macs == 12);
    CHECK(workload(one, plan).ops == 24);
    plan.layers[0].out_samples = 0;
    CHECK(workload(one, plan).macs == 0);

    const auto ecg = load_network(testutil::data("ecg.json"));
    const auto w = workload(ecg, plan_stream(ecg, 348));
    CHECK(w.macs == oracle::summed_macs(ecg, 348));
    CHECK(w.macs == 1907017728);  // frozen from the independent summation
    for (const char* f : {"res_tcn.json", "wn_pnt.json"}) {
        const auto net = load_network(testutil::data(f));
        for (std::int64_t b : {1, 8, 144}) CHECK(workload(net, plan_stream(net, b)).macs == oracle::summed_macs(net, b));
    }
}

TEST_CASE("memory footprint") {
    const auto tiny = chain({layer(0, 1, 1, 1)});
    const auto fp = memory_footprint(tiny, plan_stream(tiny, 1));
    CHECK(fp.weights_bytes == 2);
    CHECK(fp.activations_bytes == 4);

    auto biased = chain({layer(0, 2, 3, 2)});
    biased.layers[0].bias = true;
    CHECK(memory_footprint(biased, plan_stream(biased, 1)).weights_bytes == 2 * 3 * 2 * 2 + 3 * 4);

    const auto res = load_network(testutil::data("res_tcn.json"));
    const double kb = memory_footprint(res, plan_stream(res, 1)).activations_bytes / 1000.0;
    CHECK(kb == doctest::Approx(37.3).epsilon(0.02));

    const auto ecg = load_network(testutil::data("ecg.json"));
    const auto a = memory_footprint(ecg, plan_stream(ecg, 8));
    const auto b = memory_footprint(ecg, plan_stream(ecg, 16));
    CHECK(b.activations_bytes > a.activations_bytes);
    CHECK(b.weights_bytes == a.weights_bytes);
}

TEST_CASE("residual alignment") {
    const auto wn = load_network(testutil::data("wn_pnt.json"));
    // The 1x1 layer closing block j adds the block input, which leads it by
    // the dilation of the block's k=2 layer.
    CHECK(residual_lag(wn, 2) == 1);
    CHECK(residual_lag(wn, 20) == 512);
    const auto res = load_network(testutil::data("res_tcn.json"));
    CHECK(residual_lag(res, 1) == 7);
    const auto need = required_outputs(wn, 9);
    CHECK(need.back() == 9);
    CHECK(need[need.size() - 2] == 9);
}
