// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flowtrace/cost_model.hpp"

using namespace flowtrace;

namespace {
CostModel sample_model() {
    CostModel m;
    m.h2d_fixed_ns = 100000;
    m.h2d_per_byte_ns = 1.0;
    m.d2h_fixed_ns = 100000;
    m.d2h_per_byte_ns = 1.0;
    m.launch_fixed_ns = 10000;
    m.per_pixel_ns["resize"] = 0.5;
    m.per_pixel_ns["rectify"] = 0.93;
    m.per_pixel_ns["rectify_host"] = 6.0;
    m.stream_beat_bytes = 64;
    m.stream_per_beat_ns = 448;
    m.layer_fixed_ns = 5000;
    m.layer_per_byte_ns = 1.6;
    return m;
}
}  // namespace

TEST_CASE("transfer cost is fixed plus per byte") {
    const CostModel m = sample_model();
    CHECK(m.h2d_cost(307200) == 407200);
    CHECK(m.h2d_cost(0) == 100000);  // zero-byte payload pays the fixed cost only
    CHECK(m.d2h_cost(76800) == 176800);
}

TEST_CASE("launch cost is fixed plus per output pixel") {
    const CostModel m = sample_model();
    CHECK(m.launch_cost("resize", 320 * 240) == 10000 + 38400);
    CHECK(m.launch_cost("rectify", 640 * 480) == 10000 + 285696);
    CHECK_THROWS_AS(m.launch_cost("unknown_kernel", 10), ConfigError);
}

TEST_CASE("host compute cost reads the _host entry and defaults to zero") {
    const CostModel m = sample_model();
    CHECK(m.host_compute_cost("rectify", 307200) == 1843200);
    CHECK(m.host_compute_cost("resize", 307200) == 0);
}

TEST_CASE("stream frames pay one header beat plus data beats") {
    const CostModel m = sample_model();
    CHECK(m.stream_beats(1024) == 17);  // 16 data + 1 header
    CHECK(m.stream_beats(100) == 3);    // 2 data + 1 header
    CHECK(m.stream_cost(1024) == 17 * 448);
}

TEST_CASE("layer cost is fixed plus per byte") {
    const CostModel m = sample_model();
    CHECK(m.layer_cost(307200) == 5000 + 491520);
    CHECK(m.layer_cost(0) == 5000);
}

TEST_CASE("preset text round trips") {
    const CostModel m = sample_model();
    const CostModel back = parse_cost_model_text(cost_model_to_text(m));
    CHECK(back.h2d_fixed_ns == m.h2d_fixed_ns);
    CHECK(back.per_pixel_ns.at("rectify") == m.per_pixel_ns.at("rectify"));
    CHECK(back.stream_beat_bytes == m.stream_beat_bytes);
    CHECK(back.layer_per_byte_ns == m.layer_per_byte_ns);
}

TEST_CASE("parser flags unknown keys, bad numbers and bad values") {
    CHECK_THROWS_AS(parse_cost_model_text("bogus_key = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_cost_model_text("h2d_fixed_ns = banana\n"), ConfigError);
    CHECK_THROWS_AS(parse_cost_model_text("h2d_fixed_ns\n"), ConfigError);
    CHECK_THROWS_AS(parse_cost_model_text("stream_beat_bytes = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_cost_model_text("h2d_per_byte_ns = -1\n"), ConfigError);
}

TEST_CASE("comments and blank lines are ignored") {
    const CostModel m = parse_cost_model_text(
        "# comment\n"
        "\n"
        "launch_fixed_ns = 42   # trailing comment\n"
        "per_pixel_ns.foo = 2.5\n");
    CHECK(m.launch_fixed_ns == 42);
    CHECK(m.per_pixel_ns.at("foo") == 2.5);
}

TEST_CASE("the paper-calibrated preset loads and carries the solved values") {
    const CostModel m = load_cost_preset("paper-calibrated");
    CHECK(m.h2d_fixed_ns == 75000);
    CHECK(m.h2d_per_byte_ns == 0.75);
    CHECK(m.launch_fixed_ns == 15000);
    CHECK(m.stream_beat_bytes == 64);
    CHECK(m.per_pixel_ns.at("rectify_resize_fused") == 166.5);
    CHECK(m.layer_fixed_ns == 30000);
    CHECK(m.per_pixel_ns.at("rectify_host") == 30.0);
}

TEST_CASE("the preset's closed forms land on the paper's speedups") {
    const CostModel m = load_cost_preset("paper-calibrated");
    const size_t raw = 640 * 480, small = 320 * 240;
    const auto M = [&](size_t len) { return 6 * m.layer_cost(len); };
    const int64_t e_cpu = 2 * M(raw) + M(small) + m.host_compute_cost("rectify", raw) +
                          m.host_compute_cost("resize", small);
    const int64_t e_accel = 2 * M(raw) + M(small) + 2 * m.h2d_cost(raw) + m.d2h_cost(raw) +
                            m.d2h_cost(small) + m.launch_cost("rectify", raw) +
                            m.launch_cost("resize", small);
    const int64_t e_fused = M(raw) + M(small) + m.h2d_cost(raw) + m.d2h_cost(small) +
                            m.launch_cost("rectify_resize_fused", small);
    const int64_t e_stream = M(raw) + M(small) + m.h2d_cost(raw) + m.d2h_cost(small) +
                             m.launch_cost("rectify", raw) + m.launch_cost("resize", small) +
                             m.stream_cost(raw + 40);
    CHECK(e_cpu == 41343840);
    CHECK(e_accel == 38784624);
    CHECK(e_fused == 30189000);
    CHECK(e_stream == 31248702);
    auto pct = [&](int64_t other) {
        return 100.0 * static_cast<double>(e_cpu - other) / static_cast<double>(e_cpu);
    };
    CHECK(std::abs(pct(e_accel) - 6.22) <= 0.1);
    CHECK(std::abs(pct(e_fused) - 26.96) <= 0.1);
    CHECK(std::abs(pct(e_stream) - 24.42) <= 0.1);
    CHECK(e_fused < e_stream);
    CHECK(e_stream < e_accel);
    CHECK(e_accel < e_cpu);
    // cpu messaging fraction above the paper's 73.3%
    const double frac = static_cast<double>(2 * M(raw) + M(small)) / static_cast<double>(e_cpu);
    CHECK(frac >= 0.733);
}

TEST_CASE("unknown preset name fails cleanly") {
    CHECK_THROWS_AS(load_cost_preset("kv260"), ConfigError);
}
