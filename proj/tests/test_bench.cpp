// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "flowtrace/bench.hpp"

using namespace flowtrace;
using namespace flowtrace::bench;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Small frames + inline cost model so bench tests stay quick.
const char* kSmallConfig = R"(
[source]
width = 64
height = 48
channels = 1
rate_hz = 1000
seed = 11

[resize]
out_width = 32
out_height = 24
interpolation = bilinear

[cost_model]
layer_fixed_ns = 200
layer_per_byte_ns = 0.1
per_pixel_ns.rectify_host = 1.0
per_pixel_ns.resize_host = 1.0
h2d_fixed_ns = 1000
h2d_per_byte_ns = 0.5
d2h_fixed_ns = 1000
d2h_per_byte_ns = 0.5
launch_fixed_ns = 500
per_pixel_ns.rectify = 0.4
per_pixel_ns.resize = 0.3
per_pixel_ns.rectify_resize_fused = 0.8
stream_beat_bytes = 64
stream_per_beat_ns = 2.0

[tracing]
enabled = true
ring_capacity = 262144

[run]
variant = cpu,accel,fused,streaming
mode = model
messages = 12
warmup_frames = 2
backend = simdev
workers = 2
)";

ordered_json strip_timestamp(ordered_json j) {
    j.erase("generated_at");
    return j;
}

}  // namespace

TEST_CASE("speedup is (base - other) / base * 100") {
    CHECK(speedup_percent(10'000'000, 7'558'000) == doctest::Approx(24.42));
    CHECK(speedup_percent(123456, 123456) == 0.0);
    CHECK(speedup_percent(100, 150) == doctest::Approx(-50.0));  // slowdowns representable
    CHECK_THROWS_AS(speedup_percent(0, 10), ConfigError);
}

TEST_CASE("config file parses sections and value types") {
    const BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    CHECK(cfg.source.width == 64);
    CHECK(cfg.source.seed == 11);
    CHECK(cfg.resize.out_width == 32);
    CHECK(cfg.variants.size() == 4);
    CHECK(cfg.mode == TimingMode::Model);
    CHECK(cfg.stop.messages == 12);
    CHECK(cfg.warmup_frames == 2);
    CHECK(cfg.tracing.enabled);
    REQUIRE(cfg.cost_inline.has_value());
    CHECK(cfg.cost_inline->layer_fixed_ns == 200);
    CHECK(cfg.cost_inline->per_pixel_ns.at("rectify") == 0.4);
}

TEST_CASE("config errors carry line context") {
    CHECK_THROWS_AS(parse_bench_config_text("[source]\nwidth = x\n"), ConfigError);
    CHECK_THROWS_AS(parse_bench_config_text("[source]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_bench_config_text("[nosuch]\nkey = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_bench_config_text("[run]\nmode = quantum\n"), ConfigError);
    CHECK_THROWS_AS(parse_bench_config_text("[run]\nvariant = gpu\n"), ConfigError);
}

TEST_CASE("finalize rejects impossible stops and fills the default camera") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.stop.messages = 0;
    cfg.stop.duration_s = 0;
    CHECK_THROWS_AS(cfg.finalize(), ConfigError);
    BenchConfig ok = parse_bench_config_text(kSmallConfig);
    ok.finalize();
    CHECK(ok.source.camera.width == 64);
    CHECK(ok.source.camera.fx > 0);
}

TEST_CASE("model-mode run produces a full report with ordered speedups") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.finalize();
    const ordered_json report = run_bench(cfg);
    CHECK(report["schema"] == "flowtrace-report-v1");
    CHECK(report["mode"] == "model");
    REQUIRE(report["variants"].size() == 4);
    // 12 messages - 2 warm-up
    for (const auto& v : report["variants"]) {
        CHECK(v["frames"].get<uint64_t>() == 10);
        CHECK(v["mode"] == "model");
        const double frac = v["messaging_fraction"].get<double>();
        CHECK(frac >= 0.0);
        CHECK(frac <= 1.0);
        CHECK(v["messaging_fraction"].get<double>() + v["compute_fraction"].get<double>() ==
              1.0);
        // Report breakdown fractions per variant sum to 1 and segments
        // partition the end-to-end mean.
        double seg_sum = 0;
        for (const auto& [name, seg] : v["segments"].items()) {
            seg_sum += seg["mean"].get<double>();
        }
        CHECK(seg_sum == doctest::Approx(v["end_to_end_ns"]["mean"].get<double>()).epsilon(1e-9));
    }
    REQUIRE(report["comparisons"].size() == 4);
    std::map<std::string, double> speedup;
    for (const auto& c : report["comparisons"]) {
        speedup[c["variant"].get<std::string>()] = c["speedup_pct"].get<double>();
    }
    CHECK(speedup.at("cpu") == 0.0);
    // At this tiny frame size the fixed transfer costs dominate: per-node
    // offload loses to the host while the fused and streaming variants win
    // by skipping a hop.
    CHECK(speedup.at("fused") > 0.0);
    CHECK(speedup.at("streaming") > 0.0);
    CHECK(speedup.at("accel") < 0.0);
}

TEST_CASE("single cpu run with 100 messages counts 95 frames") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::CpuBaseline};
    cfg.stop.messages = 100;
    cfg.warmup_frames = 5;
    cfg.finalize();
    const ordered_json report = run_bench(cfg);
    CHECK(report["variants"][0]["frames"].get<uint64_t>() == 95);
}

TEST_CASE("tracing disabled degrades to sink-side stats without breakdown") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::CpuBaseline};
    cfg.tracing.enabled = false;
    cfg.finalize();
    const ordered_json report = run_bench(cfg);
    const auto& v = report["variants"][0];
    CHECK(!v.contains("segments"));
    CHECK(!v.contains("messaging_fraction"));
    CHECK(v["frames"].get<uint64_t>() == 10);
    CHECK(v["end_to_end_ns"]["mean"].get<double>() > 0);
}

TEST_CASE("two model runs with identical config produce identical reports") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.finalize();
    const ordered_json a = run_bench(cfg);
    const ordered_json b = run_bench(cfg);
    CHECK(strip_timestamp(a) == strip_timestamp(b));
}

TEST_CASE("raising h2d_per_byte_ns never speeds up the per-node offload variant") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::AccelPerNode};
    cfg.finalize();
    double prev = -1;
    for (double rate : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        BenchConfig c = cfg;
        c.cost_inline->h2d_per_byte_ns = rate;
        const ordered_json report = run_bench(c);
        const double mean = report["variants"][0]["end_to_end_ns"]["mean"].get<double>();
        CHECK(mean >= prev);
        prev = mean;
    }
}

TEST_CASE("report files and trace exports land where configured") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "flowtrace_bench_out";
    fs::remove_all(dir);
    fs::create_directories(dir);
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::CpuBaseline};
    cfg.out_path = (dir / "report.json").string();
    cfg.trace_out_dir = (dir / "traces").string();
    cfg.trace_formats = {"chrome", "csv"};
    cfg.finalize();
    run_bench(cfg);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "traces" / "cpu.trace.json"));
    CHECK(fs::exists(dir / "traces" / "cpu.trace.csv"));
    fs::remove_all(dir);
}

TEST_CASE("compare: identical reports give zero deltas") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::CpuBaseline, pipe::PipelineVariant::AccelFused};
    cfg.finalize();
    const ordered_json r = run_bench(cfg);
    const ordered_json cmp = compare_reports(r, r);
    REQUIRE(cmp["variants"].size() == 2);
    for (const auto& row : cmp["variants"]) {
        CHECK(row["delta_ns"].get<double>() == 0.0);
        CHECK(row["speedup_pct"].get<double>() == 0.0);
    }
}

TEST_CASE("compare: cpu report vs accel report yields the cross-baseline speedup") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::CpuBaseline};
    cfg.finalize();
    const ordered_json ra = run_bench(cfg);
    BenchConfig cfg_b = parse_bench_config_text(kSmallConfig);
    cfg_b.variants = {pipe::PipelineVariant::AccelPerNode};
    cfg_b.finalize();
    const ordered_json rb = run_bench(cfg_b);
    const ordered_json cmp = compare_reports(ra, rb);
    CHECK(cmp["variants"].empty());
    REQUIRE(cmp["cross_baseline"].size() == 1);
    const double cpu_mean = ra["variants"][0]["end_to_end_ns"]["mean"].get<double>();
    const double accel_mean = rb["variants"][0]["end_to_end_ns"]["mean"].get<double>();
    CHECK(cmp["cross_baseline"][0]["speedup_pct"].get<double>() ==
          doctest::Approx(speedup_percent(cpu_mean, accel_mean)));
}

TEST_CASE("compare: disjoint variants without a cpu baseline is an error") {
    BenchConfig cfg = parse_bench_config_text(kSmallConfig);
    cfg.variants = {pipe::PipelineVariant::AccelFused};
    cfg.finalize();
    const ordered_json ra = run_bench(cfg);
    BenchConfig cfg_b = parse_bench_config_text(kSmallConfig);
    cfg_b.variants = {pipe::PipelineVariant::AccelStreaming};
    cfg_b.finalize();
    const ordered_json rb = run_bench(cfg_b);
    CHECK_THROWS_AS(compare_reports(ra, rb), ConfigError);
}

TEST_CASE("compare: schema mismatch is an error") {
    json a = {{"schema", "flowtrace-report-v1"}, {"variants", json::array()}};
    json b = {{"schema", "other"}, {"variants", json::array()}};
    CHECK_THROWS_AS(compare_reports(a, b), ConfigError);
}

TEST_CASE("canonical config is stable and sensitive to fields") {
    BenchConfig a = parse_bench_config_text(kSmallConfig);
    a.finalize();
    BenchConfig b = parse_bench_config_text(kSmallConfig);
    b.finalize();
    CHECK(canonical_config(a) == canonical_config(b));
    b.source.seed = 12;
    CHECK(canonical_config(a) != canonical_config(b));
}
