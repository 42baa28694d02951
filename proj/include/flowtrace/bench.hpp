// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "flowtrace/cost_model.hpp"
#include "flowtrace/pipelines.hpp"
#include "flowtrace/timebase.hpp"

namespace flowtrace::bench {

struct StopCfg {
    uint64_t messages = 300;  // desk-scale default; 60 s runs via duration_s
    double duration_s = 0;
};

struct TracingCfg {
    bool enabled = true;
    size_t ring_capacity = 1u << 20;
};

/// Everything one `bench run` needs. Parsed from the sectioned key/value
/// config file; CLI flags override individual fields.
struct BenchConfig {
    std::vector<pipe::PipelineVariant> variants = pipe::all_variants();
    pipe::SourceConfig source;
    bool camera_given = false;
    kernels::ResizeParams resize{320, 240, kernels::Interp::bilinear};
    std::string backend = "simdev";
    std::string cost_preset = "paper-calibrated";
    std::string cost_preset_file;
    std::optional<CostModel> cost_inline;
    TimingMode mode = TimingMode::Model;
    StopCfg stop;
    TracingCfg tracing;
    int warmup_frames = 5;
    int workers = 2;
    size_t queue_depth = 8;
    bool payload_copy = true;
    std::string out_path;
    std::string trace_out_dir;
    std::vector<std::string> trace_formats;

    /// Fills the default camera when none was given and validates.
    void finalize();
    CostModel resolve_cost() const;
};

BenchConfig parse_bench_config_text(const std::string& text);
BenchConfig load_bench_config(const std::string& path);

/// Deterministic serialization of the effective config; hashed into the
/// report's config_hash.
std::string canonical_config(const BenchConfig& cfg);

/// Runs every configured variant, analyzes traces, writes trace exports
/// and the report file when configured, and returns the report JSON.
nlohmann::ordered_json run_bench(const BenchConfig& cfg);

/// (t_base - t_other) / t_base * 100. Throws ConfigError on t_base <= 0.
double speedup_percent(double t_base_ns, double t_other_ns);

/// Per-variant and per-segment deltas between two report files, plus
/// cross-baseline speedups against report A's cpu baseline.
nlohmann::ordered_json compare_reports(const nlohmann::json& a, const nlohmann::json& b);

std::string render_report_table(const nlohmann::json& report);
std::string render_compare_table(const nlohmann::json& cmp);

}  // namespace flowtrace::bench
