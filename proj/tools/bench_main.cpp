// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "flowtrace/bench.hpp"
#include "flowtrace/tracer.hpp"

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw flowtrace::ConfigError("cannot open report: " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowtrace benchmark harness"};
    app.require_subcommand(1);

    // --- run ----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "run pipeline variants and report");
    std::string config_path;
    std::vector<std::string> variants;
    std::string mode, out_path, trace_out, report_only;
    std::vector<std::string> trace_formats;
    double duration_s = -1;
    int64_t messages = -1;
    int workers = 0;
    run->add_option("--config", config_path, "config file")->required();
    run->add_option("--variant", variants, "variant(s): cpu|accel|fused|streaming");
    run->add_option("--mode", mode, "real|model");
    run->add_option("--duration-s", duration_s, "stop after this many seconds");
    run->add_option("--messages", messages, "stop after this many sink messages");
    run->add_option("--out", out_path, "report JSON path");
    run->add_option("--trace-out", trace_out, "trace output directory");
    run->add_option("--trace-format", trace_formats, "chrome|csv (repeatable)");
    run->add_option("--workers", workers, "executor worker threads");

    // --- compare --------------------------------------------------------------
    auto* cmp = app.add_subcommand("compare", "compare two report files");
    std::string report_a, report_b;
    cmp->add_option("a", report_a, "first report")->required();
    cmp->add_option("b", report_b, "second report")->required();

    // --- probe-overhead -------------------------------------------------------
    auto* probe = app.add_subcommand("probe-overhead", "measure tracepoint emit cost");
    size_t iterations = 1000000;
    probe->add_option("--iterations", iterations, "emit count (>= 10000)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            flowtrace::bench::BenchConfig cfg = flowtrace::bench::load_bench_config(config_path);
            if (!variants.empty()) {
                cfg.variants.clear();
                for (const auto& v : variants) cfg.variants.push_back(flowtrace::pipe::parse_variant(v));
            }
            if (!mode.empty()) {
                if (mode == "real") cfg.mode = flowtrace::TimingMode::Real;
                else if (mode == "model") cfg.mode = flowtrace::TimingMode::Model;
                else throw flowtrace::ConfigError("--mode must be real|model");
            }
            if (messages >= 0) cfg.stop.messages = static_cast<uint64_t>(messages);
            if (duration_s >= 0) {
                cfg.stop.duration_s = duration_s;
                if (duration_s > 0) cfg.stop.messages = 0;
            }
            if (!out_path.empty()) cfg.out_path = out_path;
            if (!trace_out.empty()) cfg.trace_out_dir = trace_out;
            if (!trace_formats.empty()) cfg.trace_formats = trace_formats;
            if (workers > 0) cfg.workers = workers;
            cfg.finalize();

            const auto report = flowtrace::bench::run_bench(cfg);
            std::cout << flowtrace::bench::render_report_table(report);
            if (!cfg.out_path.empty()) {
                std::cout << "report written to " << cfg.out_path << "\n";
            }
        } else if (cmp->parsed()) {
            const auto a = load_json(report_a);
            const auto b = load_json(report_b);
            const auto result = flowtrace::bench::compare_reports(a, b);
            std::cout << flowtrace::bench::render_compare_table(result);
        } else if (probe->parsed()) {
            const auto r = flowtrace::overhead_probe(iterations);
            std::cout << "emit overhead (" << iterations << " iterations)\n";
            std::cout << "  enabled:  median " << r.enabled_median_ns << " ns, p99 "
                      << r.enabled_p99_ns << " ns\n";
            std::cout << "  disabled: median " << r.disabled_median_ns << " ns, p99 "
                      << r.disabled_p99_ns << " ns\n";
        }
    } catch (const flowtrace::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
