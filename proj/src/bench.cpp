// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/bench.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowtrace/trace_analysis.hpp"
#include "flowtrace/trace_export.hpp"

namespace flowtrace::bench {

using nlohmann::json;
using nlohmann::ordered_json;

double speedup_percent(double t_base_ns, double t_other_ns) {
    if (t_base_ns <= 0) throw ConfigError("speedup: baseline must be positive");
    return (t_base_ns - t_other_ns) / t_base_ns * 100.0;
}

namespace {

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

ordered_json stats_json(const SegmentStats& s) {
    ordered_json j;
    j["mean"] = s.mean_ns;
    j["p50"] = s.p50_ns;
    j["p95"] = s.p95_ns;
    j["max"] = s.max_ns;
    j["count"] = s.count;
    return j;
}

std::string trace_file_name(const std::string& variant, const std::string& format) {
    return variant + (format == "csv" ? ".trace.csv" : ".trace.json");
}

}  // namespace

ordered_json run_bench(const BenchConfig& cfg_in) {
    BenchConfig cfg = cfg_in;
    cfg.finalize();
    const CostModel cost = cfg.resolve_cost();
    const uint64_t config_hash = fnv1a64(canonical_config(cfg));
    const std::string mode_name = cfg.mode == TimingMode::Model ? "model" : "real";

    ordered_json report;
    report["schema"] = "flowtrace-report-v1";
    report["generated_at"] = iso_now();
    report["config_hash"] = to_hex(config_hash);
    report["mode"] = mode_name;
    report["variants"] = ordered_json::array();

    if (!cfg.trace_out_dir.empty()) {
        std::filesystem::create_directories(cfg.trace_out_dir);
    }

    std::map<std::string, double> mean_by_variant;

    for (const pipe::PipelineVariant variant : cfg.variants) {
        const std::string vname = pipe::to_string(variant);

        sim::BackendRegistry registry;
        registry.register_backend("cpu", std::make_shared<sim::CpuBackend>());
        if (cfg.backend != "cpu") {
            auto dev = std::make_shared<sim::Device>(0, cfg.backend + "0", cost, cfg.mode);
            sim::register_image_kernels(*dev);
            registry.register_backend(cfg.backend,
                                      std::make_shared<sim::SimDeviceBackend>(cfg.backend, dev));
        }
        const std::string backend_name =
            variant == pipe::PipelineVariant::CpuBaseline ? "cpu" : cfg.backend;

        pipe::SourceConfig source = cfg.source;
        if (cfg.stop.messages > 0) source.count = cfg.stop.messages;

        pipe::Pipeline pl = pipe::build_pipeline(variant, source, cfg.resize, backend_name,
                                                 registry, cost, cfg.workers);

        TraceSession* session = nullptr;
        if (cfg.tracing.enabled) {
            session = &session_start({true, cfg.tracing.ring_capacity});
            session->set_mode(mode_name);
            session->set_config_hash(config_hash);
        }

        graph::GraphOptions opt;
        opt.mode = cfg.mode;
        opt.session = session;
        opt.cost = cost;
        opt.devices = pl.devices;
        opt.queue_depth = cfg.queue_depth;
        opt.payload_copy = cfg.payload_copy;

        auto g = graph::Graph::create(pl.spec, opt);
        pl.wire(*g);

        graph::StopCondition stop;
        stop.sink_node = pl.sink_node;
        if (cfg.stop.messages > 0) {
            stop.messages = cfg.stop.messages;
        } else {
            stop.duration_ns = static_cast<int64_t>(std::llround(cfg.stop.duration_s * 1e9));
        }
        g->spin(stop);

        std::optional<LatencyBreakdown> bd;
        if (session) {
            TraceDump dump = session_stop(*session);
            session = nullptr;
            for (const auto& fmt : cfg.trace_formats) {
                if (cfg.trace_out_dir.empty()) break;
                const auto path =
                    std::filesystem::path(cfg.trace_out_dir) / trace_file_name(vname, fmt);
                export_dump(dump, fmt == "chrome" ? "chrome_trace_json" : fmt, path.string());
            }
            AnalyzeOptions ao;
            ao.skip_seq_below = static_cast<uint64_t>(cfg.warmup_frames);
            bd = analyze_breakdown(dump, pl.spec, ao);
        }

        const auto sink_records = pl.sink->snapshot();

        ordered_json vj;
        vj["variant"] = vname;
        vj["mode"] = mode_name;

        // Sink-side origin->arrival latency is always available; it is the
        // whole story when tracing is off and a cross-check otherwise.
        std::vector<int64_t> sink_samples;
        for (const auto& r : sink_records) {
            if (r.seq < static_cast<uint64_t>(cfg.warmup_frames)) continue;
            sink_samples.push_back(r.arrival_ts - r.origin_ts);
        }
        if (!bd && sink_samples.empty()) {
            throw RuntimeError("bench: variant " + vname + " produced no measurable frames");
        }
        const SegmentStats sink_e2e = make_segment_stats(std::move(sink_samples), "total");

        SegmentStats e2e;
        if (bd) {
            e2e = bd->end_to_end;
            vj["frames"] = bd->complete_chains;
        } else {
            e2e = sink_e2e;
            vj["frames"] = e2e.count;
        }
        vj["end_to_end_ns"] = stats_json(e2e);
        vj["sink_end_to_end_ns"] = stats_json(sink_e2e);
        if (bd) {
            vj["messaging_fraction"] = bd->messaging_fraction;
            vj["compute_fraction"] = bd->compute_fraction;
            vj["messaging_total_ns"] = stats_json(bd->messaging_total);
            vj["compute_total_ns"] = stats_json(bd->compute_total);
            vj["incomplete_chains"] = bd->incomplete_chains;
            ordered_json segs;
            for (const auto& [name, st] : bd->segments) {
                ordered_json sj = stats_json(st);
                sj["class"] = st.klass;
                segs[name] = std::move(sj);
            }
            vj["segments"] = std::move(segs);
        }
        vj["sink_frames"] = sink_records.size();
        vj["sink_hash"] = to_hex(pl.sink->combined_hash());
        report["variants"].push_back(std::move(vj));
        mean_by_variant[vname] = e2e.mean_ns;
    }

    report["comparisons"] = ordered_json::array();
    if (mean_by_variant.count("cpu")) {
        const double base = mean_by_variant.at("cpu");
        for (const pipe::PipelineVariant variant : cfg.variants) {
            const std::string vname = pipe::to_string(variant);
            ordered_json c;
            c["baseline"] = "cpu";
            c["variant"] = vname;
            c["baseline_mean_ns"] = base;
            c["variant_mean_ns"] = mean_by_variant.at(vname);
            c["speedup_pct"] = speedup_percent(base, mean_by_variant.at(vname));
            report["comparisons"].push_back(std::move(c));
        }
    }

    if (!cfg.out_path.empty()) {
        std::ofstream out(cfg.out_path);
        if (!out) throw RuntimeError("cannot write report: " + cfg.out_path);
        out << report.dump(2) << "\n";
    }
    return report;
}

ordered_json compare_reports(const json& a, const json& b) {
    if (!a.contains("schema") || !b.contains("schema") || a["schema"] != b["schema"]) {
        throw ConfigError("compare: report schema mismatch");
    }
    auto variants_of = [](const json& r) {
        std::map<std::string, json> out;
        for (const auto& v : r.at("variants")) out[v.at("variant").get<std::string>()] = v;
        return out;
    };
    const auto va = variants_of(a);
    const auto vb = variants_of(b);

    ordered_json cmp;
    cmp["schema"] = "flowtrace-compare-v1";
    cmp["a_config_hash"] = a.value("config_hash", "");
    cmp["b_config_hash"] = b.value("config_hash", "");
    cmp["variants"] = ordered_json::array();
    cmp["cross_baseline"] = ordered_json::array();

    bool comparable = false;
    for (const auto& [name, ja] : va) {
        auto it = vb.find(name);
        if (it == vb.end()) continue;
        comparable = true;
        const json& jb = it->second;
        const double ma = ja.at("end_to_end_ns").at("mean").get<double>();
        const double mb = jb.at("end_to_end_ns").at("mean").get<double>();
        ordered_json row;
        row["variant"] = name;
        row["a_mean_ns"] = ma;
        row["b_mean_ns"] = mb;
        row["delta_ns"] = mb - ma;
        row["speedup_pct"] = speedup_percent(ma, mb);
        if (ja.contains("segments") && jb.contains("segments")) {
            ordered_json segs;
            for (const auto& [sname, sa] : ja.at("segments").items()) {
                if (!jb.at("segments").contains(sname)) continue;
                const double s_a = sa.at("mean").get<double>();
                const double s_b = jb.at("segments").at(sname).at("mean").get<double>();
                ordered_json srow;
                srow["a_mean_ns"] = s_a;
                srow["b_mean_ns"] = s_b;
                srow["delta_ns"] = s_b - s_a;
                segs[sname] = std::move(srow);
            }
            row["segments"] = std::move(segs);
        }
        cmp["variants"].push_back(std::move(row));
    }
    // Cross-baseline: report B's variants against report A's cpu baseline,
    // the cross-solution comparison use case.
    if (va.count("cpu")) {
        const double base = va.at("cpu").at("end_to_end_ns").at("mean").get<double>();
        for (const auto& [name, jb] : vb) {
            const double mb = jb.at("end_to_end_ns").at("mean").get<double>();
            ordered_json row;
            row["baseline"] = "cpu(a)";
            row["variant"] = name + "(b)";
            row["speedup_pct"] = speedup_percent(base, mb);
            cmp["cross_baseline"].push_back(std::move(row));
            comparable = true;
        }
    }
    if (!comparable) {
        throw ConfigError("compare: reports share no variant and no cpu baseline");
    }
    return cmp;
}

namespace {
std::string fixed(double v, int prec = 2) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(prec) << v;
    return out.str();
}
}  // namespace

std::string render_report_table(const json& report) {
    std::ostringstream out;
    out << "mode: " << report.value("mode", "?")
        << "   config: " << report.value("config_hash", "?") << "\n";
    out << std::left << std::setw(11) << "variant" << std::right << std::setw(9) << "frames"
        << std::setw(16) << "mean_ms" << std::setw(12) << "p95_ms" << std::setw(12) << "msg_frac"
        << std::setw(13) << "speedup_%" << "\n";
    std::map<std::string, double> speedups;
    if (report.contains("comparisons")) {
        for (const auto& c : report.at("comparisons")) {
            speedups[c.at("variant").get<std::string>()] = c.at("speedup_pct").get<double>();
        }
    }
    for (const auto& v : report.at("variants")) {
        const std::string name = v.at("variant").get<std::string>();
        out << std::left << std::setw(11) << name;
        out << std::right << std::setw(9) << v.at("frames").get<uint64_t>();
        out << std::setw(16) << fixed(v.at("end_to_end_ns").at("mean").get<double>() / 1e6, 4);
        out << std::setw(12) << fixed(v.at("end_to_end_ns").at("p95").get<int64_t>() / 1e6, 4);
        if (v.contains("messaging_fraction")) {
            out << std::setw(12) << fixed(v.at("messaging_fraction").get<double>(), 4);
        } else {
            out << std::setw(12) << "-";
        }
        if (speedups.count(name)) {
            out << std::setw(13) << fixed(speedups.at(name));
        } else {
            out << std::setw(13) << "-";
        }
        out << "\n";
    }
    return out.str();
}

std::string render_compare_table(const json& cmp) {
    std::ostringstream out;
    out << std::left << std::setw(12) << "variant" << std::right << std::setw(16) << "a_mean_ms"
        << std::setw(16) << "b_mean_ms" << std::setw(14) << "delta_ms" << std::setw(13)
        << "speedup_%" << "\n";
    for (const auto& row : cmp.at("variants")) {
        out << std::left << std::setw(12) << row.at("variant").get<std::string>();
        out << std::right << std::setw(16) << fixed(row.at("a_mean_ns").get<double>() / 1e6, 4);
        out << std::setw(16) << fixed(row.at("b_mean_ns").get<double>() / 1e6, 4);
        out << std::setw(14) << fixed(row.at("delta_ns").get<double>() / 1e6, 4);
        out << std::setw(13) << fixed(row.at("speedup_pct").get<double>());
        out << "\n";
    }
    for (const auto& row : cmp.at("cross_baseline")) {
        out << row.at("baseline").get<std::string>() << " -> "
            << row.at("variant").get<std::string>() << ": "
            << fixed(row.at("speedup_pct").get<double>()) << "% speedup\n";
    }
    return out.str();
}

}  // namespace flowtrace::bench
