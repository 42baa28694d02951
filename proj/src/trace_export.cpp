// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/trace_export.hpp"

#include <fstream>
#include <map>
#include <vector>

#include <json.hpp>

namespace flowtrace {

namespace {

const char* category_name(TpCategory c) {
    switch (c) {
        case TpCategory::publish_path: return "publish_path";
        case TpCategory::take_path: return "take_path";
        case TpCategory::callback: return "callback";
        case TpCategory::device: return "device";
        case TpCategory::queue: return "queue";
    }
    return "?";
}

// begin tracepoint -> (expected end, duration-event name)
const std::map<Tp, std::pair<Tp, const char*>>& pair_table() {
    static const std::map<Tp, std::pair<Tp, const char*>> t = {
        {Tp::callback_start, {Tp::callback_end, "callback"}},
        {Tp::h2d_begin, {Tp::h2d_end, "h2d"}},
        {Tp::kernel_begin, {Tp::kernel_end, "kernel"}},
        {Tp::d2h_begin, {Tp::d2h_end, "d2h"}},
        {Tp::stream_write_begin, {Tp::stream_write_end, "stream_write"}},
        {Tp::stream_read_begin, {Tp::stream_read_end, "stream_read"}},
    };
    return t;
}

double to_us(int64_t ns) {
    // Keep the sub-microsecond part to three decimals.
    return static_cast<double>(ns) / 1000.0;
}

}  // namespace

void export_chrome(const TraceDump& dump, const std::string& path) {
    using json = nlohmann::ordered_json;
    json events = json::array();

    auto args_for = [&](const TraceEvent& ev) {
        json a;
        a["node"] = ev.node;
        auto nit = dump.node_names.find(ev.node);
        if (nit != dump.node_names.end()) a["node_name"] = nit->second;
        a["seq"] = ev.seq;
        const Tp tp = static_cast<Tp>(ev.tp);
        const TpCategory cat = tracepoint(tp).category;
        if (cat == TpCategory::publish_path || cat == TpCategory::take_path ||
            cat == TpCategory::callback) {
            auto tit = dump.topic_names.find(static_cast<uint32_t>(ev.arg));
            if (tit != dump.topic_names.end()) a["topic"] = tit->second;
            else a["arg"] = ev.arg;
        } else {
            a["arg"] = ev.arg;
        }
        return a;
    };

    // Pair begin/end by (tp, node, seq): per-thread stacks are unnecessary
    // because a node's callback never overlaps itself.
    std::map<std::tuple<uint16_t, int32_t, uint64_t, uint64_t>, std::vector<const TraceEvent*>>
        open;
    for (const auto& ev : dump.events) {
        const Tp tp = static_cast<Tp>(ev.tp);
        auto pit = pair_table().find(tp);
        if (pit != pair_table().end()) {
            open[{ev.tp, ev.node, ev.seq, ev.arg}].push_back(&ev);
            continue;
        }
        bool is_end = false;
        for (const auto& [begin, val] : pair_table()) {
            if (val.first == tp) {
                // Match the oldest unmatched begin.
                auto key = std::make_tuple(static_cast<uint16_t>(begin), ev.node, ev.seq, ev.arg);
                auto oit = open.find(key);
                if (oit != open.end() && !oit->second.empty()) {
                    const TraceEvent* b = oit->second.front();
                    oit->second.erase(oit->second.begin());
                    json e;
                    e["name"] = val.second;
                    e["cat"] = category_name(tracepoint(tp).category);
                    e["ph"] = "X";
                    e["ts"] = to_us(b->ts);
                    e["dur"] = to_us(ev.ts - b->ts);
                    e["pid"] = 1;
                    e["tid"] = b->thread;
                    e["args"] = args_for(*b);
                    events.push_back(std::move(e));
                }
                is_end = true;
                break;
            }
        }
        if (is_end) continue;
        json e;
        e["name"] = tracepoint(tp).name;
        e["cat"] = category_name(tracepoint(tp).category);
        e["ph"] = "i";
        e["ts"] = to_us(ev.ts);
        e["pid"] = 1;
        e["tid"] = ev.thread;
        e["s"] = "t";
        e["args"] = args_for(ev);
        events.push_back(std::move(e));
    }
    // Unmatched begins (truncated rings) degrade to instants.
    for (const auto& [key, list] : open) {
        for (const TraceEvent* b : list) {
            json e;
            e["name"] = tracepoint(static_cast<Tp>(b->tp)).name;
            e["cat"] = category_name(tracepoint(static_cast<Tp>(b->tp)).category);
            e["ph"] = "i";
            e["ts"] = to_us(b->ts);
            e["pid"] = 1;
            e["tid"] = b->thread;
            e["s"] = "t";
            e["args"] = args_for(*b);
            events.push_back(std::move(e));
        }
    }

    std::ofstream out(path);
    if (!out) throw RuntimeError("export_chrome: cannot open " + path);
    out << events.dump(1) << "\n";
    if (!out) throw RuntimeError("export_chrome: write failed for " + path);
}

void export_csv(const TraceDump& dump, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw RuntimeError("export_csv: cannot open " + path);
    out << "ts_ns,tp_name,thread,node,seq,arg\n";
    for (const auto& ev : dump.events) {
        out << ev.ts << "," << tracepoint(static_cast<Tp>(ev.tp)).name << "," << ev.thread << ","
            << ev.node << "," << ev.seq << "," << ev.arg << "\n";
    }
    if (!out) throw RuntimeError("export_csv: write failed for " + path);
}

void export_dump(const TraceDump& dump, const std::string& format, const std::string& path) {
    if (format == "chrome_trace_json" || format == "chrome") {
        export_chrome(dump, path);
    } else if (format == "csv") {
        export_csv(dump, path);
    } else {
        throw ConfigError("unknown trace export format: " + format);
    }
}

}  // namespace flowtrace
