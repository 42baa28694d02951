// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/trace_analysis.hpp"

#include <algorithm>
#include <optional>
#include <set>

namespace flowtrace {

namespace {

struct Hop {
    graph::NodeId publisher = -1;
    graph::NodeId subscriber = -1;
    std::string topic;
    bool stream = false;
};

// Main path from the unique sink backwards: a node's first subscription is
// its main input.
std::vector<Hop> derive_main_path(const graph::GraphSpec& spec, graph::NodeId& sink_out) {
    graph::NodeId sink = -1;
    int candidates = 0;
    for (const auto& n : spec.nodes) {
        if (n.publications.empty()) {
            sink = n.id;
            ++candidates;
        }
    }
    if (candidates != 1) {
        throw RuntimeError("analyze_breakdown: graph needs a unique sink node (found " +
                           std::to_string(candidates) + ")");
    }
    sink_out = sink;
    std::vector<Hop> rev;
    graph::NodeId current = sink;
    std::set<graph::NodeId> seen;
    while (true) {
        if (!seen.insert(current).second) {
            throw RuntimeError("analyze_breakdown: cycle on main path");
        }
        const graph::NodeDescriptor* node = spec.find_node(current);
        if (!node || node->subscriptions.empty()) break;
        const std::string& main_topic = node->subscriptions.front().topic;
        const graph::EdgeSpec* edge = nullptr;
        for (const auto& e : spec.edges) {
            if (e.subscriber == current && e.topic == main_topic) {
                edge = &e;
                break;
            }
        }
        if (!edge) break;  // subscription with no inbound edge: path starts here
        Hop hop;
        hop.publisher = edge->publisher;
        hop.subscriber = current;
        hop.topic = edge->topic;
        hop.stream = edge->kind.is_stream();
        rev.push_back(hop);
        current = edge->publisher;
    }
    std::reverse(rev.begin(), rev.end());
    return rev;
}

struct Point {
    int64_t ts;
    std::string segment_after;  // name of the segment this point opens
    bool compute_after;         // classification of that segment
};

struct ChainBuilder {
    // events indexed by (tp, node, seq) -> sorted ts list
    std::map<std::tuple<uint16_t, int32_t, uint64_t>, std::vector<const TraceEvent*>> index;
    // device/queue events per (node, seq), time-ordered
    std::map<std::pair<int32_t, uint64_t>, std::vector<const TraceEvent*>> device_index;
    std::map<uint32_t, std::string> topic_names;
    std::map<int32_t, std::string> node_names;

    std::string topic_label(uint32_t id) const {
        auto it = topic_names.find(id);
        return it != topic_names.end() ? it->second : "topic" + std::to_string(id);
    }
    std::string node_label(int32_t id) const {
        auto it = node_names.find(id);
        return it != node_names.end() ? it->second : "node" + std::to_string(id);
    }

    const TraceEvent* find(Tp tp, int32_t node, uint64_t seq, std::optional<uint64_t> arg = {},
                           int64_t not_before = INT64_MIN) const {
        auto it = index.find({static_cast<uint16_t>(tp), node, seq});
        if (it == index.end()) return nullptr;
        for (const TraceEvent* ev : it->second) {
            if (arg && ev->arg != *arg) continue;
            if (ev->ts < not_before) continue;
            return ev;
        }
        return nullptr;
    }
};

int64_t percentile_sorted(const std::vector<int64_t>& sorted, double p) {
    if (sorted.empty()) return 0;
    const size_t idx = static_cast<size_t>(p * static_cast<double>(sorted.size() - 1) + 0.5);
    return sorted[std::min(idx, sorted.size() - 1)];
}

}  // namespace

SegmentStats make_segment_stats(std::vector<int64_t> samples, std::string klass) {
    SegmentStats s;
    s.klass = std::move(klass);
    s.count = samples.size();
    if (samples.empty()) return s;
    long double sum = 0;
    for (int64_t v : samples) sum += static_cast<long double>(v);
    s.mean_ns = static_cast<double>(sum / static_cast<long double>(samples.size()));
    std::sort(samples.begin(), samples.end());
    s.p50_ns = percentile_sorted(samples, 0.50);
    s.p95_ns = percentile_sorted(samples, 0.95);
    s.max_ns = samples.back();
    return s;
}


LatencyBreakdown analyze_breakdown(const TraceDump& dump, const graph::GraphSpec& spec,
                                   const AnalyzeOptions& options) {
    graph::NodeId sink = -1;
    const std::vector<Hop> path = derive_main_path(spec, sink);

    ChainBuilder cb;
    cb.topic_names = dump.topic_names;
    cb.node_names = dump.node_names;
    for (const auto& ev : dump.events) {
        cb.index[{ev.tp, ev.node, ev.seq}].push_back(&ev);
        const TpCategory cat = tracepoint(static_cast<Tp>(ev.tp)).category;
        if (cat == TpCategory::device) {
            cb.device_index[{ev.node, ev.seq}].push_back(&ev);
        }
    }

    // Topic ids are only present in the dump's symbol table.
    std::map<std::string, uint32_t> topic_id_by_name;
    for (const auto& [id, name] : dump.topic_names) topic_id_by_name[name] = id;

    // Sequences observed at the sink's callback_end.
    std::set<uint64_t> seqs;
    for (const auto& ev : dump.events) {
        if (ev.node == sink && static_cast<Tp>(ev.tp) == Tp::callback_end) seqs.insert(ev.seq);
    }

    LatencyBreakdown out;
    std::map<std::string, std::vector<int64_t>> per_segment;
    std::map<std::string, bool> segment_is_compute;
    std::vector<int64_t> e2e, msg_total, cmp_total;

    for (uint64_t seq : seqs) {
        if (seq < options.skip_seq_below) {
            ++out.skipped_warmup;
            continue;
        }
        std::vector<Point> points;
        bool complete = true;
        int64_t cursor = INT64_MIN;

        auto push = [&](const TraceEvent* ev, const std::string& seg_after, bool compute_after) {
            if (!ev) {
                complete = false;
                return INT64_MIN;
            }
            points.push_back(Point{ev->ts, seg_after, compute_after});
            return ev->ts;
        };

        for (size_t h = 0; h < path.size() && complete; ++h) {
            const Hop& hop = path[h];
            const std::string& tl = hop.topic;
            std::optional<uint64_t> tid;
            if (auto it = topic_id_by_name.find(tl); it != topic_id_by_name.end()) {
                tid = it->second;
            }
            if (hop.stream) {
                const auto* swb = cb.find(Tp::stream_write_begin, hop.publisher, seq, {}, cursor);
                cursor = push(swb, tl + "|stream_write", false);
                const auto* swe = cb.find(Tp::stream_write_end, hop.publisher, seq, {}, cursor);
                cursor = push(swe, tl + "|stream_wait", false);
                const auto* srb = cb.find(Tp::stream_read_begin, hop.subscriber, seq, {}, cursor);
                cursor = push(srb, tl + "|stream_read", false);
                const auto* sre = cb.find(Tp::stream_read_end, hop.subscriber, seq, {}, cursor);
                cursor = push(sre, tl + "|dispatch", false);
            } else {
                const auto* cp = cb.find(Tp::client_publish, hop.publisher, seq, tid, cursor);
                cursor = push(cp, tl + "|client_publish", false);
                const auto* corp = cb.find(Tp::core_publish, hop.publisher, seq, tid, cursor);
                cursor = push(corp, tl + "|core_publish", false);
                const auto* mwp = cb.find(Tp::middleware_publish, hop.publisher, seq, tid, cursor);
                cursor = push(mwp, tl + "|transport", false);
                const auto* mwt = cb.find(Tp::middleware_take, hop.subscriber, seq, tid, cursor);
                cursor = push(mwt, tl + "|middleware_take", false);
                const auto* cot = cb.find(Tp::core_take, hop.subscriber, seq, tid, cursor);
                cursor = push(cot, tl + "|core_take", false);
                const auto* clt = cb.find(Tp::client_take, hop.subscriber, seq, tid, cursor);
                cursor = push(clt, tl + "|dispatch", false);
            }
            if (!complete) break;

            // Subscriber region: callback_start, device intervals, up to the
            // next hop's first point (or callback_end at the sink).
            const graph::NodeId region_node = hop.subscriber;
            const std::string nl = cb.node_label(region_node);
            std::optional<uint64_t> cb_arg;
            if (auto it = topic_id_by_name.find(tl); it != topic_id_by_name.end()) {
                cb_arg = it->second;
            }
            const auto* cbs = cb.find(Tp::callback_start, region_node, seq, cb_arg, cursor);
            if (!cbs) {
                complete = false;
                break;
            }
            cursor = push(cbs, nl + "|callback", true);
            // Device / queue intervals nested in this callback.
            auto dit = cb.device_index.find({region_node, seq});
            if (dit != cb.device_index.end()) {
                for (const TraceEvent* ev : dit->second) {
                    if (ev->ts < cursor) continue;
                    const Tp tp = static_cast<Tp>(ev->tp);
                    switch (tp) {
                        case Tp::h2d_begin:
                            cursor = push(ev, nl + "|h2d", false);
                            break;
                        case Tp::h2d_end:
                            cursor = push(ev, nl + "|callback", true);
                            break;
                        case Tp::kernel_begin:
                            cursor = push(ev, nl + "|kernel", true);
                            break;
                        case Tp::kernel_end:
                            cursor = push(ev, nl + "|callback", true);
                            break;
                        case Tp::d2h_begin:
                            cursor = push(ev, nl + "|d2h", false);
                            break;
                        case Tp::d2h_end:
                            cursor = push(ev, nl + "|callback", true);
                            break;
                        default:
                            break;
                    }
                    if (!complete) break;
                }
            }
            if (!complete) break;
            if (h + 1 == path.size()) {
                const auto* cbe = cb.find(Tp::callback_end, region_node, seq, cb_arg, cursor);
                if (!cbe) {
                    complete = false;
                    break;
                }
                points.push_back(Point{cbe->ts, "", false});
            }
            // Otherwise the next hop's first point closes this region; the
            // open segment name ("<node>|callback" or a device segment) was
            // already recorded on the previous point.
        }

        if (path.empty()) {
            // Degenerate single-node graph: the chain is just the sink's
            // callback interval.
            const auto* cbs = cb.find(Tp::callback_start, sink, seq);
            const auto* cbe = cb.find(Tp::callback_end, sink, seq);
            if (cbs && cbe && cbe->ts >= cbs->ts) {
                points.clear();
                points.push_back(Point{cbs->ts, cb.node_label(sink) + "|callback", true});
                points.push_back(Point{cbe->ts, "", false});
                complete = true;
            } else {
                complete = false;
            }
        }

        if (!complete || points.size() < 2) {
            ++out.incomplete_chains;
            continue;
        }
        // Monotonicity along the chain (clock domain sanity).
        bool monotone = true;
        for (size_t i = 1; i < points.size(); ++i) {
            if (points[i].ts < points[i - 1].ts) monotone = false;
        }
        if (!monotone) {
            ++out.incomplete_chains;
            continue;
        }

        std::map<std::string, int64_t> chain_sums;
        int64_t messaging = 0, compute = 0;
        for (size_t i = 0; i + 1 < points.size(); ++i) {
            const int64_t dur = points[i + 1].ts - points[i].ts;
            chain_sums[points[i].segment_after] += dur;
            segment_is_compute[points[i].segment_after] = points[i].compute_after;
            (points[i].compute_after ? compute : messaging) += dur;
        }
        const int64_t total = points.back().ts - points.front().ts;
        // Telescoping identity; if this ever fires the builder is broken.
        if (messaging + compute != total) {
            throw RuntimeError("analyze_breakdown: segment partition does not sum to end-to-end");
        }
        for (const auto& [name, dur] : chain_sums) per_segment[name].push_back(dur);
        e2e.push_back(total);
        msg_total.push_back(messaging);
        cmp_total.push_back(compute);
        ++out.complete_chains;
    }

    if (out.complete_chains == 0) {
        throw RuntimeError("analyze_breakdown: zero complete chains in dump");
    }

    for (auto& [name, samples] : per_segment) {
        out.segments[name] =
            make_segment_stats(samples, segment_is_compute[name] ? "compute" : "messaging");
    }
    out.end_to_end_samples = e2e;
    out.messaging_total = make_segment_stats(std::move(msg_total), "total");
    out.compute_total = make_segment_stats(std::move(cmp_total), "total");
    out.end_to_end = make_segment_stats(std::move(e2e), "total");
    out.messaging_fraction =
        out.end_to_end.mean_ns > 0 ? out.messaging_total.mean_ns / out.end_to_end.mean_ns : 0.0;
    out.compute_fraction = 1.0 - out.messaging_fraction;
    return out;
}

}  // namespace flowtrace
