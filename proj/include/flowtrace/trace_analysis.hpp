// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "flowtrace/graph.hpp"
#include "flowtrace/tracer.hpp"

namespace flowtrace {

struct SegmentStats {
    double mean_ns = 0;
    int64_t p50_ns = 0;
    int64_t p95_ns = 0;
    int64_t max_ns = 0;
    uint64_t count = 0;
    std::string klass;  // "messaging" | "compute" | "total"
};

/// Per-segment latency statistics reconstructed from a trace dump. The
/// segments of one message's chain partition its end-to-end interval
/// exactly (integer ns, no tolerance).
struct LatencyBreakdown {
    std::map<std::string, SegmentStats> segments;
    SegmentStats messaging_total;
    SegmentStats compute_total;
    SegmentStats end_to_end;
    double messaging_fraction = 0;
    double compute_fraction = 0;  // always 1 - messaging_fraction
    uint64_t complete_chains = 0;
    uint64_t incomplete_chains = 0;
    uint64_t skipped_warmup = 0;
    std::vector<int64_t> end_to_end_samples;  // per complete chain, seq order
};

/// Mean/percentile aggregation over integer nanosecond samples.
SegmentStats make_segment_stats(std::vector<int64_t> samples, std::string klass);

struct AnalyzeOptions {
    uint64_t skip_seq_below = 0;  // warm-up exclusion
};

/// Reconstructs each message's causal chain along the graph's main path
/// (derived from the sink backwards via first subscriptions), classifies
/// the segments, and aggregates. Throws RuntimeError when no complete
/// chain exists.
LatencyBreakdown analyze_breakdown(const TraceDump& dump, const graph::GraphSpec& spec,
                                   const AnalyzeOptions& options = {});

}  // namespace flowtrace
