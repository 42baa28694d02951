// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowtrace/common.hpp"
#include "flowtrace/timebase.hpp"

namespace flowtrace {

/// Instrumentation points across the layered message path, node callbacks,
/// simulated device operations and intra-device stream queues.
enum class Tp : uint16_t {
    client_publish = 0,
    core_publish,
    middleware_publish,
    middleware_take,
    core_take,
    client_take,
    callback_start,
    callback_end,
    h2d_begin,
    h2d_end,
    kernel_begin,
    kernel_end,
    d2h_begin,
    d2h_end,
    stream_write_begin,
    stream_write_end,
    stream_read_begin,
    stream_read_end,
    count_
};

enum class TpCategory : uint8_t { publish_path, take_path, callback, device, queue };

struct Tracepoint {
    uint16_t id;
    const char* name;
    TpCategory category;
};

constexpr size_t kTracepointCount = static_cast<size_t>(Tp::count_);
const std::array<Tracepoint, kTracepointCount>& tracepoint_table();
const Tracepoint& tracepoint(Tp tp);
/// True for publish_path / take_path points (the host message stack).
bool is_host_layer(Tp tp);

/// One trace record. Fixed size, appended to a per-thread ring.
/// `arg` meaning depends on the tracepoint:
///   publish/take/callback  -> topic id
///   h2d/d2h                -> byte count
///   kernel                 -> output pixel count
///   stream_*               -> queue id
struct TraceEvent {
    int64_t ts;       // ns since session epoch (Real) or virtual ns (Model)
    uint64_t seq;     // message sequence
    uint64_t arg;     // auxiliary, see above
    int32_t node;     // node id, -1 when not attributable
    uint16_t tp;      // Tp
    uint16_t thread;  // small per-session thread index
};
static_assert(sizeof(TraceEvent) <= 48, "trace record must stay compact");

struct TraceSessionConfig {
    bool enabled = true;
    size_t ring_capacity = 1u << 16;  // events per thread
};

/// Everything a stopped session produced: time-sorted events plus the
/// symbol tables needed to interpret them.
struct TraceDump {
    std::vector<TraceEvent> events;
    uint64_t overflow = 0;  // events overwritten across all rings
    size_t threads = 0;
    int64_t epoch_ns = 0;
    std::string mode;  // "real" | "model" | "" when unset
    uint64_t config_hash = 0;
    std::map<uint32_t, std::string> topic_names;
    std::map<int32_t, std::string> node_names;
};

/// Trace collection session. Emission appends to a per-thread ring buffer
/// owned by the session; no lock is shared between emitting threads on the
/// hot path (registration of a new thread takes a lock once).
class TraceSession {
public:
    ~TraceSession();
    TraceSession(const TraceSession&) = delete;
    TraceSession& operator=(const TraceSession&) = delete;

    bool enabled() const { return enabled_; }

    /// Record an event timestamped with the monotonic clock (Real domain).
    void emit(Tp tp, int32_t node, uint64_t seq, uint64_t arg);
    /// Record an event with an explicit timestamp (virtual clocks).
    void emit_at(Tp tp, int64_t ts, int32_t node, uint64_t seq, uint64_t arg);

    void register_topic(uint32_t id, const std::string& name);
    void register_node(int32_t id, const std::string& name);
    void set_mode(const std::string& mode) { mode_ = mode; }
    void set_config_hash(uint64_t h) { config_hash_ = h; }

    int64_t epoch_ns() const { return epoch_ns_; }

private:
    TraceSession(const TraceSessionConfig& cfg);
    friend TraceSession& session_start(const TraceSessionConfig&);
    friend TraceDump session_stop(TraceSession&);

    struct ThreadRing;
    ThreadRing* ring_for_current_thread();

    bool enabled_;
    size_t capacity_;
    int64_t epoch_ns_;
    std::string mode_;
    uint64_t config_hash_ = 0;
    std::mutex reg_mu_;
    std::vector<std::unique_ptr<ThreadRing>> rings_;
    std::map<uint32_t, std::string> topic_names_;
    std::map<int32_t, std::string> node_names_;
    uint64_t generation_;
};

/// Starts the process-wide session. Throws RuntimeError on double start.
TraceSession& session_start(const TraceSessionConfig& cfg);
/// Stops the session and returns the merged, time-sorted dump.
TraceDump session_stop(TraceSession& session);
/// Active session, or nullptr.
TraceSession* active_session();

/// Convenience: emit through the given session (no-op when null or
/// disabled), timestamping from the current ExecContext when present.
inline void trace_emit(TraceSession* s, Tp tp, int32_t node, uint64_t seq, uint64_t arg) {
    if (!s || !s->enabled()) return;
    if (ExecContext* ctx = current_context()) {
        s->emit_at(tp, ctx->now(), node, seq, arg);
    } else {
        s->emit(tp, node, seq, arg);
    }
}

struct OverheadProbeResult {
    int64_t enabled_median_ns = 0;
    int64_t enabled_p99_ns = 0;
    int64_t disabled_median_ns = 0;
    int64_t disabled_p99_ns = 0;
};

/// Self-measures the cost of emit() with tracing enabled and disabled.
/// Requires iterations >= 10000 and no active session.
OverheadProbeResult overhead_probe(size_t iterations);

}  // namespace flowtrace
