// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/tracer.hpp"

#include <algorithm>
#include <numeric>

namespace flowtrace {

namespace {
thread_local ExecContext* t_ctx = nullptr;
std::atomic<TraceSession*> g_active{nullptr};
std::atomic<uint64_t> g_generation{1};

// Thread-local fast path: cache of (session generation -> ring).
struct EmitCache {
    uint64_t generation = 0;
    void* ring = nullptr;
};
thread_local EmitCache t_cache;
}  // namespace

ExecContext* current_context() { return t_ctx; }

ScopedContext::ScopedContext(ExecContext* ctx) : prev_(t_ctx) { t_ctx = ctx; }
ScopedContext::~ScopedContext() { t_ctx = prev_; }

const std::array<Tracepoint, kTracepointCount>& tracepoint_table() {
    static const std::array<Tracepoint, kTracepointCount> table = {{
        {0, "client_publish", TpCategory::publish_path},
        {1, "core_publish", TpCategory::publish_path},
        {2, "middleware_publish", TpCategory::publish_path},
        {3, "middleware_take", TpCategory::take_path},
        {4, "core_take", TpCategory::take_path},
        {5, "client_take", TpCategory::take_path},
        {6, "callback_start", TpCategory::callback},
        {7, "callback_end", TpCategory::callback},
        {8, "h2d_begin", TpCategory::device},
        {9, "h2d_end", TpCategory::device},
        {10, "kernel_begin", TpCategory::device},
        {11, "kernel_end", TpCategory::device},
        {12, "d2h_begin", TpCategory::device},
        {13, "d2h_end", TpCategory::device},
        {14, "stream_write_begin", TpCategory::queue},
        {15, "stream_write_end", TpCategory::queue},
        {16, "stream_read_begin", TpCategory::queue},
        {17, "stream_read_end", TpCategory::queue},
    }};
    return table;
}

const Tracepoint& tracepoint(Tp tp) { return tracepoint_table()[static_cast<size_t>(tp)]; }

bool is_host_layer(Tp tp) {
    const TpCategory c = tracepoint(tp).category;
    return c == TpCategory::publish_path || c == TpCategory::take_path;
}

struct TraceSession::ThreadRing {
    // Default-initialized storage: no up-front memset of a possibly large
    // ring on the emitting thread's hot path; pages fault in as written.
    explicit ThreadRing(size_t cap, uint16_t index)
        : buf(new TraceEvent[cap]), capacity(cap), thread_index(index) {}
    std::unique_ptr<TraceEvent[]> buf;
    size_t capacity;
    uint64_t write_count = 0;  // monotone; buf[write_count % capacity]
    uint16_t thread_index;
};

TraceSession::TraceSession(const TraceSessionConfig& cfg)
    : enabled_(cfg.enabled),
      capacity_(std::max<size_t>(1, cfg.ring_capacity)),
      epoch_ns_(monotonic_ns()),
      generation_(g_generation.fetch_add(1) + 1) {}

TraceSession::~TraceSession() = default;

TraceSession::ThreadRing* TraceSession::ring_for_current_thread() {
    if (t_cache.generation == generation_) return static_cast<ThreadRing*>(t_cache.ring);
    std::lock_guard<std::mutex> lk(reg_mu_);
    auto ring = std::make_unique<ThreadRing>(capacity_, static_cast<uint16_t>(rings_.size()));
    ThreadRing* raw = ring.get();
    rings_.push_back(std::move(ring));
    t_cache.generation = generation_;
    t_cache.ring = raw;
    return raw;
}

void TraceSession::emit(Tp tp, int32_t node, uint64_t seq, uint64_t arg) {
    if (!enabled_) return;
    emit_at(tp, monotonic_ns() - epoch_ns_, node, seq, arg);
}

void TraceSession::emit_at(Tp tp, int64_t ts, int32_t node, uint64_t seq, uint64_t arg) {
    if (!enabled_) return;
    ThreadRing* r = ring_for_current_thread();
    TraceEvent& ev = r->buf[r->write_count % r->capacity];
    ev.ts = ts;
    ev.seq = seq;
    ev.arg = arg;
    ev.node = node;
    ev.tp = static_cast<uint16_t>(tp);
    ev.thread = r->thread_index;
    ++r->write_count;
}

void TraceSession::register_topic(uint32_t id, const std::string& name) {
    std::lock_guard<std::mutex> lk(reg_mu_);
    topic_names_[id] = name;
}

void TraceSession::register_node(int32_t id, const std::string& name) {
    std::lock_guard<std::mutex> lk(reg_mu_);
    node_names_[id] = name;
}

TraceSession& session_start(const TraceSessionConfig& cfg) {
    TraceSession* expected = nullptr;
    auto* s = new TraceSession(cfg);
    if (!g_active.compare_exchange_strong(expected, s)) {
        delete s;
        throw RuntimeError("trace session already active");
    }
    return *s;
}

TraceDump session_stop(TraceSession& session) {
    TraceSession* expected = &session;
    if (!g_active.compare_exchange_strong(expected, nullptr)) {
        throw RuntimeError("no active trace session (or stopping a stale one)");
    }
    TraceDump dump;
    dump.epoch_ns = session.epoch_ns_;
    dump.mode = session.mode_;
    dump.config_hash = session.config_hash_;
    {
        std::lock_guard<std::mutex> lk(session.reg_mu_);
        dump.threads = session.rings_.size();
        dump.topic_names = session.topic_names_;
        dump.node_names = session.node_names_;
        for (const auto& ring : session.rings_) {
            const size_t cap = ring->capacity;
            const uint64_t n = ring->write_count;
            const uint64_t kept = std::min<uint64_t>(n, cap);
            dump.overflow += n - kept;
            // Oldest retained entry first.
            for (uint64_t i = n - kept; i < n; ++i) {
                dump.events.push_back(ring->buf[i % cap]);
            }
        }
    }
    // Stable so that equal-timestamp events keep per-thread emission order.
    std::stable_sort(dump.events.begin(), dump.events.end(),
                     [](const TraceEvent& a, const TraceEvent& b) { return a.ts < b.ts; });
    delete &session;
    return dump;
}

TraceSession* active_session() { return g_active.load(std::memory_order_acquire); }

namespace {
int64_t percentile(std::vector<int64_t>& v, double p) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    size_t idx = static_cast<size_t>(p * static_cast<double>(v.size() - 1) + 0.5);
    return v[std::min(idx, v.size() - 1)];
}

// Emits in batches and divides the batch wall time, so the clock reads do
// not dominate the per-emit figure.
std::pair<int64_t, int64_t> probe_one(bool enabled, size_t iterations) {
    TraceSession& s = session_start({enabled, 1u << 16});
    constexpr size_t kBatch = 64;
    std::vector<int64_t> samples;
    samples.reserve(iterations / kBatch + 1);
    uint64_t seq = 0;
    for (size_t done = 0; done < iterations; done += kBatch) {
        const int64_t t0 = monotonic_ns();
        for (size_t i = 0; i < kBatch; ++i) {
            s.emit(Tp::callback_start, 0, seq++, 0);
        }
        const int64_t t1 = monotonic_ns();
        samples.push_back((t1 - t0) / static_cast<int64_t>(kBatch));
    }
    session_stop(s);
    std::vector<int64_t> copy = samples;
    const int64_t med = percentile(samples, 0.5);
    const int64_t p99 = percentile(copy, 0.99);
    return {med, p99};
}
}  // namespace

OverheadProbeResult overhead_probe(size_t iterations) {
    if (iterations < 10000) throw ConfigError("overhead_probe requires >= 1e4 iterations");
    if (active_session()) throw RuntimeError("overhead_probe needs no active session");
    OverheadProbeResult r;
    // Warm up the clock and the allocator before measuring.
    probe_one(true, 10000);
    std::tie(r.enabled_median_ns, r.enabled_p99_ns) = probe_one(true, iterations);
    std::tie(r.disabled_median_ns, r.disabled_p99_ns) = probe_one(false, iterations);
    return r;
}

}  // namespace flowtrace
