// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>

namespace flowtrace {

class TraceSession;

/// How time is produced while a graph runs.
///
/// Real  — timestamps come from the process monotonic clock and every
///         modeled cost is enforced as a busy-wait floor, so wall-clock
///         traces reproduce modeled latencies.
/// Model — no waiting; each message carries a virtual clock that advances
///         by the closed-form cost of every step it takes. Runs are exact
///         and bit-reproducible.
enum class TimingMode { Real, Model };

inline int64_t monotonic_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

/// Busy-wait until the monotonic clock reaches `deadline_ns`.
/// Spinning (not sleeping) keeps overshoot in the tens of nanoseconds.
inline void spin_until_ns(int64_t deadline_ns) {
    while (monotonic_ns() < deadline_ns) {
        // spin
    }
}

/// Per-callback execution context. The executor installs one for the
/// duration of each callback (and each timer fire); layer traversals,
/// device operations and tracepoint emission consult it.
struct ExecContext {
    TimingMode mode = TimingMode::Real;
    TraceSession* session = nullptr;
    int32_t node = -1;
    uint64_t seq = 0;
    /// Virtual clock in Model mode; in Real mode `epoch_ns` anchors
    /// session-relative timestamps.
    int64_t vnow = 0;
    int64_t epoch_ns = 0;

    int64_t now() const {
        return mode == TimingMode::Model ? vnow : monotonic_ns() - epoch_ns;
    }

    /// Consume `cost_ns` starting at `begin_ts` (a value previously
    /// obtained from now()). Returns the timestamp after the step.
    int64_t settle(int64_t begin_ts, int64_t cost_ns) {
        const int64_t end_ts = begin_ts + cost_ns;
        if (mode == TimingMode::Model) {
            if (end_ts > vnow) vnow = end_ts;
        } else {
            spin_until_ns(end_ts + epoch_ns);
        }
        return now();
    }
};

ExecContext* current_context();

/// Installs `ctx` as the thread's current context for the scope.
class ScopedContext {
public:
    explicit ScopedContext(ExecContext* ctx);
    ~ScopedContext();
    ScopedContext(const ScopedContext&) = delete;
    ScopedContext& operator=(const ScopedContext&) = delete;

private:
    ExecContext* prev_;
};

}  // namespace flowtrace
