// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flowtrace/common.hpp"
#include "flowtrace/cost_model.hpp"
#include "flowtrace/device_sim.hpp"
#include "flowtrace/timebase.hpp"
#include "flowtrace/tracer.hpp"

namespace flowtrace::graph {

using NodeId = int32_t;

/// Topics are non-empty slash-rooted paths, unique within a graph.
void validate_topic_name(const std::string& name);

struct Placement {
    enum class Kind { Host, Device } kind = Kind::Host;
    int device_id = -1;

    static Placement host() { return {}; }
    static Placement device(int id) { return {Kind::Device, id}; }
    bool is_device() const { return kind == Kind::Device; }
};

/// How an edge moves messages: the full client/core/middleware path, or an
/// intra-device streaming queue that bypasses the host layers entirely.
struct ChannelKind {
    enum class Kind { LayeredHost, DeviceStream } kind = Kind::LayeredHost;
    size_t stream_capacity_beats = 512;

    static ChannelKind layered() { return {}; }
    static ChannelKind device_stream(size_t capacity_beats = 512) {
        return {Kind::DeviceStream, capacity_beats};
    }
    bool is_stream() const { return kind == Kind::DeviceStream; }
};

struct SubscriptionSpec {
    std::string topic;
    int callback_id = 0;
};

struct NodeDescriptor {
    NodeId id = 0;
    std::string name;
    Placement placement;
    std::vector<SubscriptionSpec> subscriptions;
    std::vector<std::string> publications;
};

struct EdgeSpec {
    NodeId publisher = 0;
    std::string topic;
    NodeId subscriber = 0;
    ChannelKind kind;
};

struct GraphSpec {
    std::vector<NodeDescriptor> nodes;
    std::vector<EdgeSpec> edges;
    int executor_workers = 2;

    const NodeDescriptor* find_node(NodeId id) const;
};

struct RunStats {
    std::map<NodeId, uint64_t> processed;  // message callbacks per node
    int64_t wall_ns = 0;
    uint64_t dropped = 0;           // queue-policy drops; always 0 under blocking
    uint64_t shutdown_discards = 0; // in-flight messages abandoned at stop
};

struct StopCondition {
    uint64_t messages = 0;   // stop once the sink has processed this many
    int64_t duration_ns = 0; // timers stop firing past this point
    NodeId sink_node = -1;   // -1: the unique node without publications

    static StopCondition message_count(uint64_t n) { return {n, 0, -1}; }
    static StopCondition duration(int64_t ns) { return {0, ns, -1}; }
};

struct GraphOptions {
    TimingMode mode = TimingMode::Real;
    TraceSession* session = nullptr;
    CostModel cost;  // layer_fixed_ns / layer_per_byte_ns drive the host stack
    std::map<int, sim::DevicePtr> devices;
    size_t queue_depth = 8;
    bool payload_copy = true;
};

/// A delivered message. The payload is shared when per-layer copies are
/// switched off, so expose it through an accessor.
struct Message {
    std::string topic;
    uint32_t topic_id = 0;
    uint64_t seq = 0;
    int64_t publish_ts = 0;  // at the publishing hop's client_publish
    int64_t origin_ts = 0;   // at the chain's first publish (propagated)
    NodeId source = -1;
    std::shared_ptr<const Bytes> payload_ptr;

    const Bytes& payload() const { return *payload_ptr; }
};

using Callback = std::function<void(const Message&)>;
using TimerFn = std::function<void(uint64_t fire_index)>;

/// Pub/sub runtime: bounded per-subscription queues with blocking
/// publishers, an N-worker executor with per-node callback exclusion, and
/// the three-layer publish/take path instrumented at every boundary.
class Graph {
public:
    static std::unique_ptr<Graph> create(const GraphSpec& spec, GraphOptions options);
    ~Graph();
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Binds a callback to a subscription declared in the spec.
    int subscribe(NodeId node, const std::string& topic, Callback cb);

    /// Attaches a periodic timer to a node (the synthetic-source hook).
    /// `max_fires` of 0 means unbounded (bounded by the stop condition).
    void set_timer(NodeId node, int64_t period_ns, TimerFn fn, uint64_t max_fires = 0);

    /// Publish with an auto-assigned per-(publisher, topic) sequence.
    void publish(NodeId node, const std::string& topic, Bytes payload);
    /// Publish propagating an upstream sequence and origin timestamp, so
    /// chains survive across nodes and channel kinds.
    void publish_from(NodeId node, const std::string& topic, Bytes payload, uint64_t seq,
                      int64_t origin_ts);

    /// Runs the executor until the stop condition is met and the graph is
    /// quiescent. Not reentrant.
    RunStats spin(const StopCondition& stop);

    uint32_t topic_id(const std::string& name) const;
    const GraphSpec& spec() const;

private:
    struct Impl;
    explicit Graph(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace flowtrace::graph
