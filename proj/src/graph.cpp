// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/graph.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

namespace flowtrace::graph {

void validate_topic_name(const std::string& name) {
    if (name.empty() || name[0] != '/') {
        throw ConfigError("topic name must be a non-empty slash-rooted path: '" + name + "'");
    }
}

const NodeDescriptor* GraphSpec::find_node(NodeId id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

namespace {

struct StreamClosed : RuntimeError {
    using RuntimeError::RuntimeError;
};

// Wire envelope prepended to stream frames so sequence numbers and the
// virtual clock survive the hop.
struct StreamEnvelope {
    uint64_t seq = 0;
    int64_t ready_ts = 0;
    int64_t publish_ts = 0;
    int64_t origin_ts = 0;
    uint32_t topic_id = 0;
    uint32_t source = 0;
};
constexpr size_t kEnvelopeSize = 40;

void encode_envelope(const StreamEnvelope& env, Bytes& out) {
    out.resize(kEnvelopeSize);
    std::memcpy(out.data(), &env.seq, 8);
    std::memcpy(out.data() + 8, &env.ready_ts, 8);
    std::memcpy(out.data() + 16, &env.publish_ts, 8);
    std::memcpy(out.data() + 24, &env.origin_ts, 8);
    std::memcpy(out.data() + 32, &env.topic_id, 4);
    std::memcpy(out.data() + 36, &env.source, 4);
}

StreamEnvelope decode_envelope(const Bytes& frame) {
    if (frame.size() < kEnvelopeSize) throw RuntimeError("stream frame too short for envelope");
    StreamEnvelope env;
    std::memcpy(&env.seq, frame.data(), 8);
    std::memcpy(&env.ready_ts, frame.data() + 8, 8);
    std::memcpy(&env.publish_ts, frame.data() + 16, 8);
    std::memcpy(&env.origin_ts, frame.data() + 24, 8);
    std::memcpy(&env.topic_id, frame.data() + 32, 4);
    std::memcpy(&env.source, frame.data() + 36, 4);
    return env;
}

}  // namespace

struct Graph::Impl {
    struct Delivery {
        Message msg;
        int64_t mwp_ts = 0;
    };

    struct Sub {
        int index = 0;
        NodeId node = 0;
        uint32_t topic_id = 0;
        std::string topic;
        Callback cb;
        std::deque<Delivery> queue;
    };

    struct StreamChannel {
        NodeId publisher = 0;
        NodeId subscriber = 0;
        uint32_t topic_id = 0;
        std::string topic;
        sim::DevicePtr device;
        sim::StreamQueuePtr queue;
        Callback cb;
        std::thread reader;
    };

    struct Target {
        Sub* sub = nullptr;
        StreamChannel* chan = nullptr;
    };

    struct PubRecord {
        NodeId node = 0;
        uint32_t topic_id = 0;
        std::string topic;
        std::atomic<uint64_t> next_seq{0};
        std::vector<Target> targets;
    };

    struct NodeState {
        NodeDescriptor desc;
        bool busy = false;
        uint64_t processed = 0;
    };

    struct Timer {
        NodeId node = 0;
        int64_t period_ns = 0;
        TimerFn fn;
        uint64_t max_fires = 0;
        uint64_t fired = 0;
        bool running = false;
    };

    GraphSpec spec;
    GraphOptions opt;
    std::map<std::string, uint32_t> topic_ids;
    std::vector<std::string> topic_names;
    std::map<NodeId, NodeState> nodes;
    std::vector<std::unique_ptr<Sub>> subs;
    std::map<NodeId, std::vector<Sub*>> node_subs;  // declaration order
    std::map<std::pair<NodeId, uint32_t>, std::unique_ptr<PubRecord>> pubs;
    std::vector<std::unique_ptr<StreamChannel>> streams;
    std::vector<Timer> timers;

    // Scheduling order: nodes closest to the sink first (then lowest id).
    // Draining downstream before upstream keeps blocking backpressure from
    // stalling every worker at once.
    std::vector<NodeId> sched_order;

    std::mutex mu;
    std::condition_variable cv_work;
    std::condition_variable cv_space;
    std::condition_variable cv_done;
    bool spinning = false;
    bool stopping = false;
    int64_t in_flight = 0;
    uint64_t shutdown_discards = 0;
    std::exception_ptr first_error;
    int64_t epoch_ns = 0;
    int64_t spin_wall_start = 0;
    StopCondition stop;
    NodeId sink_node = -1;
    std::vector<std::thread> workers;

    // --- construction -------------------------------------------------------

    uint32_t intern_topic(const std::string& name) {
        validate_topic_name(name);
        auto it = topic_ids.find(name);
        if (it != topic_ids.end()) return it->second;
        const uint32_t id = static_cast<uint32_t>(topic_names.size());
        topic_ids.emplace(name, id);
        topic_names.push_back(name);
        return id;
    }

    void build(const GraphSpec& s, GraphOptions o) {
        spec = s;
        opt = std::move(o);
        if (spec.executor_workers < 1) throw ConfigError("executor_workers must be >= 1");
        for (const auto& nd : spec.nodes) {
            if (nodes.count(nd.id)) {
                throw ConfigError("duplicate node id " + std::to_string(nd.id));
            }
            if (nd.placement.is_device() && !opt.devices.count(nd.placement.device_id)) {
                throw ConfigError("node " + nd.name + ": unknown device id " +
                                  std::to_string(nd.placement.device_id));
            }
            for (const auto& t : nd.publications) intern_topic(t);
            for (const auto& sspec : nd.subscriptions) intern_topic(sspec.topic);
            nodes.emplace(nd.id, NodeState{nd, false, 0});
            node_subs.try_emplace(nd.id);
        }
        // Subscription inboxes in declaration order.
        for (const auto& nd : spec.nodes) {
            for (const auto& sspec : nd.subscriptions) {
                auto sub = std::make_unique<Sub>();
                sub->index = static_cast<int>(subs.size());
                sub->node = nd.id;
                sub->topic = sspec.topic;
                sub->topic_id = intern_topic(sspec.topic);
                node_subs[nd.id].push_back(sub.get());
                subs.push_back(std::move(sub));
            }
            for (const auto& t : nd.publications) {
                auto pr = std::make_unique<PubRecord>();
                pr->node = nd.id;
                pr->topic = t;
                pr->topic_id = intern_topic(t);
                pubs.emplace(std::make_pair(nd.id, pr->topic_id), std::move(pr));
            }
        }
        for (const auto& e : spec.edges) {
            const NodeDescriptor* pub = spec.find_node(e.publisher);
            const NodeDescriptor* sub = spec.find_node(e.subscriber);
            if (!pub || !sub) throw ConfigError("edge references unknown node");
            const uint32_t tid = intern_topic(e.topic);
            auto pit = pubs.find({e.publisher, tid});
            if (pit == pubs.end()) {
                throw ConfigError("edge: node " + pub->name + " does not publish " + e.topic);
            }
            if (e.kind.is_stream()) {
                if (!pub->placement.is_device() || !sub->placement.is_device() ||
                    pub->placement.device_id != sub->placement.device_id) {
                    throw ConfigError("placement mismatch: DeviceStream edge on " + e.topic +
                                      " requires both nodes on the same device");
                }
                auto dev = opt.devices.at(pub->placement.device_id);
                auto chan = std::make_unique<StreamChannel>();
                chan->publisher = e.publisher;
                chan->subscriber = e.subscriber;
                chan->topic = e.topic;
                chan->topic_id = tid;
                chan->device = dev;
                chan->queue = dev->create_stream_queue(e.kind.stream_capacity_beats,
                                                       static_cast<size_t>(
                                                           opt.cost.stream_beat_bytes));
                pit->second->targets.push_back(Target{nullptr, chan.get()});
                streams.push_back(std::move(chan));
            } else {
                Sub* target = find_sub(e.subscriber, tid);
                if (!target) {
                    throw ConfigError("edge: node " + sub->name + " does not subscribe to " +
                                      e.topic);
                }
                pit->second->targets.push_back(Target{target, nullptr});
            }
        }
        // Distance-to-sink ranks; cycles saturate after |nodes| passes.
        std::map<NodeId, int> depth;
        for (const auto& [id, st] : nodes) depth[id] = 0;
        for (size_t pass = 0; pass < nodes.size(); ++pass) {
            bool changed = false;
            for (const auto& e : spec.edges) {
                const int want = std::min<int>(depth[e.subscriber] + 1,
                                               static_cast<int>(nodes.size()));
                if (depth[e.publisher] < want) {
                    depth[e.publisher] = want;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        for (const auto& [id, st] : nodes) sched_order.push_back(id);
        std::sort(sched_order.begin(), sched_order.end(), [&](NodeId a, NodeId b) {
            if (depth[a] != depth[b]) return depth[a] < depth[b];
            return a < b;
        });

        epoch_ns = opt.session ? opt.session->epoch_ns() : monotonic_ns();
        if (opt.session) {
            for (const auto& [name, id] : topic_ids) opt.session->register_topic(id, name);
            for (const auto& [id, st] : nodes) opt.session->register_node(id, st.desc.name);
        }
    }

    Sub* find_sub(NodeId node, uint32_t tid) {
        auto it = node_subs.find(node);
        if (it == node_subs.end()) return nullptr;
        for (Sub* s : it->second) {
            if (s->topic_id == tid) return s;
        }
        return nullptr;
    }

    StreamChannel* find_stream(NodeId node, uint32_t tid) {
        for (auto& c : streams) {
            if (c->subscriber == node && c->topic_id == tid) return c.get();
        }
        return nullptr;
    }

    // --- tracing helpers ----------------------------------------------------

    void emit(Tp tp, ExecContext& ctx, int64_t ts, NodeId node, uint64_t seq, uint64_t arg) {
        if (ctx.session && ctx.session->enabled()) {
            ctx.session->emit_at(tp, ts, node, seq, arg);
        }
    }

    std::shared_ptr<const Bytes> maybe_copy(const std::shared_ptr<const Bytes>& p) const {
        if (!opt.payload_copy) return p;
        return std::make_shared<const Bytes>(*p);
    }

    // --- publish ------------------------------------------------------------

    void publish_impl(NodeId node, const std::string& topic, Bytes payload,
                      std::optional<uint64_t> seq_in, std::optional<int64_t> origin_in) {
        if (!nodes.count(node)) throw RuntimeError("publish: unknown node " + std::to_string(node));
        auto tit = topic_ids.find(topic);
        if (tit == topic_ids.end()) throw RuntimeError("publish: unknown topic " + topic);
        auto pit = pubs.find({node, tit->second});
        if (pit == pubs.end()) {
            throw RuntimeError("publish: node " + std::to_string(node) + " does not publish " +
                               topic);
        }
        PubRecord& pr = *pit->second;
        const uint64_t seq = seq_in ? *seq_in : pr.next_seq.fetch_add(1);

        ExecContext* ctx = current_context();
        ExecContext local;
        std::optional<ScopedContext> guard;
        if (!ctx) {
            local.mode = opt.mode;
            local.session = opt.session;
            local.node = node;
            local.seq = seq;
            local.vnow = 0;
            local.epoch_ns = epoch_ns;
            guard.emplace(&local);
            ctx = &local;
        }

        auto payload_ptr = std::make_shared<const Bytes>(std::move(payload));
        const size_t len = payload_ptr->size();
        const int64_t publish_ts = ctx->now();
        const int64_t origin_ts = origin_in.value_or(publish_ts);

        bool any_layered = pr.targets.empty();
        for (const auto& t : pr.targets) {
            if (t.sub) any_layered = true;
        }

        if (any_layered) {
            const int64_t F = opt.cost.layer_cost(len);
            int64_t t = publish_ts;
            emit(Tp::client_publish, *ctx, t, node, seq, pr.topic_id);
            payload_ptr = maybe_copy(payload_ptr);
            t = ctx->settle(t, F);
            emit(Tp::core_publish, *ctx, t, node, seq, pr.topic_id);
            payload_ptr = maybe_copy(payload_ptr);
            t = ctx->settle(t, F);
            emit(Tp::middleware_publish, *ctx, t, node, seq, pr.topic_id);
            const int64_t mwp_ts = t;
            for (const auto& target : pr.targets) {
                if (target.sub) {
                    deliver_layered(*target.sub, pr, seq, publish_ts, origin_ts, node, payload_ptr,
                                    mwp_ts);
                } else {
                    deliver_stream(*target.chan, seq, publish_ts, origin_ts, node, *payload_ptr,
                                   *ctx);
                }
            }
        } else {
            // Stream-only publication: the host layers are bypassed entirely.
            for (const auto& target : pr.targets) {
                deliver_stream(*target.chan, seq, publish_ts, origin_ts, node, *payload_ptr, *ctx);
            }
        }
    }

    void deliver_layered(Sub& sub, const PubRecord& pr, uint64_t seq, int64_t publish_ts,
                         int64_t origin_ts, NodeId source,
                         const std::shared_ptr<const Bytes>& payload, int64_t mwp_ts) {
        Delivery del;
        del.msg.topic = pr.topic;
        del.msg.topic_id = pr.topic_id;
        del.msg.seq = seq;
        del.msg.publish_ts = publish_ts;
        del.msg.origin_ts = origin_ts;
        del.msg.source = source;
        del.msg.payload_ptr = maybe_copy(payload);  // middleware copy into the queue
        del.mwp_ts = mwp_ts;

        std::unique_lock<std::mutex> lk(mu);
        cv_space.wait(lk, [&] {
            return stopping || !spinning || sub.queue.size() < opt.queue_depth;
        });
        if (stopping) {
            ++shutdown_discards;
            return;
        }
        if (!spinning && sub.queue.size() >= opt.queue_depth) {
            throw RuntimeError("publish: queue full on " + sub.topic +
                               " and graph is not spinning (blocking backpressure needs the "
                               "executor)");
        }
        sub.queue.push_back(std::move(del));
        ++in_flight;
        cv_work.notify_all();
    }

    void deliver_stream(StreamChannel& chan, uint64_t seq, int64_t publish_ts, int64_t origin_ts,
                        NodeId source, const Bytes& payload, ExecContext& ctx) {
        StreamEnvelope env;
        env.seq = seq;
        env.publish_ts = publish_ts;
        env.origin_ts = origin_ts;
        env.topic_id = chan.topic_id;
        env.source = static_cast<uint32_t>(source);
        const size_t frame_len = kEnvelopeSize + payload.size();
        const int64_t t0 = ctx.now();
        env.ready_ts = t0 + chan.queue->frame_cost(frame_len);

        Bytes frame;
        encode_envelope(env, frame);
        frame.insert(frame.end(), payload.begin(), payload.end());

        {
            std::lock_guard<std::mutex> lk(mu);
            if (stopping) {
                ++shutdown_discards;
                return;
            }
            ++in_flight;
        }
        const uint64_t qid = static_cast<uint64_t>(chan.queue->id());
        emit(Tp::stream_write_begin, ctx, t0, source, seq, qid);
        try {
            chan.queue->write_frame(frame, t0);
        } catch (const RuntimeError&) {
            std::lock_guard<std::mutex> lk(mu);
            --in_flight;
            ++shutdown_discards;
            if (!stopping) throw;
            cv_done.notify_all();
            return;
        }
        // Stamp the modeled completion instant. The writer's own spin can
        // resume fractionally late under load, but every beat is already in
        // the queue by now and the reader dispatches no earlier than this.
        emit(Tp::stream_write_end, ctx, env.ready_ts, source, seq, qid);
    }

    // --- executor -----------------------------------------------------------

    bool timer_exhausted(const Timer& tm) const {
        if (tm.max_fires > 0 && tm.fired >= tm.max_fires) return true;
        if (stop.messages > 0 && tm.fired >= stop.messages) return true;
        if (stop.duration_ns > 0 &&
            static_cast<int64_t>(tm.fired) * tm.period_ns >= stop.duration_ns) {
            return true;
        }
        return false;
    }

    bool all_timers_done() const {
        for (const auto& tm : timers) {
            if (tm.running || !timer_exhausted(tm)) return false;
        }
        return true;
    }

    bool done_locked() {
        if (stopping) return true;
        if (nodes.empty()) return true;
        if (stop.messages > 0) {
            // Hard target: run until the sink has seen the count.
            auto it = nodes.find(sink_node);
            return it != nodes.end() && it->second.processed >= stop.messages;
        }
        return in_flight == 0 && all_timers_done();
    }

    void worker_main() {
        std::unique_lock<std::mutex> lk(mu);
        while (!stopping) {
            // Ready message callback, sink-most node first (then lowest id,
            // then subscription declaration order).
            Sub* pick = nullptr;
            for (NodeId nid : sched_order) {
                if (nodes.at(nid).busy) continue;
                for (Sub* s : node_subs[nid]) {
                    if (!s->queue.empty()) {
                        pick = s;
                        break;
                    }
                }
                if (pick) break;
            }
            if (pick) {
                run_delivery(lk, *pick);
                continue;
            }
            // Due timers next.
            Timer* due = nullptr;
            int64_t next_due_wall = INT64_MAX;
            for (auto& tm : timers) {
                if (tm.running || timer_exhausted(tm)) continue;
                auto nit = nodes.find(tm.node);
                if (nit == nodes.end() || nit->second.busy) continue;
                if (opt.mode == TimingMode::Model) {
                    due = &tm;
                    break;
                }
                const int64_t due_wall =
                    spin_wall_start + static_cast<int64_t>(tm.fired) * tm.period_ns;
                if (due_wall <= monotonic_ns()) {
                    due = &tm;
                    break;
                }
                next_due_wall = std::min(next_due_wall, due_wall);
            }
            if (due) {
                run_timer(lk, *due);
                continue;
            }
            cv_done.notify_all();
            if (next_due_wall != INT64_MAX) {
                cv_work.wait_for(lk, std::chrono::nanoseconds(
                                         std::max<int64_t>(0, next_due_wall - monotonic_ns())));
            } else {
                cv_work.wait_for(lk, std::chrono::milliseconds(10));
            }
        }
    }

    void run_delivery(std::unique_lock<std::mutex>& lk, Sub& sub) {
        NodeState& st = nodes.at(sub.node);
        st.busy = true;
        Delivery del = std::move(sub.queue.front());
        sub.queue.pop_front();
        cv_space.notify_all();
        lk.unlock();
        try {
            process_take_side(sub, del);
        } catch (...) {
            lk.lock();
            if (!first_error) first_error = std::current_exception();
            stopping = true;
            st.busy = false;
            --in_flight;
            cv_work.notify_all();
            cv_done.notify_all();
            return;
        }
        lk.lock();
        st.busy = false;
        ++st.processed;
        --in_flight;
        cv_work.notify_all();
        cv_done.notify_all();
    }

    void process_take_side(Sub& sub, Delivery& del) {
        ExecContext ctx;
        ctx.mode = opt.mode;
        ctx.session = opt.session;
        ctx.node = sub.node;
        ctx.seq = del.msg.seq;
        ctx.vnow = del.mwp_ts;
        ctx.epoch_ns = epoch_ns;
        ScopedContext guard(&ctx);

        const size_t len = del.msg.payload().size();
        const int64_t F = opt.cost.layer_cost(len);
        auto p = del.msg.payload_ptr;
        int64_t t = ctx.settle(del.mwp_ts, F);
        emit(Tp::middleware_take, ctx, t, sub.node, del.msg.seq, sub.topic_id);
        p = maybe_copy(p);
        t = ctx.settle(t, F);
        emit(Tp::core_take, ctx, t, sub.node, del.msg.seq, sub.topic_id);
        p = maybe_copy(p);
        t = ctx.settle(t, F);
        emit(Tp::client_take, ctx, t, sub.node, del.msg.seq, sub.topic_id);
        p = maybe_copy(p);
        t = ctx.settle(t, F);
        emit(Tp::callback_start, ctx, t, sub.node, del.msg.seq, sub.topic_id);
        del.msg.payload_ptr = p;
        if (sub.cb) sub.cb(del.msg);
        emit(Tp::callback_end, ctx, ctx.now(), sub.node, del.msg.seq, sub.topic_id);
    }

    void run_timer(std::unique_lock<std::mutex>& lk, Timer& tm) {
        NodeState& st = nodes.at(tm.node);
        st.busy = true;
        tm.running = true;
        const uint64_t k = tm.fired++;
        lk.unlock();

        ExecContext ctx;
        ctx.mode = opt.mode;
        ctx.session = opt.session;
        ctx.node = tm.node;
        ctx.seq = k;
        ctx.vnow = static_cast<int64_t>(k) * tm.period_ns;
        ctx.epoch_ns = epoch_ns;
        {
            ScopedContext guard(&ctx);
            try {
                if (tm.fn) tm.fn(k);
            } catch (...) {
                lk.lock();
                if (!first_error) first_error = std::current_exception();
                stopping = true;
                st.busy = false;
                tm.running = false;
                cv_work.notify_all();
                cv_done.notify_all();
                return;
            }
        }
        lk.lock();
        st.busy = false;
        tm.running = false;
        cv_work.notify_all();
        cv_done.notify_all();
    }

    void stream_reader_main(StreamChannel& chan) {
        while (true) {
            std::optional<Bytes> frame;
            try {
                frame = chan.queue->read_frame();
            } catch (const RuntimeError&) {
                return;  // closed mid-frame during shutdown
            }
            if (!frame) return;
            const StreamEnvelope env = decode_envelope(*frame);
            if (opt.mode == TimingMode::Real) spin_until_ns(env.ready_ts + epoch_ns);
            {
                std::unique_lock<std::mutex> lk(mu);
                cv_work.wait(lk, [&] { return stopping || !nodes.at(chan.subscriber).busy; });
                if (stopping) {
                    ++shutdown_discards;
                    --in_flight;
                    cv_done.notify_all();
                    continue;
                }
                nodes.at(chan.subscriber).busy = true;
            }

            ExecContext ctx;
            ctx.mode = opt.mode;
            ctx.session = opt.session;
            ctx.node = chan.subscriber;
            ctx.seq = env.seq;
            ctx.vnow = env.ready_ts;
            ctx.epoch_ns = epoch_ns;
            bool failed = false;
            {
                ScopedContext guard(&ctx);
                const uint64_t qid = static_cast<uint64_t>(chan.queue->id());
                emit(Tp::stream_read_begin, ctx, ctx.now(), chan.subscriber, env.seq, qid);
                emit(Tp::stream_read_end, ctx, ctx.now(), chan.subscriber, env.seq, qid);
                emit(Tp::callback_start, ctx, ctx.now(), chan.subscriber, env.seq, chan.topic_id);
                Message msg;
                msg.topic = chan.topic;
                msg.topic_id = chan.topic_id;
                msg.seq = env.seq;
                msg.publish_ts = env.publish_ts;
                msg.origin_ts = env.origin_ts;
                msg.source = static_cast<NodeId>(env.source);
                msg.payload_ptr = std::make_shared<const Bytes>(frame->begin() + kEnvelopeSize,
                                                                frame->end());
                try {
                    if (chan.cb) chan.cb(msg);
                } catch (...) {
                    failed = true;
                    std::lock_guard<std::mutex> lk(mu);
                    if (!first_error) first_error = std::current_exception();
                    stopping = true;
                }
                emit(Tp::callback_end, ctx, ctx.now(), chan.subscriber, env.seq, chan.topic_id);
            }
            std::lock_guard<std::mutex> lk(mu);
            nodes.at(chan.subscriber).busy = false;
            if (!failed) ++nodes.at(chan.subscriber).processed;
            --in_flight;
            cv_work.notify_all();
            cv_done.notify_all();
        }
    }

    RunStats spin(const StopCondition& stop_in) {
        {
            std::lock_guard<std::mutex> lk(mu);
            if (spinning) throw RuntimeError("graph is already spinning");
            spinning = true;
            stopping = false;
            stop = stop_in;
            shutdown_discards = 0;
            for (auto& [id, st] : nodes) st.processed = 0;
            for (auto& tm : timers) tm.fired = 0;
            sink_node = stop.sink_node;
            if (sink_node < 0) {
                int candidates = 0;
                for (const auto& [id, st] : nodes) {
                    if (st.desc.publications.empty()) {
                        sink_node = id;
                        ++candidates;
                    }
                }
                if (candidates != 1) sink_node = -1;
                if (stop.messages > 0 && sink_node < 0 && !nodes.empty()) {
                    throw ConfigError("message-count stop needs a unique sink node");
                }
            }
            spin_wall_start = monotonic_ns();
        }
        const int64_t wall0 = monotonic_ns();

        std::vector<std::thread> readers;
        for (auto& chan : streams) {
            readers.emplace_back([this, c = chan.get()] { stream_reader_main(*c); });
        }
        for (int i = 0; i < spec.executor_workers; ++i) {
            workers.emplace_back([this] { worker_main(); });
        }

        {
            std::unique_lock<std::mutex> lk(mu);
            while (!done_locked()) {
                cv_done.wait_for(lk, std::chrono::milliseconds(5));
            }
            stopping = true;
            cv_work.notify_all();
            cv_space.notify_all();
        }
        for (auto& chan : streams) chan->queue->close();
        for (auto& w : workers) w.join();
        workers.clear();
        for (auto& r : readers) r.join();

        RunStats stats;
        {
            std::lock_guard<std::mutex> lk(mu);
            for (const auto& [id, st] : nodes) stats.processed[id] = st.processed;
            stats.dropped = 0;
            stats.shutdown_discards = shutdown_discards;
            spinning = false;
            stopping = false;  // leave the graph usable for a later spin
            // Drain anything left over so a later spin starts clean.
            for (auto& s : subs) {
                in_flight -= static_cast<int64_t>(s->queue.size());
                s->queue.clear();
            }
            in_flight = std::max<int64_t>(in_flight, 0);
        }
        stats.wall_ns = monotonic_ns() - wall0;
        if (first_error) {
            auto err = first_error;
            first_error = nullptr;
            std::rethrow_exception(err);
        }
        return stats;
    }
};

Graph::Graph(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

Graph::~Graph() {
    for (auto& chan : impl_->streams) {
        if (chan->queue) chan->queue->close();
    }
}

std::unique_ptr<Graph> Graph::create(const GraphSpec& spec, GraphOptions options) {
    auto impl = std::make_unique<Impl>();
    impl->build(spec, std::move(options));
    return std::unique_ptr<Graph>(new Graph(std::move(impl)));
}

int Graph::subscribe(NodeId node, const std::string& topic, Callback cb) {
    if (!impl_->nodes.count(node)) {
        throw ConfigError("subscribe: unknown node " + std::to_string(node));
    }
    auto tit = impl_->topic_ids.find(topic);
    if (tit == impl_->topic_ids.end()) throw ConfigError("subscribe: unknown topic " + topic);
    Impl::Sub* sub = impl_->find_sub(node, tit->second);
    Impl::StreamChannel* chan = impl_->find_stream(node, tit->second);
    if (!sub && !chan) {
        throw ConfigError("subscribe: node " + std::to_string(node) +
                          " has no declared subscription to " + topic);
    }
    if (sub) sub->cb = cb;
    if (chan) chan->cb = cb;
    return sub ? sub->index : -(static_cast<int>(tit->second) + 1);
}

void Graph::set_timer(NodeId node, int64_t period_ns, TimerFn fn, uint64_t max_fires) {
    if (!impl_->nodes.count(node)) {
        throw ConfigError("set_timer: unknown node " + std::to_string(node));
    }
    if (period_ns <= 0) throw ConfigError("set_timer: period must be positive");
    impl_->timers.push_back(Impl::Timer{node, period_ns, std::move(fn), max_fires, 0, false});
    std::sort(impl_->timers.begin(), impl_->timers.end(),
              [](const Impl::Timer& a, const Impl::Timer& b) { return a.node < b.node; });
}

void Graph::publish(NodeId node, const std::string& topic, Bytes payload) {
    impl_->publish_impl(node, topic, std::move(payload), std::nullopt, std::nullopt);
}

void Graph::publish_from(NodeId node, const std::string& topic, Bytes payload, uint64_t seq,
                         int64_t origin_ts) {
    impl_->publish_impl(node, topic, std::move(payload), seq, origin_ts);
}

RunStats Graph::spin(const StopCondition& stop) { return impl_->spin(stop); }

uint32_t Graph::topic_id(const std::string& name) const {
    auto it = impl_->topic_ids.find(name);
    if (it == impl_->topic_ids.end()) throw ConfigError("unknown topic " + name);
    return it->second;
}

const GraphSpec& Graph::spec() const { return impl_->spec; }

}  // namespace flowtrace::graph
