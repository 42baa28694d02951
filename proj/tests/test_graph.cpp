// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <map>
#include <set>
#include <thread>
#include <vector>

#include "flowtrace/graph.hpp"
#include "flowtrace/trace_analysis.hpp"

using namespace flowtrace;
using namespace flowtrace::graph;

namespace {

// Two-node topology: pub (0) --/t--> sub (1).
GraphSpec two_node_spec() {
    GraphSpec spec;
    NodeDescriptor pub;
    pub.id = 0;
    pub.name = "pub";
    pub.publications = {"/t"};
    NodeDescriptor sub;
    sub.id = 1;
    sub.name = "sub";
    sub.subscriptions = {{"/t", 0}};
    spec.nodes = {pub, sub};
    spec.edges = {{0, "/t", 1, ChannelKind::layered()}};
    spec.executor_workers = 2;
    return spec;
}

GraphOptions plain_options(TraceSession* session = nullptr) {
    GraphOptions opt;
    opt.mode = TimingMode::Real;
    opt.session = session;
    return opt;  // zero layer costs: fast unit-test configuration
}

Bytes payload_of(size_t n, uint8_t fill = 7) { return Bytes(n, fill); }

}  // namespace

TEST_CASE("create validates the spec") {
    SUBCASE("duplicate node id") {
        GraphSpec spec = two_node_spec();
        spec.nodes.push_back(spec.nodes[0]);
        CHECK_THROWS_AS(Graph::create(spec, plain_options()), ConfigError);
    }
    SUBCASE("bad topic name") {
        GraphSpec spec = two_node_spec();
        spec.nodes[0].publications = {"no_slash"};
        CHECK_THROWS_AS(Graph::create(spec, plain_options()), ConfigError);
    }
    SUBCASE("edge with unknown node") {
        GraphSpec spec = two_node_spec();
        spec.edges[0].subscriber = 9;
        CHECK_THROWS_AS(Graph::create(spec, plain_options()), ConfigError);
    }
    SUBCASE("edge topic the publisher does not declare") {
        GraphSpec spec = two_node_spec();
        spec.edges[0].topic = "/other";
        spec.nodes[1].subscriptions = {{"/other", 0}};
        CHECK_THROWS_AS(Graph::create(spec, plain_options()), ConfigError);
    }
    SUBCASE("DeviceStream between host-placed nodes is a placement mismatch") {
        GraphSpec spec = two_node_spec();
        spec.edges[0].kind = ChannelKind::device_stream();
        CHECK_THROWS_AS_MESSAGE(Graph::create(spec, plain_options()), ConfigError,
                                doctest::Contains("placement mismatch"));
    }
    SUBCASE("device placement needs a registered device") {
        GraphSpec spec = two_node_spec();
        spec.nodes[0].placement = Placement::device(3);
        CHECK_THROWS_AS(Graph::create(spec, plain_options()), ConfigError);
    }
}

TEST_CASE("case-study two-node topology builds with 2 nodes and 3 topics") {
    GraphSpec spec;
    NodeDescriptor rect;
    rect.id = 0;
    rect.name = "rectify";
    rect.subscriptions = {{"/camera/image_raw", 0}, {"/camera/camera_info", 1}};
    rect.publications = {"/camera/image_rect"};
    NodeDescriptor rez;
    rez.id = 1;
    rez.name = "resize";
    rez.subscriptions = {{"/camera/image_rect", 0}};
    spec.nodes = {rect, rez};
    spec.edges = {{0, "/camera/image_rect", 1, ChannelKind::layered()}};
    auto g = Graph::create(spec, plain_options());
    CHECK(g->spec().nodes.size() == 2);
    // exactly the three case-study topics are interned
    CHECK_NOTHROW(g->topic_id("/camera/image_raw"));
    CHECK_NOTHROW(g->topic_id("/camera/camera_info"));
    CHECK_NOTHROW(g->topic_id("/camera/image_rect"));
    CHECK_THROWS_AS(g->topic_id("/camera/other"), ConfigError);
}

TEST_CASE("empty graph spin returns immediately with zero messages") {
    GraphSpec spec;
    spec.executor_workers = 1;
    auto g = Graph::create(spec, plain_options());
    const RunStats rs = g->spin(StopCondition::duration(1'000'000));
    CHECK(rs.processed.empty());
    CHECK(rs.dropped == 0);
}

TEST_CASE("subscribe then publish delivers in FIFO order") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::vector<uint64_t> seen;
    g->subscribe(1, "/t", [&](const Message& m) { seen.push_back(m.seq); });
    for (int i = 0; i < 5; ++i) g->publish(0, "/t", payload_of(16));
    const RunStats rs = g->spin({});
    CHECK(rs.processed.at(1) == 5);
    CHECK(seen == std::vector<uint64_t>{0, 1, 2, 3, 4});
    CHECK(rs.dropped == 0);
}

TEST_CASE("publish assigns strictly increasing sequence numbers") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::vector<uint64_t> seqs;
    g->subscribe(1, "/t", [&](const Message& m) { seqs.push_back(m.seq); });
    g->publish(0, "/t", payload_of(8));
    g->publish(0, "/t", payload_of(8));
    g->spin({});
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[1] == seqs[0] + 1);
}

TEST_CASE("fan-out delivers equal payload bytes to both subscribers") {
    GraphSpec spec = two_node_spec();
    NodeDescriptor sub2;
    sub2.id = 2;
    sub2.name = "sub2";
    sub2.subscriptions = {{"/t", 0}};
    spec.nodes.push_back(sub2);
    spec.edges.push_back({0, "/t", 2, ChannelKind::layered()});
    auto g = Graph::create(spec, plain_options());
    Bytes a, b;
    g->subscribe(1, "/t", [&](const Message& m) { a = m.payload(); });
    g->subscribe(2, "/t", [&](const Message& m) { b = m.payload(); });
    const Bytes sent = payload_of(1000, 42);
    g->publish(0, "/t", sent);
    g->spin({});
    CHECK(a == sent);
    CHECK(b == sent);
}

TEST_CASE("publish on a topic with no subscribers still emits publish-side tracepoints") {
    GraphSpec spec = two_node_spec();
    spec.edges.clear();  // declared subscription, no edge
    TraceSession& s = session_start({true, 4096});
    auto g = Graph::create(spec, plain_options(&s));
    g->publish(0, "/t", payload_of(307200));
    g->spin({});
    TraceDump dump = session_stop(s);
    REQUIRE(dump.events.size() == 3);
    CHECK(dump.events[0].tp == static_cast<uint16_t>(Tp::client_publish));
    CHECK(dump.events[1].tp == static_cast<uint16_t>(Tp::core_publish));
    CHECK(dump.events[2].tp == static_cast<uint16_t>(Tp::middleware_publish));
    CHECK(dump.events[0].seq == dump.events[1].seq);
    CHECK(dump.events[1].seq == dump.events[2].seq);
    CHECK(dump.events[0].ts <= dump.events[1].ts);
    CHECK(dump.events[1].ts <= dump.events[2].ts);
}

TEST_CASE("unknown topic or node on publish and subscribe") {
    auto g = Graph::create(two_node_spec(), plain_options());
    CHECK_THROWS_AS(g->publish(0, "/nope", payload_of(1)), RuntimeError);
    CHECK_THROWS_AS(g->publish(7, "/t", payload_of(1)), RuntimeError);
    CHECK_THROWS_AS(g->publish(1, "/t", payload_of(1)), RuntimeError);  // not a publisher
    CHECK_THROWS_AS(g->subscribe(1, "/nope", nullptr), ConfigError);
    CHECK_THROWS_AS(g->subscribe(9, "/t", nullptr), ConfigError);
}

TEST_CASE("callback publishing chains to a downstream node") {
    GraphSpec spec;
    NodeDescriptor a, b, c;
    a.id = 0;
    a.name = "a";
    a.publications = {"/x"};
    b.id = 1;
    b.name = "b";
    b.subscriptions = {{"/x", 0}};
    b.publications = {"/y"};
    c.id = 2;
    c.name = "c";
    c.subscriptions = {{"/y", 0}};
    spec.nodes = {a, b, c};
    spec.edges = {{0, "/x", 1, ChannelKind::layered()}, {1, "/y", 2, ChannelKind::layered()}};
    spec.executor_workers = 2;
    auto g = Graph::create(spec, plain_options());
    std::vector<uint64_t> got;
    g->subscribe(1, "/x", [&](const Message& m) {
        Bytes doubled = m.payload();
        doubled.insert(doubled.end(), m.payload().begin(), m.payload().end());
        g->publish_from(1, "/y", std::move(doubled), m.seq, m.origin_ts);
    });
    g->subscribe(2, "/y", [&](const Message& m) {
        got.push_back(m.seq);
        CHECK(m.payload().size() == 64);
    });
    g->publish(0, "/x", payload_of(32));
    g->spin({});
    CHECK(got == std::vector<uint64_t>{0});
}

TEST_CASE("payload bytes survive end to end for both channel kinds") {
    // Layered covered above; device stream here.
    GraphSpec spec = two_node_spec();
    auto dev = std::make_shared<sim::Device>(0, "d0", CostModel{}, TimingMode::Real);
    spec.nodes[0].placement = Placement::device(0);
    spec.nodes[1].placement = Placement::device(0);
    spec.edges[0].kind = ChannelKind::device_stream(64);
    GraphOptions opt = plain_options();
    opt.devices[0] = dev;
    auto g = Graph::create(spec, opt);
    Bytes got;
    std::atomic<int> calls{0};
    g->subscribe(1, "/t", [&](const Message& m) {
        got = m.payload();
        ++calls;
    });
    const Bytes sent = payload_of(5000, 91);
    std::thread pub([&] {
        // publish while spinning so the stream reader is alive
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        g->publish(0, "/t", sent);
    });
    const RunStats rs = g->spin(StopCondition::message_count(1));
    pub.join();
    CHECK(calls.load() == 1);
    CHECK(got == sent);
    CHECK(rs.processed.at(1) == 1);
}

TEST_CASE("spin with message count stops at exactly that count") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::atomic<uint64_t> count{0};
    g->subscribe(1, "/t", [&](const Message&) { ++count; });
    g->set_timer(0, 100'000, [&](uint64_t) { g->publish(0, "/t", payload_of(8)); });
    const RunStats rs = g->spin(StopCondition::message_count(100));
    CHECK(count.load() == 100);
    CHECK(rs.processed.at(1) == 100);
    CHECK(rs.dropped == 0);
}

TEST_CASE("spin for one second at 30 Hz lands in the 28..32 window") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::atomic<uint64_t> count{0};
    g->subscribe(1, "/t", [&](const Message&) { ++count; });
    g->set_timer(0, 33'333'333, [&](uint64_t) { g->publish(0, "/t", payload_of(8)); });
    g->spin(StopCondition::duration(1'000'000'000));
    CHECK(count.load() >= 28);
    CHECK(count.load() <= 32);
}

TEST_CASE("model-mode duration stop fires deterministically") {
    GraphOptions opt = plain_options();
    opt.mode = TimingMode::Model;
    auto g = Graph::create(two_node_spec(), opt);
    std::atomic<uint64_t> count{0};
    g->subscribe(1, "/t", [&](const Message&) { ++count; });
    g->set_timer(0, 33'333'333, [&](uint64_t) { g->publish(0, "/t", payload_of(8)); });
    g->spin(StopCondition::duration(1'000'000'000));
    // fires at k*period < 1e9: k = 0..30
    CHECK(count.load() == 31);
}

TEST_CASE("spin twice sequentially works, concurrent spin is rejected") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::atomic<int> n{0};
    g->subscribe(1, "/t", [&](const Message&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        ++n;
    });
    g->publish(0, "/t", payload_of(4));
    std::thread racer;
    std::atomic<bool> raced{false};
    {
        racer = std::thread([&] {
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            try {
                g->spin({});
            } catch (const RuntimeError&) {
                raced = true;
            }
        });
    }
    g->spin({});
    racer.join();
    CHECK(raced.load());
    g->publish(0, "/t", payload_of(4));
    g->spin({});
    CHECK(n.load() == 2);
}

TEST_CASE("bounded queue blocks the publisher instead of dropping") {
    GraphSpec spec = two_node_spec();
    spec.executor_workers = 1;
    GraphOptions opt = plain_options();
    opt.queue_depth = 2;
    auto g = Graph::create(spec, opt);
    std::atomic<uint64_t> delivered{0};
    g->subscribe(1, "/t", [&](const Message&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        ++delivered;
    });
    std::atomic<bool> publisher_done{false};
    std::thread pub([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        for (int i = 0; i < 20; ++i) g->publish(0, "/t", payload_of(16));
        publisher_done = true;
    });
    const RunStats rs = g->spin(StopCondition::message_count(20));
    pub.join();
    CHECK(publisher_done.load());
    CHECK(delivered.load() == 20);
    CHECK(rs.dropped == 0);  // blocking backpressure never drops
}

TEST_CASE("publish to a full queue without a spinning executor throws") {
    GraphOptions opt = plain_options();
    opt.queue_depth = 3;
    auto g = Graph::create(two_node_spec(), opt);
    g->publish(0, "/t", payload_of(4));
    g->publish(0, "/t", payload_of(4));
    g->publish(0, "/t", payload_of(4));
    CHECK_THROWS_AS(g->publish(0, "/t", payload_of(4)), RuntimeError);
}

TEST_CASE("full layered tracepoint chain appears once per delivery in order") {
    TraceSession& s = session_start({true, 1 << 14});
    auto g = Graph::create(two_node_spec(), plain_options(&s));
    g->subscribe(1, "/t", [](const Message&) {});
    g->publish(0, "/t", payload_of(307200));
    g->spin({});
    TraceDump dump = session_stop(s);
    const std::vector<Tp> expect = {Tp::client_publish, Tp::core_publish, Tp::middleware_publish,
                                    Tp::middleware_take, Tp::core_take, Tp::client_take,
                                    Tp::callback_start, Tp::callback_end};
    REQUIRE(dump.events.size() == expect.size());
    int64_t prev = -1;
    for (size_t i = 0; i < expect.size(); ++i) {
        CHECK(dump.events[i].tp == static_cast<uint16_t>(expect[i]));
        CHECK(dump.events[i].ts >= prev);
        prev = dump.events[i].ts;
        CHECK(dump.events[i].seq == 0);
    }
}

TEST_CASE("per-layer floors of the cost model shape the traced chain") {
    TraceSession& s = session_start({true, 1 << 14});
    GraphOptions opt = plain_options(&s);
    opt.mode = TimingMode::Model;
    opt.cost.layer_fixed_ns = 100;
    opt.cost.layer_per_byte_ns = 0.5;
    auto g = Graph::create(two_node_spec(), opt);
    g->subscribe(1, "/t", [](const Message&) {});
    g->publish(0, "/t", payload_of(1000));  // F = 100 + 500 = 600
    g->spin({});
    TraceDump dump = session_stop(s);
    REQUIRE(dump.events.size() == 8);
    for (size_t i = 1; i < 7; ++i) {
        CHECK(dump.events[i].ts - dump.events[i - 1].ts == 600);
    }
    CHECK(dump.events[7].ts == dump.events[6].ts);  // empty callback
}

TEST_CASE("a node's callback never overlaps itself") {
    GraphSpec spec = two_node_spec();
    spec.executor_workers = 4;
    TraceSession& s = session_start({true, 1 << 16});
    auto g = Graph::create(spec, plain_options(&s));
    g->subscribe(1, "/t", [](const Message&) {
        std::this_thread::sleep_for(std::chrono::microseconds(200));
    });
    std::thread pub([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        for (int i = 0; i < 50; ++i) g->publish(0, "/t", payload_of(8));
    });
    g->spin(StopCondition::message_count(50));
    pub.join();
    TraceDump dump = session_stop(s);
    // Reconstruct callback intervals for node 1 and check disjointness.
    std::vector<std::pair<int64_t, int64_t>> intervals;
    std::map<uint64_t, int64_t> open;
    for (const auto& ev : dump.events) {
        if (ev.node != 1) continue;
        if (ev.tp == static_cast<uint16_t>(Tp::callback_start)) open[ev.seq] = ev.ts;
        if (ev.tp == static_cast<uint16_t>(Tp::callback_end)) {
            REQUIRE(open.count(ev.seq));
            intervals.emplace_back(open[ev.seq], ev.ts);
            open.erase(ev.seq);
        }
    }
    REQUIRE(intervals.size() == 50);
    std::sort(intervals.begin(), intervals.end());
    for (size_t i = 1; i < intervals.size(); ++i) {
        CHECK(intervals[i].first >= intervals[i - 1].second);
    }
}

TEST_CASE("messages transfer safely between publisher and worker threads") {
    auto g = Graph::create(two_node_spec(), plain_options());
    std::atomic<uint64_t> sum{0};
    g->subscribe(1, "/t", [&](const Message& m) { sum += m.payload()[0]; });
    std::vector<std::thread> pubs;
    std::atomic<bool> go{false};
    for (int t = 0; t < 3; ++t) {
        pubs.emplace_back([&] {
            while (!go) std::this_thread::yield();
            for (int i = 0; i < 40; ++i) g->publish(0, "/t", payload_of(4, 1));
        });
    }
    std::thread starter([&] {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        go = true;
    });
    const RunStats rs = g->spin(StopCondition::message_count(120));
    starter.join();
    for (auto& p : pubs) p.join();
    CHECK(rs.processed.at(1) == 120);
    CHECK(sum.load() == 120);
}

TEST_CASE("zero-copy mode delivers the same bytes") {
    GraphOptions opt = plain_options();
    opt.payload_copy = false;
    auto g = Graph::create(two_node_spec(), opt);
    Bytes got;
    g->subscribe(1, "/t", [&](const Message& m) { got = m.payload(); });
    g->publish(0, "/t", payload_of(512, 33));
    g->spin({});
    CHECK(got == payload_of(512, 33));
}
