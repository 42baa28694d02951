// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "flowtrace/trace_export.hpp"

using namespace flowtrace;
using json = nlohmann::json;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
    return std::filesystem::temp_directory_path() / name;
}

json load_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    json j;
    in >> j;
    return j;
}

void add(TraceDump& dump, Tp tp, int64_t ts, int32_t node, uint64_t seq, uint64_t arg = 0,
         uint16_t thread = 0) {
    TraceEvent ev{};
    ev.ts = ts;
    ev.seq = seq;
    ev.arg = arg;
    ev.node = node;
    ev.tp = static_cast<uint16_t>(tp);
    ev.thread = thread;
    dump.events.push_back(ev);
}

// Minimal CSV reader used to verify the export round trip.
struct CsvRow {
    int64_t ts_ns;
    std::string tp_name;
    int thread;
    int node;
    uint64_t seq;
    uint64_t arg;
};

std::vector<CsvRow> parse_csv(const std::filesystem::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    REQUIRE(header == "ts_ns,tp_name,thread,node,seq,arg");
    std::vector<CsvRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        CsvRow r;
        std::getline(ss, field, ',');
        r.ts_ns = std::stoll(field);
        std::getline(ss, r.tp_name, ',');
        std::getline(ss, field, ',');
        r.thread = std::stoi(field);
        std::getline(ss, field, ',');
        r.node = std::stoi(field);
        std::getline(ss, field, ',');
        r.seq = std::stoull(field);
        std::getline(ss, field, ',');
        r.arg = std::stoull(field);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

TEST_CASE("a callback pair becomes one duration event of the right length") {
    TraceDump dump;
    dump.node_names[1] = "worker";
    add(dump, Tp::callback_start, 1000, 1, 7, 0);
    add(dump, Tp::callback_end, 3500, 1, 7, 0);
    const auto path = tmp_file("ft_chrome_cb.json");
    export_chrome(dump, path.string());
    const json j = load_json_file(path);
    REQUIRE(j.is_array());
    REQUIRE(j.size() == 1);
    CHECK(j[0]["name"] == "callback");
    CHECK(j[0]["ph"] == "X");
    CHECK(j[0]["ts"].get<double>() == doctest::Approx(1.0));
    CHECK(j[0]["dur"].get<double>() == doctest::Approx(2.5));
    CHECK(j[0]["args"]["seq"] == 7);
    std::filesystem::remove(path);
}

TEST_CASE("empty dump exports a valid empty JSON array") {
    TraceDump dump;
    const auto path = tmp_file("ft_chrome_empty.json");
    export_chrome(dump, path.string());
    const json j = load_json_file(path);
    CHECK(j.is_array());
    CHECK(j.empty());
    std::filesystem::remove(path);
}

TEST_CASE("device h2d pair becomes a duration event in the device category") {
    TraceDump dump;
    add(dump, Tp::h2d_begin, 100, 0, 1, 4096);
    add(dump, Tp::h2d_end, 4196, 0, 1, 4096);
    const auto path = tmp_file("ft_chrome_h2d.json");
    export_chrome(dump, path.string());
    const json j = load_json_file(path);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["name"] == "h2d");
    CHECK(j[0]["cat"] == "device");
    CHECK(j[0]["ph"] == "X");
    CHECK(j[0]["dur"].get<double>() == doctest::Approx(4.096));
    CHECK(j[0]["args"]["arg"] == 4096);
    std::filesystem::remove(path);
}

TEST_CASE("layer points export as instants with topic names resolved") {
    TraceDump dump;
    dump.topic_names[3] = "/camera/image_raw";
    add(dump, Tp::client_publish, 42, 0, 0, 3);
    const auto path = tmp_file("ft_chrome_instant.json");
    export_chrome(dump, path.string());
    const json j = load_json_file(path);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["ph"] == "i");
    CHECK(j[0]["name"] == "client_publish");
    CHECK(j[0]["args"]["topic"] == "/camera/image_raw");
    // sub-microsecond fraction preserved to 3 decimals
    CHECK(j[0]["ts"].get<double>() == doctest::Approx(0.042));
    std::filesystem::remove(path);
}

TEST_CASE("unmatched begin degrades to an instant instead of vanishing") {
    TraceDump dump;
    add(dump, Tp::kernel_begin, 10, 0, 0, 64);
    const auto path = tmp_file("ft_chrome_unmatched.json");
    export_chrome(dump, path.string());
    const json j = load_json_file(path);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["ph"] == "i");
    CHECK(j[0]["name"] == "kernel_begin");
    std::filesystem::remove(path);
}

TEST_CASE("csv export re-parses to the same events") {
    TraceDump dump;
    add(dump, Tp::client_publish, 5, 0, 0, 2, 0);
    add(dump, Tp::middleware_take, 15, 1, 0, 2, 1);
    add(dump, Tp::callback_start, 25, 1, 0, 2, 1);
    add(dump, Tp::callback_end, 125, 1, 0, 2, 1);
    const auto path = tmp_file("ft_events.csv");
    export_csv(dump, path.string());
    const auto rows = parse_csv(path);
    REQUIRE(rows.size() == dump.events.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].ts_ns == dump.events[i].ts);
        CHECK(rows[i].tp_name == tracepoint(static_cast<Tp>(dump.events[i].tp)).name);
        CHECK(rows[i].thread == dump.events[i].thread);
        CHECK(rows[i].node == dump.events[i].node);
        CHECK(rows[i].seq == dump.events[i].seq);
        CHECK(rows[i].arg == dump.events[i].arg);
    }
    std::filesystem::remove(path);
}

TEST_CASE("export dispatcher understands both formats and rejects others") {
    TraceDump dump;
    add(dump, Tp::client_publish, 1, 0, 0, 0);
    const auto cj = tmp_file("ft_dispatch.json");
    const auto cc = tmp_file("ft_dispatch.csv");
    export_dump(dump, "chrome_trace_json", cj.string());
    export_dump(dump, "csv", cc.string());
    CHECK(std::filesystem::exists(cj));
    CHECK(std::filesystem::exists(cc));
    CHECK_THROWS_AS(export_dump(dump, "protobuf", "/tmp/x"), ConfigError);
    std::filesystem::remove(cj);
    std::filesystem::remove(cc);
}

TEST_CASE("export to an unwritable path reports the failure") {
    TraceDump dump;
    CHECK_THROWS_AS(export_csv(dump, "/nonexistent_dir_zzz/x.csv"), RuntimeError);
    CHECK_THROWS_AS(export_chrome(dump, "/nonexistent_dir_zzz/x.json"), RuntimeError);
}
