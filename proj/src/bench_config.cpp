// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include "flowtrace/bench.hpp"

namespace flowtrace::bench {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            cur = trim(cur);
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

[[noreturn]] void unknown(const std::string& section, const std::string& key) {
    throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
}

}  // namespace

void BenchConfig::finalize() {
    if (!camera_given) {
        source.camera = pipe::default_camera(source.width, source.height);
    }
    if (source.camera.width == 0 && source.camera.height == 0) {
        source.camera.width = source.width;
        source.camera.height = source.height;
    }
    source.validate();
    if (!resize.valid()) throw ConfigError("config: resize dims must be >= 1");
    if (variants.empty()) throw ConfigError("config: at least one variant required");
    if (stop.messages == 0 && stop.duration_s <= 0) {
        throw ConfigError("config: stop needs messages > 0 or duration_s > 0");
    }
    if (warmup_frames < 0) throw ConfigError("config: warmup_frames must be >= 0");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    for (const auto& f : trace_formats) {
        if (f != "chrome" && f != "chrome_trace_json" && f != "csv") {
            throw ConfigError("config: unknown trace_format '" + f + "'");
        }
    }
}

CostModel BenchConfig::resolve_cost() const {
    if (cost_inline) return *cost_inline;
    if (!cost_preset_file.empty()) return load_cost_model_file(cost_preset_file);
    return load_cost_preset(cost_preset);
}

BenchConfig parse_bench_config_text(const std::string& text) {
    BenchConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    std::string inline_cost_text;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (section == "source") {
                if (key == "width") cfg.source.width = std::stoi(val);
                else if (key == "height") cfg.source.height = std::stoi(val);
                else if (key == "channels") cfg.source.channels = std::stoi(val);
                else if (key == "rate_hz") cfg.source.rate_hz = std::stod(val);
                else if (key == "seed") cfg.source.seed = std::stoull(val);
                else unknown(section, key);
            } else if (section == "camera") {
                cfg.camera_given = true;
                auto& cam = cfg.source.camera;
                if (key == "fx") cam.fx = std::stod(val);
                else if (key == "fy") cam.fy = std::stod(val);
                else if (key == "cx") cam.cx = std::stod(val);
                else if (key == "cy") cam.cy = std::stod(val);
                else if (key == "k1") cam.k1 = std::stod(val);
                else if (key == "k2") cam.k2 = std::stod(val);
                else if (key == "k3") cam.k3 = std::stod(val);
                else if (key == "p1") cam.p1 = std::stod(val);
                else if (key == "p2") cam.p2 = std::stod(val);
                else if (key == "width") cam.width = std::stoi(val);
                else if (key == "height") cam.height = std::stoi(val);
                else unknown(section, key);
            } else if (section == "resize") {
                if (key == "out_width") cfg.resize.out_width = std::stoi(val);
                else if (key == "out_height") cfg.resize.out_height = std::stoi(val);
                else if (key == "interpolation") cfg.resize.interpolation = kernels::parse_interp(val);
                else unknown(section, key);
            } else if (section == "cost_model") {
                if (key == "preset") cfg.cost_preset = val;
                else if (key == "preset_file") cfg.cost_preset_file = val;
                else inline_cost_text += key + " = " + val + "\n";
            } else if (section == "tracing") {
                if (key == "enabled") cfg.tracing.enabled = parse_bool(val, key);
                else if (key == "ring_capacity") cfg.tracing.ring_capacity = std::stoull(val);
                else unknown(section, key);
            } else if (section == "run") {
                if (key == "variant") {
                    cfg.variants.clear();
                    for (const auto& v : split_list(val)) {
                        cfg.variants.push_back(pipe::parse_variant(v));
                    }
                } else if (key == "mode") {
                    if (val == "real") cfg.mode = TimingMode::Real;
                    else if (val == "model") cfg.mode = TimingMode::Model;
                    else throw ConfigError("config: mode must be real|model");
                } else if (key == "messages") {
                    cfg.stop.messages = std::stoull(val);
                } else if (key == "duration_s") {
                    cfg.stop.duration_s = std::stod(val);
                    if (cfg.stop.duration_s > 0) cfg.stop.messages = 0;
                } else if (key == "warmup_frames") {
                    cfg.warmup_frames = std::stoi(val);
                } else if (key == "backend") {
                    cfg.backend = val;
                } else if (key == "workers") {
                    cfg.workers = std::stoi(val);
                } else if (key == "queue_depth") {
                    cfg.queue_depth = std::stoull(val);
                } else if (key == "payload_copy") {
                    cfg.payload_copy = parse_bool(val, key);
                } else if (key == "out") {
                    cfg.out_path = val;
                } else if (key == "trace_out") {
                    cfg.trace_out_dir = val;
                } else if (key == "trace_format") {
                    cfg.trace_formats = split_list(val);
                } else {
                    unknown(section, key);
                }
            } else {
                throw ConfigError("config line " + std::to_string(lineno) + ": unknown section [" +
                                  section + "]");
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": bad number '" + val +
                              "'");
        } catch (const std::out_of_range&) {
            throw ConfigError("config line " + std::to_string(lineno) + ": number out of range");
        }
    }
    if (!inline_cost_text.empty()) {
        cfg.cost_inline = parse_cost_model_text(inline_cost_text);
    }
    return cfg;
}

BenchConfig load_bench_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_bench_config_text(buf.str());
}

std::string canonical_config(const BenchConfig& cfg) {
    std::ostringstream out;
    out << "backend=" << cfg.backend << "\n";
    out << "camera=" << cfg.source.camera.fx << "," << cfg.source.camera.fy << ","
        << cfg.source.camera.cx << "," << cfg.source.camera.cy << "," << cfg.source.camera.k1
        << "," << cfg.source.camera.k2 << "," << cfg.source.camera.k3 << ","
        << cfg.source.camera.p1 << "," << cfg.source.camera.p2 << "\n";
    out << "cost=\n" << cost_model_to_text(cfg.resolve_cost());
    out << "mode=" << (cfg.mode == TimingMode::Model ? "model" : "real") << "\n";
    out << "payload_copy=" << cfg.payload_copy << "\n";
    out << "queue_depth=" << cfg.queue_depth << "\n";
    out << "resize=" << cfg.resize.out_width << "x" << cfg.resize.out_height << ","
        << kernels::to_string(cfg.resize.interpolation) << "\n";
    out << "source=" << cfg.source.width << "x" << cfg.source.height << "x"
        << cfg.source.channels << ",rate=" << cfg.source.rate_hz << ",seed=" << cfg.source.seed
        << "\n";
    out << "stop=" << cfg.stop.messages << "," << cfg.stop.duration_s << "\n";
    out << "tracing=" << cfg.tracing.enabled << "," << cfg.tracing.ring_capacity << "\n";
    out << "variants=";
    for (const auto& v : cfg.variants) out << pipe::to_string(v) << ",";
    out << "\n";
    out << "warmup=" << cfg.warmup_frames << "\n";
    out << "workers=" << cfg.workers << "\n";
    return out.str();
}

}  // namespace flowtrace::bench
