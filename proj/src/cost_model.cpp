// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/cost_model.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flowtrace {

void CostModel::validate() const {
    auto nonneg = [](double v, const char* what) {
        if (v < 0) throw ConfigError(std::string("cost model: ") + what + " must be >= 0");
    };
    nonneg(static_cast<double>(h2d_fixed_ns), "h2d_fixed_ns");
    nonneg(h2d_per_byte_ns, "h2d_per_byte_ns");
    nonneg(static_cast<double>(d2h_fixed_ns), "d2h_fixed_ns");
    nonneg(d2h_per_byte_ns, "d2h_per_byte_ns");
    nonneg(static_cast<double>(launch_fixed_ns), "launch_fixed_ns");
    nonneg(stream_per_beat_ns, "stream_per_beat_ns");
    nonneg(static_cast<double>(layer_fixed_ns), "layer_fixed_ns");
    nonneg(layer_per_byte_ns, "layer_per_byte_ns");
    for (const auto& [k, v] : per_pixel_ns) nonneg(v, ("per_pixel_ns." + k).c_str());
    if (stream_beat_bytes < 1) throw ConfigError("cost model: stream_beat_bytes must be >= 1");
}

double CostModel::pixel_rate(const std::string& kernel) const {
    auto it = per_pixel_ns.find(kernel);
    if (it == per_pixel_ns.end()) {
        throw ConfigError("cost model: no per_pixel_ns entry for kernel '" + kernel + "'");
    }
    return it->second;
}

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

CostModel parse_cost_model_text(const std::string& text) {
    CostModel m;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("cost preset line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "h2d_fixed_ns") m.h2d_fixed_ns = std::stoll(val);
            else if (key == "h2d_per_byte_ns") m.h2d_per_byte_ns = std::stod(val);
            else if (key == "d2h_fixed_ns") m.d2h_fixed_ns = std::stoll(val);
            else if (key == "d2h_per_byte_ns") m.d2h_per_byte_ns = std::stod(val);
            else if (key == "launch_fixed_ns") m.launch_fixed_ns = std::stoll(val);
            else if (key == "stream_beat_bytes") m.stream_beat_bytes = std::stoll(val);
            else if (key == "stream_per_beat_ns") m.stream_per_beat_ns = std::stod(val);
            else if (key == "layer_fixed_ns") m.layer_fixed_ns = std::stoll(val);
            else if (key == "layer_per_byte_ns") m.layer_per_byte_ns = std::stod(val);
            else if (key.rfind("per_pixel_ns.", 0) == 0) {
                m.per_pixel_ns[key.substr(13)] = std::stod(val);
            } else {
                throw ConfigError("cost preset line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("cost preset line " + std::to_string(lineno) + ": bad number '" +
                              val + "'");
        }
    }
    m.validate();
    return m;
}

CostModel load_cost_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cost preset file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cost_model_text(buf.str());
}

std::string cost_model_to_text(const CostModel& m) {
    std::ostringstream out;
    out << "h2d_fixed_ns = " << m.h2d_fixed_ns << "\n";
    out << "h2d_per_byte_ns = " << m.h2d_per_byte_ns << "\n";
    out << "d2h_fixed_ns = " << m.d2h_fixed_ns << "\n";
    out << "d2h_per_byte_ns = " << m.d2h_per_byte_ns << "\n";
    out << "launch_fixed_ns = " << m.launch_fixed_ns << "\n";
    out << "stream_beat_bytes = " << m.stream_beat_bytes << "\n";
    out << "stream_per_beat_ns = " << m.stream_per_beat_ns << "\n";
    out << "layer_fixed_ns = " << m.layer_fixed_ns << "\n";
    out << "layer_per_byte_ns = " << m.layer_per_byte_ns << "\n";
    for (const auto& [k, v] : m.per_pixel_ns) {
        out << "per_pixel_ns." << k << " = " << v << "\n";
    }
    return out.str();
}

CostModel load_cost_preset(const std::string& name) {
    std::string file = name;
    for (char& c : file) {
        if (c == '-') c = '_';
    }
    file += ".cost";
    std::vector<std::string> dirs;
    if (const char* env = std::getenv("FLOWTRACE_PRESET_PATH")) dirs.push_back(env);
    dirs.push_back("presets");
#ifdef FLOWTRACE_SOURCE_PRESET_DIR
    dirs.push_back(FLOWTRACE_SOURCE_PRESET_DIR);
#endif
    for (const auto& dir : dirs) {
        const std::filesystem::path p = std::filesystem::path(dir) / file;
        if (std::filesystem::exists(p)) return load_cost_model_file(p.string());
    }
    throw ConfigError("cost preset '" + name + "' not found (looked for " + file + ")");
}

}  // namespace flowtrace
