// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "flowtrace/common.hpp"

namespace flowtrace {

/// Timing model for the simulated target: host<->device transfers, kernel
/// launches, stream-queue beats, and the per-layer cost of the host message
/// stack. All values are calibration data, not hardware ground truth.
///
/// per_pixel_ns maps kernel name -> cost per output pixel. Host execution
/// of a kernel is priced under "<kernel>_host".
struct CostModel {
    int64_t h2d_fixed_ns = 0;
    double h2d_per_byte_ns = 0;
    int64_t d2h_fixed_ns = 0;
    double d2h_per_byte_ns = 0;
    int64_t launch_fixed_ns = 0;
    std::map<std::string, double> per_pixel_ns;
    int64_t stream_beat_bytes = 64;
    double stream_per_beat_ns = 0;
    // Cost of each host-layer segment (6 per layered hop).
    int64_t layer_fixed_ns = 0;
    double layer_per_byte_ns = 0;

    void validate() const;

    int64_t h2d_cost(size_t len) const {
        return h2d_fixed_ns + llround_cost(h2d_per_byte_ns * static_cast<double>(len));
    }
    int64_t d2h_cost(size_t len) const {
        return d2h_fixed_ns + llround_cost(d2h_per_byte_ns * static_cast<double>(len));
    }
    int64_t launch_cost(const std::string& kernel, uint64_t out_pixels) const {
        return launch_fixed_ns + llround_cost(pixel_rate(kernel) * static_cast<double>(out_pixels));
    }
    /// Host execution of `kernel` ("<kernel>_host" entry; 0 when absent).
    int64_t host_compute_cost(const std::string& kernel, uint64_t out_pixels) const {
        auto it = per_pixel_ns.find(kernel + "_host");
        if (it == per_pixel_ns.end()) return 0;
        return llround_cost(it->second * static_cast<double>(out_pixels));
    }
    /// Beats needed for a frame: one length header plus ceil(len/W) data.
    uint64_t stream_beats(size_t len) const {
        const uint64_t w = static_cast<uint64_t>(stream_beat_bytes);
        return 1 + (len + w - 1) / w;
    }
    int64_t stream_cost(size_t len) const {
        return llround_cost(stream_per_beat_ns * static_cast<double>(stream_beats(len)));
    }
    int64_t layer_cost(size_t len) const {
        return layer_fixed_ns + llround_cost(layer_per_byte_ns * static_cast<double>(len));
    }

    double pixel_rate(const std::string& kernel) const;

    static int64_t llround_cost(double v) { return static_cast<int64_t>(std::llround(v)); }
};

/// Parses the key/value preset format:
///   key = value            (scalar fields, names as in CostModel)
///   per_pixel_ns.<kernel> = value
/// '#' starts a comment.
CostModel parse_cost_model_text(const std::string& text);
CostModel load_cost_model_file(const std::string& path);
std::string cost_model_to_text(const CostModel& m);

/// Resolves a preset name ("paper-calibrated" -> paper_calibrated.cost)
/// against $FLOWTRACE_PRESET_PATH, ./presets, and the build-time preset dir.
CostModel load_cost_preset(const std::string& name);

}  // namespace flowtrace
