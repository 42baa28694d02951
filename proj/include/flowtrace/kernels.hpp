// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "flowtrace/common.hpp"

namespace flowtrace::kernels {

/// Row-major 8-bit image, 1 or 3 channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    Bytes data;

    size_t expected_size() const {
        return static_cast<size_t>(width) * static_cast<size_t>(height) *
               static_cast<size_t>(channels);
    }
    bool valid() const {
        return width > 0 && height > 0 && (channels == 1 || channels == 3) &&
               data.size() == expected_size();
    }
    uint8_t at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

Image make_image(int width, int height, int channels);
/// Deterministic pseudo-random image; same (seed, frame) -> same bytes on
/// every platform.
Image random_image(int width, int height, int channels, uint64_t seed, uint64_t frame = 0);

/// Pinhole intrinsics with plumb-bob (radial k1..k3 + tangential p1,p2)
/// distortion. Identity rectification rotation, monocular only.
struct CameraModel {
    double fx = 1, fy = 1, cx = 0, cy = 0;
    double k1 = 0, k2 = 0, k3 = 0;
    double p1 = 0, p2 = 0;
    int width = 0, height = 0;

    bool valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }
};

/// Fixed 80-byte little-endian wire form (9 doubles + 2 uint32 dims), used
/// for the /camera/camera_info payload.
Bytes encode_camera_model(const CameraModel& cam);
CameraModel decode_camera_model(std::span<const uint8_t> bytes);
constexpr size_t kCameraModelWireSize = 80;

enum class Interp { bilinear, nearest };

struct ResizeParams {
    int out_width = 0;
    int out_height = 0;
    Interp interpolation = Interp::bilinear;

    bool valid() const { return out_width >= 1 && out_height >= 1; }
};

Interp parse_interp(const std::string& s);
std::string to_string(Interp interp);

/// Undistort: inverse-maps each output pixel through the plumb-bob model
/// and samples the source bilinearly. Source lookups outside the image
/// produce black. Throws ConfigError on dimension mismatch.
Image rectify(const Image& img, const CameraModel& cam);

/// Pixel-center convention src = (dst + 0.5) * (in/out) - 0.5, bilinear
/// taps clamped at the edges, rounding half away from zero.
Image resize(const Image& img, const ResizeParams& p);

/// rectify then resize with the intermediate materialized; bit-identical
/// to resize(rectify(img, cam), p) by construction.
Image rectify_resize_fused(const Image& img, const CameraModel& cam, const ResizeParams& p);

/// Straight-line scalar implementations kept as the reference the parallel
/// kernels are tested and benchmarked against.
namespace serial {
Image rectify(const Image& img, const CameraModel& cam);
Image resize(const Image& img, const ResizeParams& p);
Image rectify_resize_fused(const Image& img, const CameraModel& cam, const ResizeParams& p);
}  // namespace serial

}  // namespace flowtrace::kernels
