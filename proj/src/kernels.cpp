// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/kernels.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>

namespace flowtrace::kernels {

Image make_image(int width, int height, int channels) {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw ConfigError("bad image dimensions");
    }
    Image img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.data.assign(img.expected_size(), 0);
    return img;
}

namespace {
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

Image random_image(int width, int height, int channels, uint64_t seed, uint64_t frame) {
    Image img = make_image(width, height, channels);
    uint64_t state = seed ^ (frame * 0xd1342543de82ef95ULL + 0x632be59bd9b4e019ULL);
    size_t i = 0;
    const size_t n = img.data.size();
    while (i + 8 <= n) {
        const uint64_t v = splitmix64(state);
        std::memcpy(img.data.data() + i, &v, 8);
        i += 8;
    }
    if (i < n) {
        const uint64_t v = splitmix64(state);
        std::memcpy(img.data.data() + i, &v, n - i);
    }
    return img;
}

Bytes encode_camera_model(const CameraModel& cam) {
    Bytes out(kCameraModelWireSize);
    const double d[9] = {cam.fx, cam.fy, cam.cx, cam.cy, cam.k1, cam.k2, cam.k3, cam.p1, cam.p2};
    std::memcpy(out.data(), d, 72);
    const uint32_t w = static_cast<uint32_t>(cam.width);
    const uint32_t h = static_cast<uint32_t>(cam.height);
    std::memcpy(out.data() + 72, &w, 4);
    std::memcpy(out.data() + 76, &h, 4);
    return out;
}

CameraModel decode_camera_model(std::span<const uint8_t> bytes) {
    if (bytes.size() != kCameraModelWireSize) {
        throw ConfigError("camera model payload must be 80 bytes");
    }
    CameraModel cam;
    double d[9];
    std::memcpy(d, bytes.data(), 72);
    cam.fx = d[0];
    cam.fy = d[1];
    cam.cx = d[2];
    cam.cy = d[3];
    cam.k1 = d[4];
    cam.k2 = d[5];
    cam.k3 = d[6];
    cam.p1 = d[7];
    cam.p2 = d[8];
    uint32_t w = 0, h = 0;
    std::memcpy(&w, bytes.data() + 72, 4);
    std::memcpy(&h, bytes.data() + 76, 4);
    cam.width = static_cast<int>(w);
    cam.height = static_cast<int>(h);
    return cam;
}

Interp parse_interp(const std::string& s) {
    if (s == "bilinear") return Interp::bilinear;
    if (s == "nearest") return Interp::nearest;
    throw ConfigError("unknown interpolation: " + s);
}

std::string to_string(Interp interp) {
    return interp == Interp::bilinear ? "bilinear" : "nearest";
}

namespace {

// Half away from zero for the non-negative values bilinear interpolation
// of bytes produces. floor(v + 0.5) with a correction for the one case
// where the addition rounds upward across an integer boundary; agrees
// with llround on the whole domain (the serial-reference equality tests
// exercise this).
inline uint8_t round_byte(double v) {
    long long r = static_cast<long long>(v + 0.5);
    if (static_cast<double>(r) - 0.5 > v) --r;
    if (r < 0) return 0;
    if (r > 255) return 255;
    return static_cast<uint8_t>(r);
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Distorted source position for output pixel (u, v), plumb-bob model.
inline void distort_map(const CameraModel& cam, double u, double v, double& sx, double& sy) {
    const double x = (u - cam.cx) / cam.fx;
    const double y = (v - cam.cy) / cam.fy;
    const double r2 = x * x + y * y;
    const double radial = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2 + cam.k3 * r2 * r2 * r2;
    const double xd = x * radial + 2.0 * cam.p1 * x * y + cam.p2 * (r2 + 2.0 * x * x);
    const double yd = y * radial + cam.p1 * (r2 + 2.0 * y * y) + 2.0 * cam.p2 * x * y;
    sx = cam.fx * xd + cam.cx;
    sy = cam.fy * yd + cam.cy;
}

// Precomputed inverse map for one (camera, frame) pair: per output pixel
// the top-left source tap (x0 < 0 marks out-of-bounds black) and the
// bilinear fractions. The camera is fixed per pipeline run, so the map is
// paid once, not per frame.
struct RectifyMap {
    int width = 0;
    int height = 0;
    std::vector<int32_t> x0;
    std::vector<int32_t> y0;
    std::vector<double> fx;
    std::vector<double> fy;
};

using MapKey = std::array<uint8_t, 80>;

MapKey map_key(const CameraModel& cam) {
    MapKey key{};
    const Bytes wire = encode_camera_model(cam);
    std::memcpy(key.data(), wire.data(), key.size());
    return key;
}

std::shared_ptr<const RectifyMap> build_rectify_map(const CameraModel& cam) {
    auto map = std::make_shared<RectifyMap>();
    map->width = cam.width;
    map->height = cam.height;
    const size_t n = static_cast<size_t>(cam.width) * cam.height;
    map->x0.resize(n);
    map->y0.resize(n);
    map->fx.resize(n);
    map->fy.resize(n);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < cam.height; ++v) {
        size_t idx = static_cast<size_t>(v) * cam.width;
        for (int u = 0; u < cam.width; ++u, ++idx) {
            double sx, sy;
            distort_map(cam, u, v, sx, sy);
            if (sx >= 0.0 && sx <= cam.width - 1.0 && sy >= 0.0 && sy <= cam.height - 1.0) {
                const int x0 = static_cast<int>(std::floor(sx));
                const int y0 = static_cast<int>(std::floor(sy));
                map->x0[idx] = x0;
                map->y0[idx] = y0;
                map->fx[idx] = sx - x0;
                map->fy[idx] = sy - y0;
            } else {
                map->x0[idx] = -1;
                map->y0[idx] = -1;
                map->fx[idx] = 0;
                map->fy[idx] = 0;
            }
        }
    }
    return map;
}

std::shared_ptr<const RectifyMap> get_rectify_map(const CameraModel& cam) {
    static std::mutex mu;
    static std::map<MapKey, std::shared_ptr<const RectifyMap>> cache;
    const MapKey key = map_key(cam);
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto map = build_rectify_map(cam);
    std::lock_guard<std::mutex> lk(mu);
    if (cache.size() > 64) cache.clear();  // unbounded camera churn only in tests
    cache[key] = map;
    return map;
}

}  // namespace

Image rectify(const Image& img, const CameraModel& cam) {
    if (!img.valid()) throw ConfigError("rectify: invalid image");
    if (img.width != cam.width || img.height != cam.height) {
        throw ConfigError("rectify: image and camera dimensions differ");
    }
    const auto map = get_rectify_map(cam);
    Image out = make_image(img.width, img.height, img.channels);
    const int w = img.width;
    const int h = img.height;
    const int ch = img.channels;
    const uint8_t* src = img.data.data();
    uint8_t* dst = out.data.data();
    const size_t row_stride = static_cast<size_t>(w) * ch;
#pragma omp parallel for schedule(static)
    for (int v = 0; v < h; ++v) {
        size_t idx = static_cast<size_t>(v) * w;
        uint8_t* drow = dst + static_cast<size_t>(v) * row_stride;
        for (int u = 0; u < w; ++u, ++idx) {
            const int x0 = map->x0[idx];
            if (x0 < 0) {
                for (int c = 0; c < ch; ++c) drow[static_cast<size_t>(u) * ch + c] = 0;
                continue;
            }
            const int y0 = map->y0[idx];
            const double fx = map->fx[idx];
            const double fy = map->fy[idx];
            const int x1 = x0 + 1 > w - 1 ? w - 1 : x0 + 1;
            const int y1 = y0 + 1 > h - 1 ? h - 1 : y0 + 1;
            const uint8_t* r0 = src + static_cast<size_t>(y0) * row_stride;
            const uint8_t* r1 = src + static_cast<size_t>(y1) * row_stride;
            for (int c = 0; c < ch; ++c) {
                const double v00 = r0[static_cast<size_t>(x0) * ch + c];
                const double v10 = r0[static_cast<size_t>(x1) * ch + c];
                const double v01 = r1[static_cast<size_t>(x0) * ch + c];
                const double v11 = r1[static_cast<size_t>(x1) * ch + c];
                const double val = (v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                                   (v01 * (1 - fx) + v11 * fx) * fy;
                drow[static_cast<size_t>(u) * ch + c] = round_byte(val);
            }
        }
    }
    return out;
}

Image resize(const Image& img, const ResizeParams& p) {
    if (!img.valid()) throw ConfigError("resize: invalid image");
    if (!p.valid()) throw ConfigError("resize: invalid params");
    Image out = make_image(p.out_width, p.out_height, img.channels);
    const double sx_scale = static_cast<double>(img.width) / p.out_width;
    const double sy_scale = static_cast<double>(img.height) / p.out_height;
    const int ch = img.channels;
    const int w = img.width;
    const int h = img.height;
    const bool nearest = p.interpolation == Interp::nearest;
    const uint8_t* src = img.data.data();
    uint8_t* dst = out.data.data();
    const size_t in_stride = static_cast<size_t>(w) * ch;
    const size_t out_stride = static_cast<size_t>(p.out_width) * ch;

    // Column geometry is row-invariant.
    std::vector<int> col_x0(p.out_width), col_x1(p.out_width), col_nx(p.out_width);
    std::vector<double> col_fx(p.out_width);
    for (int dx = 0; dx < p.out_width; ++dx) {
        const double sx = (dx + 0.5) * sx_scale - 0.5;
        if (nearest) {
            col_nx[dx] = clampi(static_cast<int>(std::llround(sx)), 0, w - 1);
        } else {
            const int x0 = static_cast<int>(std::floor(sx));
            col_fx[dx] = sx - x0;
            col_x0[dx] = clampi(x0, 0, w - 1);
            col_x1[dx] = clampi(x0 + 1, 0, w - 1);
        }
    }

#pragma omp parallel for schedule(static)
    for (int dy = 0; dy < p.out_height; ++dy) {
        const double sy = (dy + 0.5) * sy_scale - 0.5;
        uint8_t* drow = dst + static_cast<size_t>(dy) * out_stride;
        if (nearest) {
            const int ny = clampi(static_cast<int>(std::llround(sy)), 0, h - 1);
            const uint8_t* srow = src + static_cast<size_t>(ny) * in_stride;
            for (int dx = 0; dx < p.out_width; ++dx) {
                for (int c = 0; c < ch; ++c) {
                    drow[static_cast<size_t>(dx) * ch + c] =
                        srow[static_cast<size_t>(col_nx[dx]) * ch + c];
                }
            }
            continue;
        }
        const int y0 = static_cast<int>(std::floor(sy));
        const double fy = sy - y0;
        const int y0c = clampi(y0, 0, h - 1);
        const int y1c = clampi(y0 + 1, 0, h - 1);
        const uint8_t* r0 = src + static_cast<size_t>(y0c) * in_stride;
        const uint8_t* r1 = src + static_cast<size_t>(y1c) * in_stride;
        for (int dx = 0; dx < p.out_width; ++dx) {
            const int x0 = col_x0[dx];
            const int x1 = col_x1[dx];
            const double fx = col_fx[dx];
            for (int c = 0; c < ch; ++c) {
                const double v00 = r0[static_cast<size_t>(x0) * ch + c];
                const double v10 = r0[static_cast<size_t>(x1) * ch + c];
                const double v01 = r1[static_cast<size_t>(x0) * ch + c];
                const double v11 = r1[static_cast<size_t>(x1) * ch + c];
                const double val = (v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                                   (v01 * (1 - fx) + v11 * fx) * fy;
                drow[static_cast<size_t>(dx) * ch + c] = round_byte(val);
            }
        }
    }
    return out;
}

Image rectify_resize_fused(const Image& img, const CameraModel& cam, const ResizeParams& p) {
    // The intermediate is materialized on purpose: composing the resampling
    // maps would change the numerics and break cross-variant bit-exactness.
    Image mid = rectify(img, cam);
    return resize(mid, p);
}

}  // namespace flowtrace::kernels
