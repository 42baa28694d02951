// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

// Scalar reference kernels. Deliberately written as plain loops with no
// shared helpers so they can serve as an independent check on the parallel
// implementations.

#include <cmath>

#include "flowtrace/kernels.hpp"

namespace flowtrace::kernels::serial {

namespace {
uint8_t clamp_round(double v) {
    const long long r = std::llround(v);
    return r < 0 ? 0 : (r > 255 ? 255 : static_cast<uint8_t>(r));
}
}  // namespace

Image rectify(const Image& img, const CameraModel& cam) {
    if (!img.valid()) throw ConfigError("rectify: invalid image");
    if (img.width != cam.width || img.height != cam.height) {
        throw ConfigError("rectify: image and camera dimensions differ");
    }
    Image out = make_image(img.width, img.height, img.channels);
    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const double x = (u - cam.cx) / cam.fx;
            const double y = (v - cam.cy) / cam.fy;
            const double r2 = x * x + y * y;
            const double radial = 1.0 + cam.k1 * r2 + cam.k2 * r2 * r2 + cam.k3 * r2 * r2 * r2;
            const double xd = x * radial + 2.0 * cam.p1 * x * y + cam.p2 * (r2 + 2.0 * x * x);
            const double yd = y * radial + cam.p1 * (r2 + 2.0 * y * y) + 2.0 * cam.p2 * x * y;
            const double sx = cam.fx * xd + cam.cx;
            const double sy = cam.fy * yd + cam.cy;
            for (int c = 0; c < img.channels; ++c) {
                double value = 0.0;
                if (sx >= 0.0 && sx <= img.width - 1.0 && sy >= 0.0 && sy <= img.height - 1.0) {
                    int x0 = static_cast<int>(std::floor(sx));
                    int y0 = static_cast<int>(std::floor(sy));
                    const double fx = sx - x0;
                    const double fy = sy - y0;
                    int x1 = x0 + 1;
                    int y1 = y0 + 1;
                    if (x0 < 0) x0 = 0;
                    if (y0 < 0) y0 = 0;
                    if (x1 > img.width - 1) x1 = img.width - 1;
                    if (y1 > img.height - 1) y1 = img.height - 1;
                    const double v00 = img.at(x0, y0, c);
                    const double v10 = img.at(x1, y0, c);
                    const double v01 = img.at(x0, y1, c);
                    const double v11 = img.at(x1, y1, c);
                    value = (v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                            (v01 * (1 - fx) + v11 * fx) * fy;
                    out.at(u, v, c) = clamp_round(value);
                } else {
                    out.at(u, v, c) = 0;
                }
            }
        }
    }
    return out;
}

Image resize(const Image& img, const ResizeParams& p) {
    if (!img.valid()) throw ConfigError("resize: invalid image");
    if (!p.valid()) throw ConfigError("resize: invalid params");
    Image out = make_image(p.out_width, p.out_height, img.channels);
    for (int dy = 0; dy < p.out_height; ++dy) {
        for (int dx = 0; dx < p.out_width; ++dx) {
            const double sx = (dx + 0.5) * (static_cast<double>(img.width) / p.out_width) - 0.5;
            const double sy = (dy + 0.5) * (static_cast<double>(img.height) / p.out_height) - 0.5;
            if (p.interpolation == Interp::nearest) {
                int nx = static_cast<int>(std::llround(sx));
                int ny = static_cast<int>(std::llround(sy));
                if (nx < 0) nx = 0;
                if (ny < 0) ny = 0;
                if (nx > img.width - 1) nx = img.width - 1;
                if (ny > img.height - 1) ny = img.height - 1;
                for (int c = 0; c < img.channels; ++c) out.at(dx, dy, c) = img.at(nx, ny, c);
            } else {
                int x0 = static_cast<int>(std::floor(sx));
                int y0 = static_cast<int>(std::floor(sy));
                const double fx = sx - x0;
                const double fy = sy - y0;
                int x1 = x0 + 1;
                int y1 = y0 + 1;
                if (x0 < 0) x0 = 0;
                if (y0 < 0) y0 = 0;
                if (x1 > img.width - 1) x1 = img.width - 1;
                if (y1 > img.height - 1) y1 = img.height - 1;
                if (x0 > img.width - 1) x0 = img.width - 1;
                if (y0 > img.height - 1) y0 = img.height - 1;
                for (int c = 0; c < img.channels; ++c) {
                    const double v00 = img.at(x0, y0, c);
                    const double v10 = img.at(x1, y0, c);
                    const double v01 = img.at(x0, y1, c);
                    const double v11 = img.at(x1, y1, c);
                    const double val = (v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                                       (v01 * (1 - fx) + v11 * fx) * fy;
                    out.at(dx, dy, c) = clamp_round(val);
                }
            }
        }
    }
    return out;
}

Image rectify_resize_fused(const Image& img, const CameraModel& cam, const ResizeParams& p) {
    Image mid = serial::rectify(img, cam);
    return serial::resize(mid, p);
}

}  // namespace flowtrace::kernels::serial
