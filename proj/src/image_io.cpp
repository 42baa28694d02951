// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/image_io.hpp"

#include <fstream>
#include <sstream>

namespace flowtrace::kernels {

void save_pnm(const Image& img, const std::string& path) {
    if (!img.valid()) throw ConfigError("save_pnm: invalid image");
    std::ofstream out(path);
    if (!out) throw RuntimeError("save_pnm: cannot open " + path);
    out << (img.channels == 1 ? "P2" : "P3") << "\n";
    out << img.width << " " << img.height << "\n255\n";
    size_t per_line = 0;
    for (size_t i = 0; i < img.data.size(); ++i) {
        out << static_cast<int>(img.data[i]);
        if (++per_line == 16) {
            out << "\n";
            per_line = 0;
        } else {
            out << " ";
        }
    }
    out << "\n";
    if (!out) throw RuntimeError("save_pnm: write failed for " + path);
}

Image load_pnm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RuntimeError("load_pnm: cannot open " + path);
    std::string magic;
    in >> magic;
    int channels = 0;
    if (magic == "P2") channels = 1;
    else if (magic == "P3") channels = 3;
    else throw ConfigError("load_pnm: unsupported magic " + magic);
    // Skip comment lines between tokens.
    auto next_int = [&in, &path]() {
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            long v;
            if (!(in >> v)) throw ConfigError("load_pnm: truncated file " + path);
            return v;
        }
    };
    const int w = static_cast<int>(next_int());
    const int h = static_cast<int>(next_int());
    const long maxval = next_int();
    if (maxval != 255) throw ConfigError("load_pnm: only maxval 255 supported");
    Image img = make_image(w, h, channels);
    for (size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<uint8_t>(next_int());
    }
    return img;
}

}  // namespace flowtrace::kernels
