// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowtrace {

using Bytes = std::vector<uint8_t>;

/// Configuration / construction errors (bad specs, bad files, bad params).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Errors raised while a graph or device is running.
struct RuntimeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a. Fixed across the project so sink hashes are comparable
/// between runs and report files.
inline uint64_t fnv1a64(std::span<const uint8_t> data, uint64_t seed = 0xcbf29ce484222325ULL) {
    uint64_t h = seed;
    for (uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) {
    return fnv1a64(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
}

inline std::string to_hex(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

}  // namespace flowtrace
