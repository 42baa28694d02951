// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "flowtrace/kernels.hpp"

namespace flowtrace::kernels {

/// Plain (ASCII) PGM for 1-channel and PPM for 3-channel images, so test
/// fixtures stay human-inspectable.
void save_pnm(const Image& img, const std::string& path);
Image load_pnm(const std::string& path);

}  // namespace flowtrace::kernels
