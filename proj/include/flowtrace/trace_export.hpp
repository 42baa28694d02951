// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "flowtrace/tracer.hpp"

namespace flowtrace {

/// Chrome Trace Event Format JSON (plain event array). Begin/end pairs —
/// callbacks, transfers, kernels, stream ops — become duration events;
/// everything else is emitted as an instant event. Timestamps convert to
/// microseconds keeping three decimals.
void export_chrome(const TraceDump& dump, const std::string& path);

/// One row per event: ts_ns,tp_name,thread,node,seq,arg
void export_csv(const TraceDump& dump, const std::string& path);

/// format: "chrome_trace_json" (alias "chrome") or "csv".
void export_dump(const TraceDump& dump, const std::string& format, const std::string& path);

}  // namespace flowtrace
