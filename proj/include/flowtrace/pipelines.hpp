// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowtrace/device_sim.hpp"
#include "flowtrace/graph.hpp"
#include "flowtrace/kernels.hpp"

namespace flowtrace::pipe {

/// The four execution configurations of the case-study graph.
enum class PipelineVariant { CpuBaseline, AccelPerNode, AccelFused, AccelStreaming };

PipelineVariant parse_variant(const std::string& name);  // cpu|accel|fused|streaming
std::string to_string(PipelineVariant v);
const std::vector<PipelineVariant>& all_variants();

/// Synthetic camera replacing the simulator feed: deterministic seeded
/// frames at a fixed rate on /camera/image_raw plus the camera model on
/// /camera/camera_info once per frame.
struct SourceConfig {
    int width = 640;
    int height = 480;
    int channels = 1;
    double rate_hz = 30.0;
    uint64_t seed = 1;
    kernels::CameraModel camera;
    uint64_t count = 0;       // frames to publish; 0 = bounded by stop condition
    int64_t duration_ns = 0;  // optional publishing bound

    int64_t period_ns() const;
    void validate() const;
};

/// Default intrinsics for the configured frame size (gentle barrel
/// distortion, principal point at the center).
kernels::CameraModel default_camera(int width, int height);

struct SinkRecord {
    uint64_t seq = 0;
    uint64_t payload_hash = 0;  // FNV-1a over the payload bytes
    int64_t arrival_ts = 0;
    int64_t origin_ts = 0;
};

/// The sink node's record of everything it received, for cross-variant
/// equivalence checks and tracing-free latency stats.
class SinkRecorder {
public:
    void add(SinkRecord r);
    std::vector<SinkRecord> snapshot() const;
    /// Order-sensitive hash of (seq, payload_hash) pairs.
    uint64_t combined_hash() const;

private:
    mutable std::mutex mu_;
    std::vector<SinkRecord> records_;
};

/// Everything needed to run one variant: the topology, the device map for
/// Graph::create, and a wire() step that binds callbacks and the source
/// timer onto the created graph.
struct Pipeline {
    graph::GraphSpec spec;
    std::map<int, sim::DevicePtr> devices;
    std::shared_ptr<SinkRecorder> sink;
    std::function<void(graph::Graph&)> wire;
    std::string final_topic;
    graph::NodeId sink_node = -1;
};

/// Topic names of the case-study graph.
inline constexpr const char* kTopicImageRaw = "/camera/image_raw";
inline constexpr const char* kTopicCameraInfo = "/camera/camera_info";
inline constexpr const char* kTopicImageRect = "/camera/image_rect";
inline constexpr const char* kTopicImageResized = "/camera/image_resized";

Pipeline build_pipeline(PipelineVariant variant, const SourceConfig& source,
                        const kernels::ResizeParams& resize, const std::string& backend_name,
                        const sim::BackendRegistry& registry, const CostModel& cost,
                        int executor_workers = 2);

}  // namespace flowtrace::pipe
