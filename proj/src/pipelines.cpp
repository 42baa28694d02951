// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/pipelines.hpp"

#include <cmath>
#include <cstring>

namespace flowtrace::pipe {

using graph::ChannelKind;
using graph::EdgeSpec;
using graph::Graph;
using graph::Message;
using graph::NodeDescriptor;
using graph::NodeId;
using graph::Placement;
using kernels::CameraModel;
using kernels::Image;
using kernels::ResizeParams;

PipelineVariant parse_variant(const std::string& name) {
    if (name == "cpu") return PipelineVariant::CpuBaseline;
    if (name == "accel") return PipelineVariant::AccelPerNode;
    if (name == "fused") return PipelineVariant::AccelFused;
    if (name == "streaming") return PipelineVariant::AccelStreaming;
    throw ConfigError("unknown pipeline variant: " + name +
                      " (expected cpu|accel|fused|streaming)");
}

std::string to_string(PipelineVariant v) {
    switch (v) {
        case PipelineVariant::CpuBaseline: return "cpu";
        case PipelineVariant::AccelPerNode: return "accel";
        case PipelineVariant::AccelFused: return "fused";
        case PipelineVariant::AccelStreaming: return "streaming";
    }
    return "?";
}

const std::vector<PipelineVariant>& all_variants() {
    static const std::vector<PipelineVariant> v = {
        PipelineVariant::CpuBaseline, PipelineVariant::AccelPerNode, PipelineVariant::AccelFused,
        PipelineVariant::AccelStreaming};
    return v;
}

int64_t SourceConfig::period_ns() const {
    return static_cast<int64_t>(std::llround(1e9 / rate_hz));
}

void SourceConfig::validate() const {
    if (width < 1 || height < 1 || (channels != 1 && channels != 3)) {
        throw ConfigError("source: bad frame dimensions");
    }
    if (rate_hz <= 0) throw ConfigError("source: rate_hz must be positive");
    if (camera.width != width || camera.height != height) {
        throw ConfigError("source: camera dims must match the frame");
    }
}

kernels::CameraModel default_camera(int width, int height) {
    CameraModel cam;
    cam.fx = 0.9 * width;
    cam.fy = 0.9 * width;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    cam.k1 = 0.08;
    cam.k2 = -0.02;
    cam.width = width;
    cam.height = height;
    return cam;
}

void SinkRecorder::add(SinkRecord r) {
    std::lock_guard<std::mutex> lk(mu_);
    records_.push_back(r);
}

std::vector<SinkRecord> SinkRecorder::snapshot() const {
    std::lock_guard<std::mutex> lk(mu_);
    return records_;
}

uint64_t SinkRecorder::combined_hash() const {
    std::lock_guard<std::mutex> lk(mu_);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : records_) {
        uint8_t buf[16];
        std::memcpy(buf, &r.seq, 8);
        std::memcpy(buf + 8, &r.payload_hash, 8);
        h = fnv1a64(std::span<const uint8_t>(buf, 16), h);
    }
    return h;
}

namespace {

constexpr NodeId kSourceId = 0;
constexpr NodeId kRectifyId = 1;
constexpr NodeId kResizeId = 2;

// Mutable state shared by a middle node's callbacks (the cached camera
// model updated from /camera/camera_info).
struct NodeState {
    CameraModel cam;
};

Image image_from_payload(const Bytes& payload, int w, int h, int ch) {
    Image img;
    img.width = w;
    img.height = h;
    img.channels = ch;
    img.data = payload;
    if (!img.valid()) throw RuntimeError("pipeline: payload does not match frame dims");
    return img;
}

}  // namespace

Pipeline build_pipeline(PipelineVariant variant, const SourceConfig& source,
                        const ResizeParams& resize, const std::string& backend_name,
                        const sim::BackendRegistry& registry, const CostModel& cost,
                        int executor_workers) {
    source.validate();
    if (!resize.valid()) throw ConfigError("resize params invalid");
    const sim::BackendPtr backend = registry.lookup(backend_name);
    const bool offloaded = variant != PipelineVariant::CpuBaseline;
    if (offloaded && !backend->supports_offload()) {
        throw ConfigError("variant '" + to_string(variant) + "' needs an offload-capable backend; '" +
                          backend_name + "' runs on the host only");
    }
    sim::DevicePtr dev = offloaded ? backend->device() : nullptr;
    const Placement middle =
        offloaded ? Placement::device(dev->id()) : Placement::host();

    Pipeline p;
    p.sink = std::make_shared<SinkRecorder>();
    p.final_topic = kTopicImageResized;
    if (dev) p.devices[dev->id()] = dev;

    const bool fused = variant == PipelineVariant::AccelFused;
    const bool streaming = variant == PipelineVariant::AccelStreaming;
    const NodeId sink_id = fused ? 2 : 3;
    p.sink_node = sink_id;

    NodeDescriptor src;
    src.id = kSourceId;
    src.name = "camera_source";
    src.publications = {kTopicImageRaw, kTopicCameraInfo};

    NodeDescriptor sink;
    sink.id = sink_id;
    sink.name = "sink";
    sink.subscriptions = {{kTopicImageResized, 0}};

    p.spec.executor_workers = executor_workers;
    if (fused) {
        NodeDescriptor mid;
        mid.id = kRectifyId;
        mid.name = "rectify_resize";
        mid.placement = middle;
        mid.subscriptions = {{kTopicImageRaw, 0}, {kTopicCameraInfo, 1}};
        mid.publications = {kTopicImageResized};
        p.spec.nodes = {src, mid, sink};
        p.spec.edges = {
            {kSourceId, kTopicImageRaw, kRectifyId, ChannelKind::layered()},
            {kSourceId, kTopicCameraInfo, kRectifyId, ChannelKind::layered()},
            {kRectifyId, kTopicImageResized, sink_id, ChannelKind::layered()},
        };
    } else {
        NodeDescriptor rect;
        rect.id = kRectifyId;
        rect.name = "rectify";
        rect.placement = middle;
        rect.subscriptions = {{kTopicImageRaw, 0}, {kTopicCameraInfo, 1}};
        rect.publications = {kTopicImageRect};

        NodeDescriptor rez;
        rez.id = kResizeId;
        rez.name = "resize";
        rez.placement = middle;
        rez.subscriptions = {{kTopicImageRect, 0}};
        rez.publications = {kTopicImageResized};

        p.spec.nodes = {src, rect, rez, sink};
        p.spec.edges = {
            {kSourceId, kTopicImageRaw, kRectifyId, ChannelKind::layered()},
            {kSourceId, kTopicCameraInfo, kRectifyId, ChannelKind::layered()},
            {kRectifyId, kTopicImageRect, kResizeId,
             streaming ? ChannelKind::device_stream() : ChannelKind::layered()},
            {kResizeId, kTopicImageResized, sink_id, ChannelKind::layered()},
        };
    }

    // --- wiring -------------------------------------------------------------

    const SourceConfig src_cfg = source;
    const ResizeParams rp = resize;
    const CostModel cm = cost;
    auto sink_rec = p.sink;
    const uint64_t in_pixels =
        static_cast<uint64_t>(src_cfg.width) * static_cast<uint64_t>(src_cfg.height);
    const uint64_t out_pixels =
        static_cast<uint64_t>(rp.out_width) * static_cast<uint64_t>(rp.out_height);

    p.wire = [=](Graph& g) {
        Graph* gp = &g;
        // Synthetic camera: camera_info then the frame, same sequence.
        g.set_timer(
            kSourceId, src_cfg.period_ns(),
            [gp, src_cfg](uint64_t k) {
                gp->publish(kSourceId, kTopicCameraInfo,
                            kernels::encode_camera_model(src_cfg.camera));
                Image frame = kernels::random_image(src_cfg.width, src_cfg.height,
                                                    src_cfg.channels, src_cfg.seed, k);
                gp->publish(kSourceId, kTopicImageRaw, std::move(frame.data));
            },
            src_cfg.count);

        auto state = std::make_shared<NodeState>();
        state->cam = src_cfg.camera;

        if (fused) {
            g.subscribe(kRectifyId, kTopicCameraInfo, [state](const Message& m) {
                state->cam = kernels::decode_camera_model(m.payload());
            });
            g.subscribe(kRectifyId, kTopicImageRaw, [gp, state, src_cfg, rp, dev,
                                                     out_pixels](const Message& m) {
                sim::KernelDims dims{src_cfg.width, src_cfg.height, src_cfg.channels,
                                     rp.out_width, rp.out_height};
                const Bytes args = kernels::encode_camera_model(state->cam);
                auto in = dev->h2d(m.payload());
                auto out = dev->alloc(out_pixels * src_cfg.channels);
                dev->launch("rectify_resize_fused", {in}, out, dims, args);
                Bytes host = dev->d2h(out);
                gp->publish_from(kRectifyId, kTopicImageResized, std::move(host), m.seq,
                               m.origin_ts);
            });
        } else {
            g.subscribe(kRectifyId, kTopicCameraInfo, [state](const Message& m) {
                state->cam = kernels::decode_camera_model(m.payload());
            });
            if (!offloaded) {
                g.subscribe(kRectifyId, kTopicImageRaw, [gp, state, src_cfg, cm,
                                                         in_pixels](const Message& m) {
                    ExecContext* ctx = current_context();
                    const int64_t t0 = ctx ? ctx->now() : 0;
                    Image img = image_from_payload(m.payload(), src_cfg.width, src_cfg.height,
                                                   src_cfg.channels);
                    Image out = kernels::rectify(img, state->cam);
                    if (ctx) ctx->settle(t0, cm.host_compute_cost("rectify", in_pixels));
                    gp->publish_from(kRectifyId, kTopicImageRect, std::move(out.data), m.seq,
                                   m.origin_ts);
                });
                g.subscribe(kResizeId, kTopicImageRect, [gp, src_cfg, rp, cm,
                                                         out_pixels](const Message& m) {
                    ExecContext* ctx = current_context();
                    const int64_t t0 = ctx ? ctx->now() : 0;
                    Image img = image_from_payload(m.payload(), src_cfg.width, src_cfg.height,
                                                   src_cfg.channels);
                    Image out = kernels::resize(img, rp);
                    if (ctx) ctx->settle(t0, cm.host_compute_cost("resize", out_pixels));
                    gp->publish_from(kResizeId, kTopicImageResized, std::move(out.data), m.seq,
                                   m.origin_ts);
                });
            } else if (!streaming) {
                // Per-node offload: full h2d / launch / d2h round trip at
                // each node, layered channel in between.
                g.subscribe(kRectifyId, kTopicImageRaw, [gp, state, src_cfg, dev,
                                                         in_pixels](const Message& m) {
                    sim::KernelDims dims{src_cfg.width, src_cfg.height, src_cfg.channels,
                                         src_cfg.width, src_cfg.height};
                    const Bytes args = kernels::encode_camera_model(state->cam);
                    auto in = dev->h2d(m.payload());
                    auto out = dev->alloc(in_pixels * src_cfg.channels);
                    dev->launch("rectify", {in}, out, dims, args);
                    Bytes host = dev->d2h(out);
                    gp->publish_from(kRectifyId, kTopicImageRect, std::move(host), m.seq,
                                   m.origin_ts);
                });
                g.subscribe(kResizeId, kTopicImageRect, [gp, src_cfg, rp, dev,
                                                         out_pixels](const Message& m) {
                    sim::KernelDims dims{src_cfg.width, src_cfg.height, src_cfg.channels,
                                         rp.out_width, rp.out_height};
                    auto in = dev->h2d(m.payload());
                    auto out = dev->alloc(out_pixels * src_cfg.channels);
                    dev->launch("resize", {in}, out, dims);
                    Bytes host = dev->d2h(out);
                    gp->publish_from(kResizeId, kTopicImageResized, std::move(host), m.seq,
                               m.origin_ts);
                });
            } else {
                // Streaming: one h2d before rectify, the rect->resize hop
                // rides the device stream queue, one d2h after resize.
                g.subscribe(kRectifyId, kTopicImageRaw, [gp, state, src_cfg, dev,
                                                         in_pixels](const Message& m) {
                    sim::KernelDims dims{src_cfg.width, src_cfg.height, src_cfg.channels,
                                         src_cfg.width, src_cfg.height};
                    const Bytes args = kernels::encode_camera_model(state->cam);
                    auto in = dev->h2d(m.payload());
                    auto out = dev->alloc(in_pixels * src_cfg.channels);
                    dev->launch("rectify", {in}, out, dims, args);
                    // Device-resident output enters the stream queue without
                    // touching the host.
                    gp->publish_from(kRectifyId, kTopicImageRect, dev->peek_local(out), m.seq,
                                   m.origin_ts);
                });
                g.subscribe(kResizeId, kTopicImageRect, [gp, src_cfg, rp, dev,
                                                         out_pixels](const Message& m) {
                    sim::KernelDims dims{src_cfg.width, src_cfg.height, src_cfg.channels,
                                         rp.out_width, rp.out_height};
                    auto in = dev->adopt_local(m.payload());
                    auto out = dev->alloc(out_pixels * src_cfg.channels);
                    dev->launch("resize", {in}, out, dims);
                    Bytes host = dev->d2h(out);
                    gp->publish_from(kResizeId, kTopicImageResized, std::move(host), m.seq,
                                   m.origin_ts);
                });
            }
        }

        g.subscribe(sink_id, kTopicImageResized, [sink_rec](const Message& m) {
            ExecContext* ctx = current_context();
            SinkRecord r;
            r.seq = m.seq;
            r.arrival_ts = ctx ? ctx->now() : 0;  // at callback entry, before hashing
            r.payload_hash = fnv1a64(m.payload());
            r.origin_ts = m.origin_ts;
            sink_rec->add(r);
        });
    };
    return p;
}

}  // namespace flowtrace::pipe
