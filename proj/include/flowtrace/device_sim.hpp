// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowtrace/common.hpp"
#include "flowtrace/cost_model.hpp"
#include "flowtrace/timebase.hpp"
#include "flowtrace/tracer.hpp"

namespace flowtrace::sim {

class Device;
using DevicePtr = std::shared_ptr<Device>;

/// Device-resident byte buffer. Host code can only observe the contents
/// through Device::d2h (or the no-cost local accessors used to model
/// intra-device handoff).
class DeviceBuffer {
public:
    int device_id() const { return device_id_; }
    size_t size() const { return data_.size(); }

private:
    friend class Device;
    DeviceBuffer(int device_id, Bytes data) : device_id_(device_id), data_(std::move(data)) {}
    int device_id_;
    Bytes data_;
};
using DeviceBufferPtr = std::shared_ptr<DeviceBuffer>;

struct KernelDims {
    int in_width = 0;
    int in_height = 0;
    int channels = 1;
    int out_width = 0;
    int out_height = 0;

    uint64_t out_pixels() const {
        return static_cast<uint64_t>(out_width) * static_cast<uint64_t>(out_height);
    }
};

/// Device kernel body: consumes input buffers, writes the output buffer.
/// `args` carries small launch arguments (camera intrinsics etc.) that in
/// hardware would travel through control registers, not DMA.
using KernelFn = std::function<void(const std::vector<const Bytes*>& inputs, Bytes& output,
                                    const KernelDims& dims, std::span<const uint8_t> args)>;

/// Bounded SPSC FIFO of fixed-width beats carrying framed payloads between
/// two device-resident endpoints. Frame wire format: one header beat whose
/// first min(W, 8) bytes hold the payload length little-endian, then
/// ceil(len/W) data beats, the final one flagged last and zero-padded.
class StreamQueue {
public:
    StreamQueue(Device* device, int id, size_t capacity_beats, size_t beat_bytes,
                size_t max_frame_bytes);

    int id() const { return id_; }
    size_t capacity_beats() const { return capacity_; }
    size_t beat_bytes() const { return beat_bytes_; }
    size_t max_frame_bytes() const { return max_frame_; }

    /// Blocking write of one frame; charges beats * stream_per_beat_ns to
    /// the device timeline (and busy-waits it in Real mode). Returns the
    /// timestamp at which the frame is fully transferred. `anchor_ts`
    /// pins the start of the modeled interval so writer and reader agree
    /// on the completion time; it defaults to the current context's now.
    int64_t write_frame(std::span<const uint8_t> frame,
                        std::optional<int64_t> anchor_ts = std::nullopt);
    /// Blocking read of the next frame; returns nullopt once the queue is
    /// closed and drained.
    std::optional<Bytes> read_frame();

    /// Modeled transfer duration of a frame of `len` bytes.
    int64_t frame_cost(size_t len) const;

    void close();
    uint64_t beats_written() const;
    uint64_t beats_read() const;

private:
    struct Beat {
        Bytes bytes;
        bool last = false;
    };
    void push_beats(std::vector<Beat>& beats);
    bool pop_beat(Beat& out);
    size_t pop_available(std::vector<Beat>& out, size_t max_count);

    Device* device_;
    int id_;
    size_t capacity_;
    size_t beat_bytes_;
    size_t max_frame_;
    mutable std::mutex mu_;
    std::condition_variable cv_space_;
    std::condition_variable cv_data_;
    std::deque<Beat> fifo_;
    uint64_t written_ = 0;
    uint64_t read_ = 0;
    bool closed_ = false;
};
using StreamQueuePtr = std::shared_ptr<StreamQueue>;

/// A simulated accelerator: one sequential timeline, a kernel registry,
/// explicit host<->device transfers priced by the cost model, and stream
/// queues for intra-device communication.
class Device : public std::enable_shared_from_this<Device> {
public:
    Device(int id, std::string name, CostModel cost, TimingMode mode = TimingMode::Model);

    int id() const { return id_; }
    const std::string& name() const { return name_; }
    const CostModel& cost() const { return cost_; }
    TimingMode mode() const { return mode_; }
    void set_mode(TimingMode m) { mode_ = m; }

    void register_kernel(const std::string& name, KernelFn fn);
    bool has_kernel(const std::string& name) const;

    /// Host -> device copy. Emits h2d_begin/h2d_end and charges
    /// h2d_fixed + per_byte * len.
    DeviceBufferPtr h2d(std::span<const uint8_t> bytes);
    /// Device -> host copy; returns bytes identical to those written.
    Bytes d2h(const DeviceBufferPtr& buf);

    DeviceBufferPtr alloc(size_t len);

    /// Runs a registered kernel on buffer contents; charges
    /// launch_fixed + per_pixel * out_pixels and emits kernel begin/end.
    void launch(const std::string& kernel, const std::vector<DeviceBufferPtr>& inputs,
                const DeviceBufferPtr& output, const KernelDims& dims,
                std::span<const uint8_t> args = {});

    /// Intra-device handoff plumbing: wraps bytes already resident on this
    /// device (no transfer cost, no tracepoints) and the matching view.
    DeviceBufferPtr adopt_local(Bytes bytes);
    const Bytes& peek_local(const DeviceBufferPtr& buf) const;

    StreamQueuePtr create_stream_queue(size_t capacity_beats, size_t beat_bytes,
                                       size_t max_frame_bytes = 16u << 20);

    /// Cumulative modeled nanoseconds consumed by this device.
    int64_t timeline_ns() const;
    void reset_timeline();

private:
    friend class StreamQueue;
    void check_ours(const DeviceBufferPtr& buf, const char* op) const;
    // Accounts one timed operation: runs `body` inside the modeled
    // interval, advances the timeline, busy-waits the remainder in Real
    // mode, and emits the begin/end tracepoint pair.
    int64_t charge(Tp begin, Tp end, int64_t cost_ns, uint64_t arg,
                   const std::function<void()>& body = {});

    int id_;
    std::string name_;
    CostModel cost_;
    TimingMode mode_;
    mutable std::mutex mu_;
    int64_t timeline_ = 0;
    uint64_t standalone_ops_ = 0;
    int next_queue_id_ = 0;
    std::map<std::string, KernelFn> kernels_;
};

/// Registers the three case-study kernels (rectify, resize,
/// rectify_resize_fused) backed by the kernels module, so device results
/// are bit-identical to host execution.
void register_image_kernels(Device& dev);

/// Execution target selectable by name from configuration.
class Backend {
public:
    virtual ~Backend() = default;
    virtual const std::string& name() const = 0;
    virtual bool supports_offload() const = 0;
    virtual DevicePtr device() const { return nullptr; }
};
using BackendPtr = std::shared_ptr<Backend>;

class CpuBackend : public Backend {
public:
    explicit CpuBackend(std::string name = "cpu") : name_(std::move(name)) {}
    const std::string& name() const override { return name_; }
    bool supports_offload() const override { return false; }

private:
    std::string name_;
};

class SimDeviceBackend : public Backend {
public:
    SimDeviceBackend(std::string name, DevicePtr dev)
        : name_(std::move(name)), dev_(std::move(dev)) {}
    const std::string& name() const override { return name_; }
    bool supports_offload() const override { return true; }
    DevicePtr device() const override { return dev_; }

private:
    std::string name_;
    DevicePtr dev_;
};

/// name -> backend map; the vendor-abstraction point.
class BackendRegistry {
public:
    void register_backend(const std::string& name, BackendPtr backend);
    BackendPtr lookup(const std::string& name) const;
    std::vector<std::string> names() const;

private:
    mutable std::mutex mu_;
    std::map<std::string, BackendPtr> backends_;
};

}  // namespace flowtrace::sim
