// Copyright 2026 The flowtrace Authors
// SPDX-License-Identifier: Apache-2.0

#include "flowtrace/device_sim.hpp"

#include <algorithm>
#include <cstring>

#include "flowtrace/kernels.hpp"

namespace flowtrace::sim {

Device::Device(int id, std::string name, CostModel cost, TimingMode mode)
    : id_(id), name_(std::move(name)), cost_(std::move(cost)), mode_(mode) {
    cost_.validate();
}

void Device::register_kernel(const std::string& name, KernelFn fn) {
    std::lock_guard<std::mutex> lk(mu_);
    kernels_[name] = std::move(fn);
}

bool Device::has_kernel(const std::string& name) const {
    std::lock_guard<std::mutex> lk(mu_);
    return kernels_.count(name) != 0;
}

void Device::check_ours(const DeviceBufferPtr& buf, const char* op) const {
    if (!buf) throw RuntimeError(std::string(op) + ": null buffer");
    if (buf->device_id() != id_) {
        throw RuntimeError(std::string(op) + ": buffer belongs to device " +
                           std::to_string(buf->device_id()) + ", not " + std::to_string(id_));
    }
}

int64_t Device::charge(Tp begin, Tp end, int64_t cost_ns, uint64_t arg,
                       const std::function<void()>& body) {
    ExecContext* ctx = current_context();
    TraceSession* session = ctx ? ctx->session : active_session();
    const bool tracing = session && session->enabled();
    std::lock_guard<std::mutex> lk(mu_);
    const int64_t tl_before = timeline_;
    timeline_ += cost_ns;
    const int32_t node = ctx ? ctx->node : -1;
    const uint64_t seq = ctx ? ctx->seq : standalone_ops_++;
    // The real work runs inside the modeled interval so the cost acts as a
    // wall-clock floor over it in Real mode.
    if (ctx) {
        const int64_t t0 = ctx->now();
        if (tracing) session->emit_at(begin, t0, node, seq, arg);
        if (body) body();
        const int64_t t1 = ctx->settle(t0, cost_ns);
        if (tracing) session->emit_at(end, t1, node, seq, arg);
        return t1;
    }
    if (mode_ == TimingMode::Real) {
        const int64_t w0 = monotonic_ns();
        if (tracing) session->emit(begin, node, seq, arg);
        if (body) body();
        spin_until_ns(w0 + cost_ns);
        if (tracing) session->emit(end, node, seq, arg);
        return monotonic_ns();
    }
    // Model mode outside any graph context: stamp from the device timeline.
    if (tracing) session->emit_at(begin, tl_before, node, seq, arg);
    if (body) body();
    if (tracing) session->emit_at(end, timeline_, node, seq, arg);
    return timeline_;
}

DeviceBufferPtr Device::h2d(std::span<const uint8_t> bytes) {
    const int64_t cost = cost_.h2d_cost(bytes.size());
    Bytes copy;
    charge(Tp::h2d_begin, Tp::h2d_end, cost, bytes.size(),
           [&] { copy.assign(bytes.begin(), bytes.end()); });
    return DeviceBufferPtr(new DeviceBuffer(id_, std::move(copy)));
}

Bytes Device::d2h(const DeviceBufferPtr& buf) {
    check_ours(buf, "d2h");
    const int64_t cost = cost_.d2h_cost(buf->size());
    Bytes out;
    charge(Tp::d2h_begin, Tp::d2h_end, cost, buf->size(), [&] { out = buf->data_; });
    return out;
}

DeviceBufferPtr Device::alloc(size_t len) {
    return DeviceBufferPtr(new DeviceBuffer(id_, Bytes(len, 0)));
}

void Device::launch(const std::string& kernel, const std::vector<DeviceBufferPtr>& inputs,
                    const DeviceBufferPtr& output, const KernelDims& dims,
                    std::span<const uint8_t> args) {
    KernelFn fn;
    {
        std::lock_guard<std::mutex> lk(mu_);
        auto it = kernels_.find(kernel);
        if (it == kernels_.end()) {
            throw RuntimeError("launch: kernel '" + kernel + "' not registered on " + name_);
        }
        fn = it->second;
    }
    for (const auto& in : inputs) check_ours(in, "launch input");
    check_ours(output, "launch output");
    const size_t in_expect = static_cast<size_t>(dims.in_width) * dims.in_height * dims.channels;
    const size_t out_expect = static_cast<size_t>(dims.out_width) * dims.out_height * dims.channels;
    if (inputs.empty() || inputs[0]->size() != in_expect) {
        throw RuntimeError("launch: input buffer size does not match dims");
    }
    if (output->size() != out_expect) {
        throw RuntimeError("launch: output buffer size does not match dims");
    }
    std::vector<const Bytes*> views;
    views.reserve(inputs.size());
    for (const auto& in : inputs) views.push_back(&in->data_);
    const int64_t cost = cost_.launch_cost(kernel, dims.out_pixels());
    charge(Tp::kernel_begin, Tp::kernel_end, cost, dims.out_pixels(),
           [&] { fn(views, output->data_, dims, args); });
}

DeviceBufferPtr Device::adopt_local(Bytes bytes) {
    return DeviceBufferPtr(new DeviceBuffer(id_, std::move(bytes)));
}

const Bytes& Device::peek_local(const DeviceBufferPtr& buf) const {
    check_ours(buf, "peek_local");
    return buf->data_;
}

StreamQueuePtr Device::create_stream_queue(size_t capacity_beats, size_t beat_bytes,
                                           size_t max_frame_bytes) {
    if (capacity_beats < 1) throw ConfigError("stream queue capacity must be >= 1");
    if (beat_bytes < 1) throw ConfigError("stream beat width must be >= 1");
    int qid;
    {
        std::lock_guard<std::mutex> lk(mu_);
        qid = next_queue_id_++;
    }
    return std::make_shared<StreamQueue>(this, qid, capacity_beats, beat_bytes, max_frame_bytes);
}

int64_t Device::timeline_ns() const {
    std::lock_guard<std::mutex> lk(mu_);
    return timeline_;
}

void Device::reset_timeline() {
    std::lock_guard<std::mutex> lk(mu_);
    timeline_ = 0;
}

// --- StreamQueue -----------------------------------------------------------

StreamQueue::StreamQueue(Device* device, int id, size_t capacity_beats, size_t beat_bytes,
                         size_t max_frame_bytes)
    : device_(device), id_(id), capacity_(capacity_beats), beat_bytes_(beat_bytes) {
    // The header beat stores the length in its first min(W, 8) bytes, which
    // bounds the representable frame size for narrow streams.
    uint64_t header_max = ~0ULL;
    if (beat_bytes_ < 8) header_max = (1ULL << (8 * beat_bytes_)) - 1;
    max_frame_ = static_cast<size_t>(std::min<uint64_t>(max_frame_bytes, header_max));
}

// Beats move in batches under one lock acquisition, waking the peer only
// on empty<->full transitions; per-beat handshakes would otherwise dwarf
// the modeled per-beat cost.
void StreamQueue::push_beats(std::vector<Beat>& beats) {
    size_t i = 0;
    std::unique_lock<std::mutex> lk(mu_);
    while (i < beats.size()) {
        cv_space_.wait(lk, [&] { return fifo_.size() < capacity_ || closed_; });
        if (closed_) throw RuntimeError("stream queue closed");
        const bool was_empty = fifo_.empty();
        while (i < beats.size() && fifo_.size() < capacity_) {
            fifo_.push_back(std::move(beats[i]));
            ++i;
            ++written_;
        }
        if (was_empty) cv_data_.notify_one();
    }
}

bool StreamQueue::pop_beat(Beat& out) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_data_.wait(lk, [&] { return !fifo_.empty() || closed_; });
    if (fifo_.empty()) return false;
    const bool was_full = fifo_.size() >= capacity_;
    out = std::move(fifo_.front());
    fifo_.pop_front();
    ++read_;
    if (was_full) cv_space_.notify_one();
    return true;
}

size_t StreamQueue::pop_available(std::vector<Beat>& out, size_t max_count) {
    std::unique_lock<std::mutex> lk(mu_);
    cv_data_.wait(lk, [&] { return !fifo_.empty() || closed_; });
    if (fifo_.empty()) return 0;
    const bool was_full = fifo_.size() >= capacity_;
    size_t n = 0;
    while (!fifo_.empty() && n < max_count) {
        out.push_back(std::move(fifo_.front()));
        fifo_.pop_front();
        ++read_;
        ++n;
    }
    if (was_full) cv_space_.notify_one();
    return n;
}

int64_t StreamQueue::frame_cost(size_t len) const {
    const uint64_t beats = 1 + (len + beat_bytes_ - 1) / beat_bytes_;
    return CostModel::llround_cost(device_->cost().stream_per_beat_ns *
                                   static_cast<double>(beats));
}

int64_t StreamQueue::write_frame(std::span<const uint8_t> frame,
                                 std::optional<int64_t> anchor_ts) {
    if (frame.size() > max_frame_) {
        throw RuntimeError("stream frame of " + std::to_string(frame.size()) +
                           " bytes exceeds max frame size " + std::to_string(max_frame_));
    }
    ExecContext* ctx = current_context();
    const TimingMode mode = ctx ? ctx->mode : device_->mode();
    const int64_t w0 = monotonic_ns();
    const int64_t t0 = anchor_ts.value_or(ctx ? ctx->now() : 0);
    const int64_t cost = frame_cost(frame.size());

    const size_t data_beats = (frame.size() + beat_bytes_ - 1) / beat_bytes_;
    std::vector<Beat> beats;
    beats.reserve(1 + std::max<size_t>(data_beats, 1));

    Beat header;
    header.bytes.assign(beat_bytes_, 0);
    const uint64_t len = frame.size();
    std::memcpy(header.bytes.data(), &len, std::min<size_t>(8, beat_bytes_));
    beats.push_back(std::move(header));

    for (size_t i = 0; i < data_beats; ++i) {
        Beat b;
        b.bytes.assign(beat_bytes_, 0);  // short final beat zero-padded
        const size_t off = i * beat_bytes_;
        const size_t n = std::min(beat_bytes_, frame.size() - off);
        std::memcpy(b.bytes.data(), frame.data() + off, n);
        b.last = (i + 1 == data_beats);
        beats.push_back(std::move(b));
    }
    if (data_beats == 0) {
        Beat b;  // zero-length frame still terminates with a flagged beat
        b.bytes.assign(beat_bytes_, 0);
        b.last = true;
        beats.push_back(std::move(b));
    }
    push_beats(beats);

    {
        std::lock_guard<std::mutex> lk(device_->mu_);
        device_->timeline_ += cost;
    }
    if (ctx) return ctx->settle(t0, cost);
    if (mode == TimingMode::Real) {
        spin_until_ns(w0 + cost);
        return monotonic_ns();
    }
    return t0 + cost;
}

std::optional<Bytes> StreamQueue::read_frame() {
    Beat header;
    if (!pop_beat(header)) return std::nullopt;
    uint64_t len = 0;
    std::memcpy(&len, header.bytes.data(), std::min<size_t>(8, beat_bytes_));
    Bytes out;
    out.reserve(len + beat_bytes_);
    // The header pins the frame's beat count; batch pops must not overrun
    // into the next frame's header.
    size_t remaining = std::max<size_t>(1, (len + beat_bytes_ - 1) / beat_bytes_);
    bool saw_last = false;
    std::vector<Beat> batch;
    while (remaining > 0) {
        batch.clear();
        if (pop_available(batch, remaining) == 0) {
            throw RuntimeError("stream queue closed mid-frame");
        }
        remaining -= batch.size();
        for (auto& b : batch) {
            saw_last = b.last;
            out.insert(out.end(), b.bytes.begin(), b.bytes.end());
        }
    }
    if (!saw_last) throw RuntimeError("stream frame missing its last-beat flag");
    if (out.size() < len) throw RuntimeError("stream frame shorter than header length");
    out.resize(len);  // drop wire padding
    return out;
}

void StreamQueue::close() {
    std::lock_guard<std::mutex> lk(mu_);
    closed_ = true;
    cv_space_.notify_all();
    cv_data_.notify_all();
}

uint64_t StreamQueue::beats_written() const {
    std::lock_guard<std::mutex> lk(mu_);
    return written_;
}

uint64_t StreamQueue::beats_read() const {
    std::lock_guard<std::mutex> lk(mu_);
    return read_;
}

// --- image kernels on the device -------------------------------------------

void register_image_kernels(Device& dev) {
    using kernels::CameraModel;
    using kernels::Image;
    using kernels::ResizeParams;

    auto to_image = [](const Bytes& data, int w, int h, int ch) {
        Image img;
        img.width = w;
        img.height = h;
        img.channels = ch;
        img.data = data;
        if (!img.valid()) throw RuntimeError("device kernel: buffer does not match dims");
        return img;
    };

    dev.register_kernel("rectify", [to_image](const std::vector<const Bytes*>& in, Bytes& out,
                                              const KernelDims& d, std::span<const uint8_t> args) {
        const Image img = to_image(*in[0], d.in_width, d.in_height, d.channels);
        const CameraModel cam = kernels::decode_camera_model(args);
        out = kernels::rectify(img, cam).data;
    });

    dev.register_kernel("resize", [to_image](const std::vector<const Bytes*>& in, Bytes& out,
                                             const KernelDims& d, std::span<const uint8_t>) {
        const Image img = to_image(*in[0], d.in_width, d.in_height, d.channels);
        ResizeParams p{d.out_width, d.out_height, kernels::Interp::bilinear};
        out = kernels::resize(img, p).data;
    });

    dev.register_kernel("rectify_resize_fused",
                        [to_image](const std::vector<const Bytes*>& in, Bytes& out,
                                   const KernelDims& d, std::span<const uint8_t> args) {
                            const Image img = to_image(*in[0], d.in_width, d.in_height, d.channels);
                            const CameraModel cam = kernels::decode_camera_model(args);
                            ResizeParams p{d.out_width, d.out_height, kernels::Interp::bilinear};
                            out = kernels::rectify_resize_fused(img, cam, p).data;
                        });
}

// --- BackendRegistry --------------------------------------------------------

void BackendRegistry::register_backend(const std::string& name, BackendPtr backend) {
    std::lock_guard<std::mutex> lk(mu_);
    if (backends_.count(name)) throw ConfigError("duplicate backend name: " + name);
    backends_[name] = std::move(backend);
}

BackendPtr BackendRegistry::lookup(const std::string& name) const {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = backends_.find(name);
    if (it == backends_.end()) throw ConfigError("unknown backend: " + name);
    return it->second;
}

std::vector<std::string> BackendRegistry::names() const {
    std::lock_guard<std::mutex> lk(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : backends_) out.push_back(k);
    return out;
}

}  // namespace flowtrace::sim
