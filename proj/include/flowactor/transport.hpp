#pragma once

#include <deque>
#include <functional>
#include <limits>
#include <map>

#include "flowactor/check.hpp"
#include "flowactor/core.hpp"
#include "flowactor/rng.hpp"

namespace flowactor {

constexpr VirtualTime kNoDeadline = std::numeric_limits<VirtualTime>::max();

enum class FrameKind : std::uint8_t { Dataplane = 0, ControlData = 1, ControlAck = 2 };

// Which wire a frame travels on. Control traffic normally has its own path;
// a sender may deliberately put a control frame on the data path so it queues
// behind previously sent dataplane frames (migration loss-avoidance).
enum class PathClass : std::uint8_t { Data = 0, Control = 1 };

inline PathClass default_path(FrameKind k) {
    return k == FrameKind::Dataplane ? PathClass::Data : PathClass::Control;
}

struct WireFrame {
    FrameKind kind = FrameKind::Dataplane;
    RuntimeId src = 0;
    RuntimeId dst = 0;
    std::uint64_t seq = 0;  // ControlData only
    std::uint64_t ack = 0;  // cumulative; ControlData piggybacks, ControlAck carries
    Bytes payload;
    PathClass path = PathClass::Data;  // routing hint, not part of the wire layout

    bool operator==(const WireFrame& o) const {
        return kind == o.kind && src == o.src && dst == o.dst && seq == o.seq && ack == o.ack &&
               payload == o.payload;
    }
};

// Layout (little-endian, see docs/wire-format.md):
//   u32 length of everything after the prefix
//   u8  kind
//   u64 src, u64 dst
//   u64 seq, u64 ack        -- control frames only; dataplane omits both
//   u32 payload length, payload bytes
inline Bytes encode_frame(const WireFrame& f) {
    ByteWriter w(f.payload.size() + 48);
    w.u32(0);
    w.u8(static_cast<std::uint8_t>(f.kind));
    w.u64(f.src);
    w.u64(f.dst);
    if (f.kind != FrameKind::Dataplane) {
        w.u64(f.seq);
        w.u64(f.ack);
    }
    w.blob(f.payload);
    w.patch_u32(0, static_cast<std::uint32_t>(w.size() - 4));
    return w.take();
}

inline WireFrame decode_frame(BytesView bytes) {
    ByteReader outer(bytes);
    std::size_t len = outer.u32();
    if (outer.remaining() != len) throw DecodeError("frame length mismatch");
    WireFrame f;
    auto kind = outer.u8();
    if (kind > 2) throw DecodeError("bad frame kind " + std::to_string(kind));
    f.kind = static_cast<FrameKind>(kind);
    f.src = outer.u64();
    f.dst = outer.u64();
    if (f.kind != FrameKind::Dataplane) {
        f.seq = outer.u64();
        f.ack = outer.u64();
    }
    f.payload = outer.blob();
    if (!outer.done()) throw DecodeError("trailing bytes in frame");
    f.path = default_path(f.kind);
    return f;
}

struct ChannelConfig {
    VirtualTime initial_rtt = 200 * kMicrosecond;
    VirtualTime backoff_cap = 1 * kSecond;
    std::uint32_t max_retries = 32;
    std::size_t window = 4096;  // max unacked ControlData frames
};

struct ChannelStats {
    std::uint64_t msgs_sent = 0;
    std::uint64_t frames_sent = 0;
    std::uint64_t retransmits = 0;
    std::uint64_t msgs_delivered = 0;
    std::uint64_t dup_frames = 0;
};

// Reliable ordered byte stream to one peer. Encoded messages are
// self-delimiting, so the receive side reassembles by appending in-order
// frame payloads and peeling complete messages off the front.
class Channel {
public:
    using FrameSink = std::function<void(WireFrame&&)>;

    Channel(RuntimeId self, RuntimeId peer, ChannelConfig cfg, FrameSink sink)
        : self_(self), peer_(peer), cfg_(cfg), sink_(std::move(sink)), rtt_(cfg.initial_rtt) {}

    RuntimeId peer() const { return peer_; }
    bool broken() const { return broken_; }
    VirtualTime rtt_estimate() const { return rtt_; }
    const ChannelStats& stats() const { return stats_; }
    std::size_t in_flight_frames() const { return unacked_.size(); }
    std::size_t backlog_frames() const { return backlog_.size(); }

    void send_message(const ActorMessage& msg, VirtualTime now,
                      PathClass path = PathClass::Control) {
        if (broken_) return;
        stats_.msgs_sent += 1;
        Bytes wire = encode_message(msg);
        for (std::size_t pos = 0; pos < wire.size(); pos += kMtu) {
            std::size_t len = std::min(kMtu, wire.size() - pos);
            Bytes chunk(wire.begin() + pos, wire.begin() + pos + len);
            if (unacked_.size() < cfg_.window)
                transmit_new(std::move(chunk), path, now);
            else
                backlog_.push_back({std::move(chunk), path});
        }
    }

    // Handles one incoming frame; appends any complete messages to `out`.
    void on_frame(const WireFrame& f, VirtualTime now, std::vector<ActorMessage>& out) {
        if (f.kind == FrameKind::ControlData) {
            if (f.seq == rx_expected_) {
                stream_.insert(stream_.end(), f.payload.begin(), f.payload.end());
                rx_expected_ += 1;
                auto it = rx_ooo_.begin();
                while (it != rx_ooo_.end() && it->first == rx_expected_) {
                    stream_.insert(stream_.end(), it->second.begin(), it->second.end());
                    rx_expected_ += 1;
                    it = rx_ooo_.erase(it);
                }
                drain_stream(out);
            } else if (f.seq > rx_expected_) {
                if (rx_ooo_.size() < cfg_.window) rx_ooo_.emplace(f.seq, f.payload);
            } else {
                stats_.dup_frames += 1;
            }
            process_ack(f.ack, now);
            send_ack();
        } else if (f.kind == FrameKind::ControlAck) {
            process_ack(f.ack, now);
        }
    }

    // Resends every overdue frame; returns how many. Call after clock
    // advances; next_deadline() says when it is next needed.
    std::uint64_t retransmit_sweep(VirtualTime now) {
        if (broken_) return 0;
        std::uint64_t resent = 0;
        for (auto& [seq, u] : unacked_) {
            if (u.next_due > now) continue;
            if (u.retries >= cfg_.max_retries) {
                broken_ = true;
                return resent;
            }
            u.retries += 1;
            // Timeout doubles per retry, capped.
            VirtualTime timeout = rto();
            for (std::uint32_t i = 0; i < u.retries && timeout < cfg_.backoff_cap; ++i)
                timeout *= 2;
            u.next_due = now + std::min(timeout, cfg_.backoff_cap);
            emit(seq, u, now);
            stats_.retransmits += 1;
            resent += 1;
        }
        return resent;
    }

    VirtualTime next_deadline() const {
        if (broken_) return kNoDeadline;
        VirtualTime t = kNoDeadline;
        for (const auto& [seq, u] : unacked_) t = std::min(t, u.next_due);
        return t;
    }

private:
    struct Unacked {
        Bytes payload;
        PathClass path;
        VirtualTime first_sent = 0;
        VirtualTime next_due = 0;
        std::uint32_t retries = 0;
    };

    VirtualTime rto() const { return 10 * rtt_; }

    void transmit_new(Bytes chunk, PathClass path, VirtualTime now) {
        std::uint64_t seq = next_seq_++;
        auto [it, fresh] = unacked_.emplace(
            seq, Unacked{std::move(chunk), path, now, now + rto(), 0});
        FLOWACTOR_CHECK(fresh, "duplicate tx seq");
        emit(seq, it->second, now);
    }

    void emit(std::uint64_t seq, const Unacked& u, VirtualTime) {
        WireFrame f;
        f.kind = FrameKind::ControlData;
        f.src = self_;
        f.dst = peer_;
        f.seq = seq;
        f.ack = rx_expected_ - 1;
        f.payload = u.payload;
        f.path = u.path;
        stats_.frames_sent += 1;
        sink_(std::move(f));
    }

    void send_ack() {
        WireFrame f;
        f.kind = FrameKind::ControlAck;
        f.src = self_;
        f.dst = peer_;
        f.ack = rx_expected_ - 1;
        f.path = PathClass::Control;
        sink_(std::move(f));
    }

    void process_ack(std::uint64_t ack, VirtualTime now) {
        bool freed = false;
        while (!unacked_.empty() && unacked_.begin()->first <= ack) {
            const Unacked& u = unacked_.begin()->second;
            // Karn's rule: only never-retransmitted frames give RTT samples.
            if (u.retries == 0) {
                VirtualTime sample = std::max<VirtualTime>(1, now - u.first_sent);
                rtt_ = (7 * rtt_ + sample) / 8;
            }
            unacked_.erase(unacked_.begin());
            freed = true;
        }
        while (freed && !backlog_.empty() && unacked_.size() < cfg_.window) {
            auto [chunk, path] = std::move(backlog_.front());
            backlog_.pop_front();
            transmit_new(std::move(chunk), path, now);
        }
    }

    void drain_stream(std::vector<ActorMessage>& out) {
        std::size_t consumed = 0;
        while (stream_.size() - consumed >= 4) {
            BytesView rest(stream_.data() + consumed, stream_.size() - consumed);
            ByteReader peek(rest);
            std::size_t need = 4 + peek.u32();
            if (rest.size() < need) break;
            auto [msg, used] = decode_message_prefix(rest);
            FLOWACTOR_CHECK(used == need, "stream framing error");
            out.push_back(std::move(msg));
            stats_.msgs_delivered += 1;
            consumed += used;
        }
        if (consumed > 0) stream_.erase(stream_.begin(), stream_.begin() + consumed);
    }

    RuntimeId self_, peer_;
    ChannelConfig cfg_;
    FrameSink sink_;
    ChannelStats stats_;
    bool broken_ = false;

    std::uint64_t next_seq_ = 1;
    std::map<std::uint64_t, Unacked> unacked_;
    std::deque<std::pair<Bytes, PathClass>> backlog_;
    VirtualTime rtt_;

    std::uint64_t rx_expected_ = 1;
    std::map<std::uint64_t, Bytes> rx_ooo_;
    Bytes stream_;
};

// One runtime's endpoint: a channel per peer plus the unreliable dataplane
// send path, all feeding one frame sink.
class Transport {
public:
    using FrameSink = std::function<void(WireFrame&&)>;

    Transport() = default;
    Transport(RuntimeId self, ChannelConfig cfg, FrameSink sink)
        : self_(self), cfg_(cfg), sink_(std::move(sink)) {}

    RuntimeId self() const { return self_; }

    void send_message(RuntimeId peer, const ActorMessage& msg, VirtualTime now,
                      PathClass path = PathClass::Control) {
        channel(peer).send_message(msg, now, path);
    }

    void send_dataplane(RuntimeId dst, const Packet& pkt) {
        WireFrame f;
        f.kind = FrameKind::Dataplane;
        f.src = self_;
        f.dst = dst;
        ByteWriter w(pkt.payload.size() + 40);
        encode_packet(w, pkt);
        f.payload = w.take();
        f.path = PathClass::Data;
        sink_(std::move(f));
    }

    std::vector<ActorMessage> on_frame(const WireFrame& f, VirtualTime now) {
        std::vector<ActorMessage> out;
        channel(f.src).on_frame(f, now, out);
        return out;
    }

    std::uint64_t retransmit_sweep(VirtualTime now) {
        std::uint64_t resent = 0;
        for (auto& [peer, ch] : channels_) {
            bool was_broken = ch.broken();
            resent += ch.retransmit_sweep(now);
            if (!was_broken && ch.broken()) newly_unreachable_.push_back(peer);
        }
        return resent;
    }

    VirtualTime next_deadline() const {
        VirtualTime t = kNoDeadline;
        for (const auto& [peer, ch] : channels_) t = std::min(t, ch.next_deadline());
        return t;
    }

    bool peer_broken(RuntimeId peer) const {
        auto it = channels_.find(peer);
        return it != channels_.end() && it->second.broken();
    }

    // Peers whose channels broke since the last call.
    std::vector<RuntimeId> take_unreachable() { return std::exchange(newly_unreachable_, {}); }

    Channel& channel(RuntimeId peer) {
        auto it = channels_.find(peer);
        if (it == channels_.end())
            it = channels_
                     .emplace(peer, Channel(self_, peer, cfg_,
                                            [this](WireFrame&& f) { sink_(std::move(f)); }))
                     .first;
        return it->second;
    }

    const std::map<RuntimeId, Channel>& channels() const { return channels_; }

private:
    RuntimeId self_ = 0;
    ChannelConfig cfg_;
    FrameSink sink_;
    std::map<RuntimeId, Channel> channels_;
    std::vector<RuntimeId> newly_unreachable_;
};

// ---------------------------------------------------------------------------
// Simulated fabric: a directed link per (src, dst, path) with seeded loss and
// delay. With reorder disabled a link is strictly FIFO even under jitter.

struct LinkConfig {
    VirtualTime delay = 50 * kMicrosecond;
    VirtualTime jitter = 0;  // uniform extra in [0, jitter]
    double loss_prob = 0.0;
    bool reorder = false;
};

class SimFabric {
public:
    explicit SimFabric(std::uint64_t seed, LinkConfig defaults = {})
        : seed_(seed), defaults_(defaults) {}

    void set_link_config(RuntimeId src, RuntimeId dst, const LinkConfig& cfg) {
        link(src, dst, PathClass::Data).cfg = cfg;
        link(src, dst, PathClass::Control).cfg = cfg;
    }

    // Silencing models a cut cable: every frame in either direction is lost
    // at send time until restored.
    void silence(RuntimeId a, RuntimeId b) { set_silenced(a, b, true); }
    void restore(RuntimeId a, RuntimeId b) { set_silenced(a, b, false); }

    void send(WireFrame&& f, VirtualTime now) {
        Link& l = link(f.src, f.dst, f.path);
        if (l.silenced || l.rng.chance(l.cfg.loss_prob)) {
            if (f.kind == FrameKind::Dataplane) dataplane_lost_ += 1;
            frames_lost_ += 1;
            return;
        }
        VirtualTime due = now + l.cfg.delay +
                          (l.cfg.jitter > 0 ? static_cast<VirtualTime>(
                                                  l.rng.below(l.cfg.jitter + 1))
                                            : 0);
        if (!l.cfg.reorder) due = std::max(due, l.last_due);
        l.last_due = due;
        if (f.kind == FrameKind::Dataplane) dataplane_in_flight_ += 1;
        queue_.emplace(std::pair{due, next_entry_++}, std::move(f));
    }

    // Frames whose delivery time has arrived, in deterministic order.
    std::vector<WireFrame> deliver_due(VirtualTime now) {
        std::vector<WireFrame> out;
        while (!queue_.empty() && queue_.begin()->first.first <= now) {
            if (queue_.begin()->second.kind == FrameKind::Dataplane) dataplane_in_flight_ -= 1;
            out.push_back(std::move(queue_.begin()->second));
            queue_.erase(queue_.begin());
        }
        return out;
    }

    VirtualTime next_deadline() const {
        return queue_.empty() ? kNoDeadline : queue_.begin()->first.first;
    }

    std::uint64_t dataplane_in_flight() const { return dataplane_in_flight_; }
    std::uint64_t dataplane_lost() const { return dataplane_lost_; }
    std::uint64_t frames_lost() const { return frames_lost_; }
    std::size_t frames_in_flight() const { return queue_.size(); }

private:
    struct Link {
        LinkConfig cfg;
        Rng rng;
        bool silenced = false;
        VirtualTime last_due = 0;
    };

    Link& link(RuntimeId src, RuntimeId dst, PathClass path) {
        auto key = std::tuple{src, dst, path};
        auto it = links_.find(key);
        if (it == links_.end()) {
            Link l;
            l.cfg = defaults_;
            // Seed derived from identity, so link creation order is irrelevant.
            std::uint64_t h = fnv1a_u64(src, fnv1a_u64(dst, seed_));
            l.rng = Rng(fnv1a_u64(static_cast<std::uint64_t>(path), h));
            it = links_.emplace(key, std::move(l)).first;
        }
        return it->second;
    }

    void set_silenced(RuntimeId a, RuntimeId b, bool v) {
        for (auto path : {PathClass::Data, PathClass::Control}) {
            link(a, b, path).silenced = v;
            link(b, a, path).silenced = v;
        }
    }

    std::uint64_t seed_;
    LinkConfig defaults_;
    std::map<std::tuple<RuntimeId, RuntimeId, PathClass>, Link> links_;
    std::map<std::pair<VirtualTime, std::uint64_t>, WireFrame> queue_;
    std::uint64_t next_entry_ = 0;
    std::uint64_t dataplane_in_flight_ = 0;
    std::uint64_t dataplane_lost_ = 0;
    std::uint64_t frames_lost_ = 0;
};

}  // namespace flowactor
