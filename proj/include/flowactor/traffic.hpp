#pragma once

#include <string>
#include <vector>

#include "flowactor/nfs.hpp"
#include "flowactor/rng.hpp"

namespace flowactor {

// Synthetic flow workload. Packets are paced at a fixed aggregate rate and
// dealt round-robin over a set of concurrent flows; finished flows are
// replaced with fresh keys so the offered load stays constant while the key
// space churns. Fully deterministic for a given (config, seed) pair.
struct TrafficConfig {
    std::uint32_t flows = 100;            // concurrent flows
    std::uint64_t packets_per_flow = 0;   // budget per flow, 0 = unbounded
    double long_flow_fraction = 0.0;      // flows given a longer budget
    std::uint64_t long_flow_multiplier = 10;
    std::uint64_t rate_pps = 10000;       // aggregate offered packet rate
    std::uint32_t payload_bytes = 64;     // full payload, header included
    double hostile_fraction = 0.0;        // flows that carry `hostile_token`
    Bytes hostile_token;
    std::uint32_t src_ip_base = 0x0a000001u;
    std::uint32_t dst_ip = 0xc0a80001u;
    std::uint16_t dst_port = 443;
    Proto proto = Proto::Tcp;
};

class TrafficGen {
public:
    // One line per flow ever started; enough to predict NF verdicts without
    // replaying payloads.
    struct FlowRecord {
        FlowKey key;
        bool hostile = false;
        std::uint64_t attack_at = 0;  // 1-based packet index carrying the token
        std::uint64_t sent = 0;
        std::uint64_t budget = 0;  // 0 = unbounded
    };

    TrafficGen(TrafficConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
        if (cfg_.flows == 0) throw ConfigError("traffic needs at least one flow");
        if (cfg_.rate_pps == 0) throw ConfigError("traffic rate must be positive");
        if (cfg_.payload_bytes < kPayloadHeaderBytes)
            throw ConfigError("payload too small for the rewrite header");
        if (cfg_.hostile_fraction > 0 &&
            cfg_.payload_bytes < kPayloadHeaderBytes + cfg_.hostile_token.size())
            throw ConfigError("payload too small to carry the hostile token");
        interval_ = kSecond / cfg_.rate_pps;
        if (interval_ == 0) interval_ = 1;
        live_.reserve(cfg_.flows);
    }

    VirtualTime next_due() const { return next_at_; }
    std::uint64_t emitted() const { return emitted_; }
    const std::vector<FlowRecord>& records() const { return records_; }

    // Moves the pacing clock forward without emitting (delayed start).
    void skip_to(VirtualTime t) { next_at_ = std::max(next_at_, t); }

    // Emits every packet due at or before `now`, in due order.
    template <typename Sink>
    std::uint64_t pump(VirtualTime now, Sink&& sink) {
        std::uint64_t n = 0;
        while (next_at_ <= now) {
            if (live_.size() < cfg_.flows) {
                live_.push_back(start_flow());
            }
            std::size_t slot = cursor_ % live_.size();
            cursor_ += 1;
            std::size_t idx = live_[slot];
            FlowRecord& rec = records_[idx];
            rec.sent += 1;
            sink(make_packet(rec, next_at_));
            emitted_ += 1;
            n += 1;
            if (rec.budget != 0 && rec.sent >= rec.budget) live_[slot] = start_flow();
            next_at_ += interval_;
        }
        return n;
    }

private:
    std::size_t start_flow() {
        FlowRecord rec;
        std::uint32_t i = next_flow_++;
        rec.key.src_ip = cfg_.src_ip_base + (i / 40000);
        rec.key.dst_ip = cfg_.dst_ip;
        rec.key.proto = cfg_.proto;
        rec.key.src_port = static_cast<std::uint16_t>(1024 + (i % 40000));
        rec.key.dst_port = cfg_.dst_port;
        rec.budget = cfg_.packets_per_flow;
        if (rec.budget != 0 && rng_.chance(cfg_.long_flow_fraction))
            rec.budget *= cfg_.long_flow_multiplier;
        rec.hostile = rng_.chance(cfg_.hostile_fraction);
        if (rec.hostile) {
            std::uint64_t span = rec.budget != 0 ? rec.budget : 8;
            rec.attack_at = rng_.range(1, span);
        }
        records_.push_back(rec);
        return records_.size() - 1;
    }

    Packet make_packet(const FlowRecord& rec, VirtualTime at) {
        Packet p;
        p.key = rec.key;
        p.gen_seq = ++next_seq_;
        p.ts_created = at;
        p.payload.resize(cfg_.payload_bytes);
        ByteWriter w;
        w.u64(p.gen_seq);
        const Bytes& head = w.bytes();
        std::copy(head.begin(), head.end(), p.payload.begin());
        // Bytes [8, 20) stay zero: NFs rewrite them in place. Body filler is
        // lowercase so it can never collide with an uppercase token.
        for (std::size_t i = kPayloadHeaderBytes; i < p.payload.size(); ++i)
            p.payload[i] = static_cast<std::uint8_t>('a' + rng_.below(26));
        if (rec.hostile && rec.sent >= rec.attack_at && !cfg_.hostile_token.empty())
            std::copy(cfg_.hostile_token.begin(), cfg_.hostile_token.end(),
                      p.payload.begin() + kPayloadHeaderBytes);
        return p;
    }

    TrafficConfig cfg_;
    Rng rng_;
    VirtualTime interval_ = 0;
    VirtualTime next_at_ = 0;
    std::uint64_t emitted_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint32_t next_flow_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> live_;       // indices into records_
    std::vector<FlowRecord> records_;
};

}  // namespace flowactor
