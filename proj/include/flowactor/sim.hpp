#pragma once

#include <set>

#include "flowactor/runtime.hpp"

namespace flowactor {

// A packet that left the cluster: who put it on the wire and whose chain
// produced it. They differ when a replica emitted on behalf of its source.
struct EmittedPacket {
    Packet pkt;
    RuntimeId emitter = 0;
    RuntimeId processed_by = 0;
};

// Control-plane participant that is not a Runtime (the coordinator, probes in
// tests). Messages arrive fully reassembled.
class ControlNode {
public:
    virtual ~ControlNode() = default;
    virtual RuntimeId node_id() const = 0;
    virtual Transport& node_transport() = 0;
    virtual void on_message(ActorMessage&& msg, VirtualTime now) = 0;
    virtual bool node_tick(VirtualTime now) = 0;
    virtual VirtualTime node_next_deadline() const = 0;  // absolute
};

// Single-threaded deterministic event loop: the fabric, the runtimes, and any
// control nodes, stepped to a fixpoint at each virtual instant, then advanced
// to the next due event. Identical seeds and scripts give identical runs.
class Sim {
public:
    explicit Sim(std::uint64_t seed, LinkConfig defaults = {}) : fabric_(seed, defaults) {}

    Metrics& metrics() { return metrics_; }
    SimFabric& fabric() { return fabric_; }
    VirtualTime now() const { return now_; }

    // Sink for a node's outgoing frames; always stamps the current sim time.
    Transport::FrameSink frame_sink() {
        return [this](WireFrame&& f) { fabric_.send(std::move(f), now_); };
    }

    Runtime& add_runtime(RuntimeId id, MemberRole role, ServiceChain chain,
                         RuntimeConfig cfg = {}) {
        auto r = std::make_unique<Runtime>(
            id, role, std::move(chain), cfg, &metrics_, frame_sink(),
            [this](Packet&& p, RuntimeId emitter, RuntimeId processed_by) {
                on_emit(std::move(p), emitter, processed_by);
            });
        Runtime& ref = *r;
        FLOWACTOR_CHECK(runtimes_.emplace(id, std::move(r)).second, "duplicate runtime id");
        return ref;
    }

    // Nodes are owned by the caller and must outlive the sim.
    void add_node(ControlNode* node) { nodes_.push_back(node); }

    Runtime& runtime(RuntimeId id) { return *runtimes_.at(id); }
    const std::map<RuntimeId, std::unique_ptr<Runtime>>& runtimes() const { return runtimes_; }
    bool dead(RuntimeId id) const { return dead_.contains(id); }

    const std::vector<EmittedPacket>& emitted() const { return emitted_; }
    bool keep_emitted = true;  // long runs turn this off and use counters

    // Fail-stop: the node stops ticking, its queued work is charged to the
    // failure bucket, and the fabric drops everything addressed to it from
    // here on (dataplane counted, control silently).
    void kill(RuntimeId id) {
        auto it = runtimes_.find(id);
        FLOWACTOR_CHECK(it != runtimes_.end(), "kill of unknown runtime");
        FLOWACTOR_CHECK(!dead_.contains(id), "kill of dead runtime");
        dead_.insert(id);
        const Runtime& r = *it->second;
        std::uint64_t stranded = r.input_queue_depth() + r.buffered_packets();
        if (stranded > 0) metrics_.drop(DropKind::Failure, stranded);
        metrics_.trace_event(trace_code::member_failed, id, stranded, now_);
    }

    // Entry point for generated traffic.
    void offer_packet(RuntimeId ingress, Packet&& pkt) {
        metrics_.generated += 1;
        metrics_.trace_event(trace_code::generated, Metrics::packet_id(pkt.key, pkt.gen_seq),
                             ingress, now_);
        if (dead_.contains(ingress)) {
            metrics_.drop(DropKind::Failure);
            return;
        }
        runtimes_.at(ingress)->enqueue_packet(std::move(pkt));
    }

    // Runs checker(now) after every settled virtual instant.
    void add_check(std::function<void(VirtualTime)> checker) {
        checks_.push_back(std::move(checker));
    }

    // Packets in motion somewhere inside the cluster: on the wire, queued at
    // an ingress, parked in a protocol buffer, or inside an unacknowledged
    // replication.
    std::uint64_t packets_in_flight() const {
        std::uint64_t n = fabric_.dataplane_in_flight();
        for (const auto& [id, r] : runtimes_) {
            if (dead_.contains(id)) continue;
            n += r->input_queue_depth() + r->buffered_packets();
        }
        n += metrics_.repl_pending_total();
        return n;
    }

    // Every generated packet is exactly one of: delivered, dropped with a
    // recorded reason, lost on the unreliable dataplane wire, or in flight.
    void check_conservation() const {
        std::uint64_t accounted = metrics_.delivered + metrics_.nf_drops +
                                  metrics_.protocol_drops + metrics_.overload_drops +
                                  metrics_.failure_drops + fabric_.dataplane_lost() +
                                  packets_in_flight();
        if (accounted != metrics_.generated)
            throw InvariantError("packet conservation violated: generated " +
                                 std::to_string(metrics_.generated) + " != accounted " +
                                 std::to_string(accounted) + " at t=" + std::to_string(now_));
    }

    // Settles the current instant: delivers due frames and ticks nodes until
    // nothing moves, then runs the registered checks.
    void step() {
        for (;;) {
            bool progressed = false;
            for (WireFrame& f : fabric_.deliver_due(now_)) {
                route_frame(std::move(f));
                progressed = true;
            }
            for (auto& [id, r] : runtimes_) {
                if (dead_.contains(id)) continue;
                if (r->tick(now_)) progressed = true;
            }
            for (ControlNode* n : nodes_) {
                if (dead_.contains(n->node_id())) continue;
                if (n->node_tick(now_)) progressed = true;
            }
            if (!progressed) break;
        }
        for (const auto& check : checks_) check(now_);
    }

    VirtualTime next_event_time() const {
        VirtualTime t = fabric_.next_deadline();
        for (const auto& [id, r] : runtimes_) {
            if (dead_.contains(id)) continue;
            t = std::min(t, r->next_deadline());
        }
        for (const ControlNode* n : nodes_) {
            if (dead_.contains(n->node_id())) continue;
            t = std::min(t, n->node_next_deadline());
        }
        return t;
    }

    // Advances to `t`, settling every event time on the way and `t` itself.
    void run_until(VirtualTime t) {
        FLOWACTOR_CHECK(t >= now_, "run_until into the past");
        for (;;) {
            step();
            if (now_ >= t) return;
            VirtualTime nxt = next_event_time();
            if (nxt <= now_) nxt = now_ + 1;
            now_ = std::min(nxt, t);
        }
    }

    std::uint64_t stray_frames() const { return stray_frames_; }

private:
    void on_emit(Packet&& pkt, RuntimeId emitter, RuntimeId processed_by) {
        metrics_.delivered += 1;
        if (metrics_.record_latency && pkt.ts_emitted)
            metrics_.latency_samples.push_back(*pkt.ts_emitted - pkt.ts_created);
        metrics_.trace_event(trace_code::delivered, Metrics::packet_id(pkt.key, pkt.gen_seq),
                             fnv1a_u64(processed_by, emitter), now_);
        if (keep_emitted) emitted_.push_back({std::move(pkt), emitter, processed_by});
    }

    void route_frame(WireFrame&& f) {
        if (dead_.contains(f.dst)) {
            if (f.kind == FrameKind::Dataplane) metrics_.drop(DropKind::Failure);
            return;
        }
        if (auto it = runtimes_.find(f.dst); it != runtimes_.end()) {
            Runtime& r = *it->second;
            if (f.kind == FrameKind::Dataplane) {
                ByteReader reader(f.payload);
                r.enqueue_packet(decode_packet(reader));
            } else {
                for (ActorMessage& m : r.transport().on_frame(f, now_))
                    r.enqueue_message(std::move(m));
            }
            return;
        }
        for (ControlNode* n : nodes_) {
            if (n->node_id() != f.dst) continue;
            if (f.kind != FrameKind::Dataplane)
                for (ActorMessage& m : n->node_transport().on_frame(f, now_))
                    n->on_message(std::move(m), now_);
            return;
        }
        stray_frames_ += 1;
    }

    SimFabric fabric_;
    Metrics metrics_;
    std::map<RuntimeId, std::unique_ptr<Runtime>> runtimes_;
    std::vector<ControlNode*> nodes_;
    std::set<RuntimeId> dead_;
    std::vector<EmittedPacket> emitted_;
    std::vector<std::function<void(VirtualTime)>> checks_;
    VirtualTime now_ = 0;
    std::uint64_t stray_frames_ = 0;
};

// Test/coordinator-side peer with a plain transport and an inbox; useful
// wherever a full Runtime is not wanted on the other end of a channel.
class ProbeNode : public ControlNode {
public:
    ProbeNode(RuntimeId id, Transport::FrameSink sink, ChannelConfig cfg = {})
        : id_(id), transport_(id, cfg, std::move(sink)) {}

    RuntimeId node_id() const override { return id_; }
    Transport& node_transport() override { return transport_; }
    void on_message(ActorMessage&& msg, VirtualTime) override {
        inbox.push_back(std::move(msg));
    }
    bool node_tick(VirtualTime now) override { return transport_.retransmit_sweep(now) > 0; }
    VirtualTime node_next_deadline() const override { return transport_.next_deadline(); }

    void send(const ActorMessage& msg, VirtualTime now, PathClass path = PathClass::Control) {
        transport_.send_message(msg.dst, msg, now, path);
    }

    std::vector<ActorMessage> inbox;

private:
    RuntimeId id_;
    Transport transport_;
};

}  // namespace flowactor
