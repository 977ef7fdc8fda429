#pragma once

#include <deque>
#include <functional>
#include <map>
#include <unordered_map>

#include "flowactor/metrics.hpp"
#include "flowactor/nf.hpp"
#include "flowactor/nfs.hpp"
#include "flowactor/transport.hpp"

namespace flowactor {

enum class ActorMode : std::uint8_t { Normal, MigrationSource, MigrationTarget, Replica };
enum class Lifecycle : std::uint8_t { Live, Finalized };

// Source-side migration protocol state. One outstanding step at a time,
// guarded by a single deadline that re-arms at each step boundary.
struct MigrationFsm {
    enum class Phase : std::uint8_t { Idle, WaitCreate, WaitRoute, WaitState, Done, Aborted };
    Phase phase = Phase::Idle;
    RuntimeId target = 0;
    VirtualTime deadline = kNoDeadline;
    std::uint64_t correlation_id = 0;
};

struct FlowActor {
    FlowKey key;
    std::uint64_t created_seq = 0;  // runtime-local creation order
    ActorMode mode = ActorMode::Normal;
    Lifecycle lifecycle = Lifecycle::Live;

    // Per-NF live states, chain order. Empty for MigrationTarget (until the
    // transfer lands) and Replica (replicas keep the encoded bundle instead).
    std::vector<std::unique_ptr<FlowState>> states;

    // MigrationTarget: packets awaiting state. Replica: packets awaiting the
    // route acknowledgment during recovery.
    std::deque<Packet> buffer;

    std::optional<RuntimeId> replica_target;
    bool degraded = false;  // replica peer unreachable; emitting locally

    // Replica-mode fields.
    RuntimeId replica_source = 0;
    FlowStateBundle stored_bundle;
    std::uint64_t last_replicated_seq = 0;
    bool recovery_pending = false;

    // Correlation of the transfer that promoted a MigrationTarget, so a
    // late DestroyTarget from that same exchange can still be honored.
    std::uint64_t promoted_corr = 0;

    VirtualTime last_pkt_time = 0;
    VirtualTime wheel_slot = 0;  // expiry bucket this actor currently sits in
    MigrationFsm fsm;
};

inline std::uint64_t bundle_digest(const FlowStateBundle& b) {
    std::uint64_t h = fnv1a(BytesView(reinterpret_cast<const std::uint8_t*>(b.chain_name.data()),
                                      b.chain_name.size()));
    for (const auto& blob : b.blobs) h = fnv1a(blob, h);
    return h;
}

struct RuntimeConfig {
    std::size_t pool_capacity = 1 << 20;
    VirtualTime expiry_timeout = 5 * kSecond;
    VirtualTime wheel_granularity = kMillisecond;
    VirtualTime migration_step_deadline = 50 * kMillisecond;
    std::size_t target_buffer_cap = 1024;
    ChannelConfig channel;
};

// One worker's world: the flow-actor table, per-NF shared state, the liaison
// message dispatch, and the resilience protocols. A virtual switch is a
// Runtime whose chain is the single forwarder NF; its "emission" is a
// dataplane send to the entry's destination runtime.
class Runtime {
public:
    // (packet, emitter runtime, runtime whose chain processed it)
    using EmitSink = std::function<void(Packet&&, RuntimeId, RuntimeId)>;

    Runtime(RuntimeId id, MemberRole role, ServiceChain chain, RuntimeConfig cfg,
            Metrics* metrics, Transport::FrameSink frame_sink, EmitSink emit)
        : id_(id),
          role_(role),
          chain_(std::move(chain)),
          cfg_(cfg),
          metrics_(metrics),
          emit_(std::move(emit)),
          transport_(id, cfg.channel, std::move(frame_sink)) {
        for (const auto& nf : chain_.nfs) storage_.push_back(nf->allocate_shared_state());
    }

    RuntimeId id() const { return id_; }
    MemberRole role() const { return role_; }
    const ServiceChain& chain() const { return chain_; }
    Transport& transport() { return transport_; }
    const ClusterConfig& cluster() const { return cluster_; }
    SharedState& shared_state(std::size_t nf_index) { return *storage_.at(nf_index); }
    const std::unordered_map<FlowKey, std::unique_ptr<FlowActor>, FlowKeyHash>& flows() const {
        return flows_;
    }
    const std::map<std::uint64_t, FlowKey>& flows_by_age() const { return by_age_; }
    std::size_t pool_free() const { return cfg_.pool_capacity - flows_.size(); }

    const FlowActor* find(const FlowKey& key) const {
        auto it = flows_.find(key);
        return it == flows_.end() ? nullptr : it->second.get();
    }

    // Serialized per-NF states of a live actor, as migration would ship them.
    FlowStateBundle snapshot(const FlowKey& key) const {
        const FlowActor* a = find(key);
        FLOWACTOR_CHECK(a && a->states.size() == chain_.nfs.size(), "snapshot of absent state");
        return bundle_of(*a);
    }

    std::uint64_t live_processing_flows() const {
        std::uint64_t n = 0;
        for (const auto& [seq, key] : by_age_) {
            ActorMode m = flows_.at(key)->mode;
            if (m == ActorMode::Normal || m == ActorMode::MigrationSource) n += 1;
        }
        return n;
    }

    WorkloadReport workload() const {
        WorkloadReport r;
        r.dropped_packets = overload_drops_;
        r.throughput_pps = processed_since_poll_;
        r.active_flows = live_processing_flows();
        return r;
    }

    std::uint64_t input_queue_depth() const { return input_queue_.size(); }
    // Maintained incrementally: conservation is checked every simulator step,
    // so this must not scan the flow table.
    std::uint64_t buffered_packets() const { return buffered_count_; }

    // ------------------------------------------------------------------
    // Ingress (called by the event loop / harness)

    void enqueue_packet(Packet&& pkt) { input_queue_.push_back(std::move(pkt)); }
    void enqueue_message(ActorMessage&& msg) { rx_ring_.push_back(std::move(msg)); }

    // Runs the module graphs once in fixed order: dataplane, transport tx,
    // transport rx, deferred control work. Returns whether anything moved.
    bool tick(VirtualTime now) {
        bool progressed = false;

        // (1) dataplane graph
        while (!input_queue_.empty()) {
            Packet pkt = std::move(input_queue_.front());
            input_queue_.pop_front();
            on_dataplane_packet(std::move(pkt), now);
            progressed = true;
        }

        // (2) transport tx: retransmissions and broken-peer handling
        if (transport_.retransmit_sweep(now) > 0) progressed = true;
        for (RuntimeId peer : transport_.take_unreachable()) {
            for (const auto& [seq, key] : by_age_) {
                FlowActor& a = *flows_.at(key);
                if (a.replica_target == peer && !a.degraded) {
                    a.degraded = true;
                    metrics_->replication_degraded += 1;
                }
            }
            progressed = true;
        }

        // (3) transport rx -> liaison dispatch
        while (!rx_ring_.empty()) {
            ActorMessage msg = std::move(rx_ring_.front());
            rx_ring_.pop_front();
            liaison_dispatch(std::move(msg), now);
            progressed = true;
        }

        // (4) timers: migration deadlines, then actor expiry
        if (fsm_deadline_sweep(now)) progressed = true;
        if (expire_sweep(now) > 0) progressed = true;
        return progressed;
    }

    VirtualTime next_deadline() const {
        if (!input_queue_.empty() || !rx_ring_.empty()) return 0;
        VirtualTime t = transport_.next_deadline();
        if (!wheel_.empty()) t = std::min(t, wheel_.begin()->first);
        if (!fsm_wheel_.empty()) t = std::min(t, fsm_wheel_.begin()->first);
        return t;
    }

    // ------------------------------------------------------------------
    // Control-plane entry points used by the coordinator via RPC, exposed
    // for tests as well.

    void set_replicas(std::vector<RuntimeId> replicas) {
        replica_list_ = std::move(replicas);
        replica_rr_ = 0;
    }
    const std::vector<RuntimeId>& replica_list() const { return replica_list_; }

    void adopt_cluster(const ClusterConfig& cfg) {
        if (cfg.epoch <= cluster_.epoch) return;
        cluster_ = cfg;
        vs_assign_.clear();
    }

    // Starts migrating up to `count` oldest Normal flows to dst; returns how
    // many started.
    std::uint64_t start_migrations(RuntimeId dst, std::uint64_t count, VirtualTime now) {
        if (dst == id_ || count == 0) return 0;
        std::vector<FlowKey> picked;
        for (const auto& [seq, key] : by_age_) {
            if (picked.size() >= count) break;
            if (flows_.at(key)->mode == ActorMode::Normal) picked.push_back(key);
        }
        for (const FlowKey& key : picked) start_migration(*flows_.at(key), dst, now);
        return picked.size();
    }

    // Promotes every replica record of `failed`; returns how many began
    // recovering.
    std::uint64_t recover_from(RuntimeId failed, VirtualTime now) {
        std::vector<FlowKey> picked;
        for (const auto& [seq, key] : by_age_) {
            FlowActor& a = *flows_.at(key);
            // A migration target converted from a replica record still holds
            // the last stored bundle and covers its source until the handoff.
            bool covers = a.mode == ActorMode::Replica ||
                          (a.mode == ActorMode::MigrationTarget &&
                           !a.stored_bundle.blobs.empty());
            if (covers && a.replica_source == failed) picked.push_back(key);
        }
        for (const FlowKey& key : picked) {
            FlowActor& a = *flows_.at(key);
            if (role_ == MemberRole::VirtualSwitch) {
                // The promoted switch needs no route update: traffic reaches
                // it only once the operator retargets ingress.
                promote_replica(a, now);
            } else {
                a.recovery_pending = true;
                send_to(vswitch_id(), make_message(id_, vswitch_id(), a.key, next_corr_++,
                                                   RecoverRouteReqBody{}),
                        now);
            }
        }
        return picked.size();
    }

    std::uint64_t recovered_count() const { return recovered_; }

private:
    // ------------------------------------------------------------------
    // Dataplane

    void on_dataplane_packet(Packet&& pkt, VirtualTime now) {
        processed_since_poll_ += 1;
        FlowActor* actor = nullptr;
        if (auto it = flows_.find(pkt.key); it != flows_.end()) {
            actor = it->second.get();
        } else {
            actor = create_actor_for_packet(pkt, now);
            if (!actor) return;  // counted by the creator
        }
        actor->last_pkt_time = now;
        switch (actor->mode) {
            case ActorMode::Normal:
                process_through_chain(*actor, std::move(pkt), now);
                break;
            case ActorMode::MigrationSource:
                if (actor->fsm.phase == MigrationFsm::Phase::WaitState) {
                    // State already shipped; these packets have no home.
                    drop_packet(DropKind::Protocol, pkt, now);
                } else {
                    process_through_chain(*actor, std::move(pkt), now);
                }
                break;
            case ActorMode::MigrationTarget:
            case ActorMode::Replica:
                buffer_packet(*actor, std::move(pkt), now);
                break;
        }
    }

    FlowActor* create_actor_for_packet(const Packet& pkt, VirtualTime now) {
        if (flows_.size() >= cfg_.pool_capacity) {
            overload_drops_ += 1;
            drop_packet(DropKind::Overload, pkt, now);
            return nullptr;
        }
        if (role_ == MemberRole::VirtualSwitch) {
            RuntimeId dest = pick_least_loaded();
            if (dest == 0) {
                overload_drops_ += 1;
                drop_packet(DropKind::Overload, pkt, now);
                return nullptr;
            }
            FlowActor& a = make_actor(pkt.key, ActorMode::Normal, now);
            a.states.push_back(chain_.nfs[0]->allocate_new_fs());
            static_cast<ForwardState&>(*a.states[0]).dest = dest;
            vs_assign_[dest] += 1;
            return &a;
        }
        FlowActor& a = make_actor(pkt.key, ActorMode::Normal, now);
        for (const auto& nf : chain_.nfs) a.states.push_back(nf->allocate_new_fs());
        return &a;
    }

    RuntimeId pick_least_loaded() const {
        RuntimeId best = 0;
        std::uint64_t best_load = 0;
        for (const auto& m : cluster_.members) {
            if (m.role != MemberRole::Runtime) continue;
            std::uint64_t extra = 0;
            if (auto it = vs_assign_.find(m.id); it != vs_assign_.end()) extra = it->second;
            std::uint64_t load = m.workload.active_flows + extra;
            if (best == 0 || load < best_load) {
                best = m.id;
                best_load = load;
            }
        }
        return best;
    }

    void process_through_chain(FlowActor& actor, Packet&& pkt, VirtualTime now) {
        FLOWACTOR_CHECK(!in_chain_, "chain reentered");
        in_chain_ = true;
        Packet work = std::move(pkt);
        for (std::size_t i = 0; i < chain_.nfs.size(); ++i) {
            Verdict v = chain_.nfs[i]->process_pkt(work, *actor.states[i], *storage_[i]);
            if (v.action == Action::Drop) {
                in_chain_ = false;
                drop_packet(DropKind::Nf, work, now);
                return;
            }
            if (v.mutated_payload) work.payload = std::move(*v.mutated_payload);
        }
        in_chain_ = false;
        if (metrics_->record_state_digests)
            metrics_->state_digests[Metrics::packet_id(work.key, work.gen_seq)] =
                bundle_digest(bundle_of(actor));

        if (actor.replica_target && !actor.degraded &&
            transport_.peer_broken(*actor.replica_target)) {
            actor.degraded = true;
            metrics_->replication_degraded += 1;
        }
        if (actor.replica_target && !actor.degraded) {
            ReplicationDataBody body{work, bundle_of(actor)};
            metrics_->repl_pending[*actor.replica_target] += 1;
            send_to(*actor.replica_target,
                    make_message(id_, *actor.replica_target, actor.key, next_corr_++,
                                 std::move(body)),
                    now);
        } else {
            output(actor, std::move(work), now);
        }
    }

    // Where a fully processed packet goes: a switch forwards it to the
    // entry's destination runtime, a runtime emits it from the cluster.
    void output(FlowActor& actor, Packet&& pkt, VirtualTime now) {
        if (role_ == MemberRole::VirtualSwitch) {
            transport_.send_dataplane(static_cast<ForwardState&>(*actor.states[0]).dest, pkt);
            return;
        }
        emit_packet(std::move(pkt), id_, now);
    }

    void emit_packet(Packet&& pkt, RuntimeId processed_by, VirtualTime now) {
        pkt.ts_emitted = now;
        if (metrics_->record_emissions)
            metrics_->emissions.push_back({pkt.key, pkt.gen_seq, now, metrics_->next_ordinal++,
                                           id_, processed_by});
        emit_(std::move(pkt), id_, processed_by);
    }

    void buffer_packet(FlowActor& actor, Packet&& pkt, VirtualTime now) {
        if (actor.buffer.size() >= cfg_.target_buffer_cap) {
            drop_packet(DropKind::Protocol, actor.buffer.front(), now);
            actor.buffer.pop_front();
            buffered_count_ -= 1;
        }
        actor.buffer.push_back(std::move(pkt));
        buffered_count_ += 1;
    }

    void drop_packet(DropKind kind, const Packet& pkt, VirtualTime now) {
        metrics_->drop(kind);
        metrics_->trace_event(trace_code::dropped, static_cast<std::uint64_t>(kind),
                              Metrics::packet_id(pkt.key, pkt.gen_seq), now);
    }

    // ------------------------------------------------------------------
    // Actor lifecycle

    FlowActor& make_actor(const FlowKey& key, ActorMode mode, VirtualTime now) {
        auto actor = std::make_unique<FlowActor>();
        actor->key = key;
        actor->created_seq = next_created_++;
        actor->mode = mode;
        actor->last_pkt_time = now;
        if (mode == ActorMode::Normal && !replica_list_.empty()) {
            actor->replica_target = replica_list_[replica_rr_ % replica_list_.size()];
            replica_rr_ += 1;
        }
        FlowActor& ref = *actor;
        FLOWACTOR_CHECK(flows_.emplace(key, std::move(actor)).second, "duplicate actor");
        by_age_.emplace(ref.created_seq, key);
        schedule_expiry(ref, now + cfg_.expiry_timeout);
        return ref;
    }

    void finalize_actor(FlowActor& actor) {
        FLOWACTOR_CHECK(actor.lifecycle == Lifecycle::Live, "double finalize");
        actor.lifecycle = Lifecycle::Finalized;
        buffered_count_ -= actor.buffer.size();
        by_age_.erase(actor.created_seq);
        flows_.erase(actor.key);  // destroys `actor`
    }

    void schedule_expiry(FlowActor& actor, VirtualTime at) {
        VirtualTime slot =
            (at + cfg_.wheel_granularity - 1) / cfg_.wheel_granularity * cfg_.wheel_granularity;
        actor.wheel_slot = slot;
        wheel_[slot].push_back(actor.key);
    }

    std::uint64_t expire_sweep(VirtualTime now) {
        std::uint64_t expired = 0;
        while (!wheel_.empty() && wheel_.begin()->first <= now) {
            std::vector<FlowKey> keys = std::move(wheel_.begin()->second);
            VirtualTime slot = wheel_.begin()->first;
            wheel_.erase(wheel_.begin());
            for (const FlowKey& key : keys) {
                auto it = flows_.find(key);
                if (it == flows_.end() || it->second->wheel_slot != slot) continue;
                FlowActor& a = *it->second;
                if (a.mode == ActorMode::MigrationSource || a.mode == ActorMode::MigrationTarget ||
                    a.recovery_pending) {
                    // Protocol in flight; its own deadline or reply owns this
                    // actor, not the idle timer.
                    schedule_expiry(a, now + cfg_.expiry_timeout);
                    continue;
                }
                VirtualTime due = a.last_pkt_time + cfg_.expiry_timeout;
                if (due > now) {
                    schedule_expiry(a, due);
                    continue;
                }
                expire_actor(a, now);
                expired += 1;
            }
        }
        return expired;
    }

    void expire_actor(FlowActor& actor, VirtualTime now) {
        metrics_->trace_event(trace_code::actor_expired, FlowKeyHash{}(actor.key),
                              static_cast<std::uint64_t>(actor.mode), now);
        if (actor.mode == ActorMode::Normal) {
            for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
                chain_.nfs[i]->flow_expires(*actor.states[i], *storage_[i]);
            for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
                chain_.nfs[i]->deallocate_fs(std::move(actor.states[i]));
            actor.states.clear();
        }
        // Replica records drop their bundle with the actor; any buffered
        // packets were victims of an unfinished recovery.
        buffered_count_ -= actor.buffer.size();
        for (const Packet& p : actor.buffer) drop_packet(DropKind::Protocol, p, now);
        actor.buffer.clear();
        finalize_actor(actor);
    }

    // ------------------------------------------------------------------
    // Liaison: every control message lands here.

    void liaison_dispatch(ActorMessage&& msg, VirtualTime now) {
        switch (msg.kind()) {
            case MessageKind::Heartbeat:
                send_to(msg.src, make_message(id_, msg.src, msg.correlation_id, HeartbeatAckBody{}),
                        now);
                return;
            case MessageKind::Rpc:
                handle_rpc(msg, now);
                return;
            case MessageKind::MigrationCreateReq: {
                bool ok = true;
                if (auto it = flows_.find(msg.key.value()); it != flows_.end()) {
                    FlowActor& a = *it->second;
                    if (a.mode == ActorMode::Replica && !a.recovery_pending) {
                        // The flow is moving onto its own standby host. The
                        // record becomes the migration target; its bundle
                        // keeps covering source failure until the handoff.
                        a.mode = ActorMode::MigrationTarget;
                    } else if (a.mode != ActorMode::MigrationTarget) {
                        ok = false;  // a live or recovering actor owns the key
                    }
                } else if (flows_.size() >= cfg_.pool_capacity) {
                    ok = false;
                } else {
                    make_actor(*msg.key, ActorMode::MigrationTarget, now);
                }
                send_to(msg.src, make_message(id_, msg.src, *msg.key, msg.correlation_id,
                                              MigrationCreateRespBody{ok}),
                        now);
                return;
            }
            case MessageKind::MigrationCreateResp:
                on_migration_create_resp(msg, now);
                return;
            case MessageKind::RouteUpdateReq:
                on_route_update_req(msg, now);
                return;
            case MessageKind::RouteUpdateResp:
                on_route_update_resp(msg, now);
                return;
            case MessageKind::StateTransferReq:
                on_state_transfer_req(msg, now);
                return;
            case MessageKind::StateTransferResp:
                on_state_transfer_resp(msg, now);
                return;
            case MessageKind::DestroyTarget:
                on_destroy_target(msg, now);
                return;
            case MessageKind::ReplicationData:
                on_replication_data(msg, now);
                return;
            case MessageKind::RecoverRouteReq:
                on_recover_route_req(msg, now);
                return;
            case MessageKind::RecoverRouteResp:
                on_recover_route_resp(msg, now);
                return;
            default:
                metrics_->liaison_errors += 1;
                return;
        }
    }

    void handle_rpc(const ActorMessage& msg, VirtualTime now) {
        const auto& rpc = std::get<RpcBody>(msg.body);
        RpcResponse resp = std::visit(
            [&](const auto& req) -> RpcResponse {
                using T = std::decay_t<decltype(req)>;
                if constexpr (std::is_same_v<T, PollWorkloadReq>) {
                    WorkloadResp r{workload()};
                    processed_since_poll_ = 0;
                    return r;
                } else if constexpr (std::is_same_v<T, NotifyClusterCfg>) {
                    adopt_cluster(req.cfg);
                    return RpcAck{true, cluster_.epoch, ""};
                } else if constexpr (std::is_same_v<T, SetMigrationTarget>) {
                    if (req.dst == id_) return RpcAck{false, 0, "target is self"};
                    const MemberInfo* m = cluster_.find(req.dst);
                    if (!m || m->role != MemberRole::Runtime)
                        return RpcAck{false, 0, "target not in cluster"};
                    return RpcAck{true, start_migrations(req.dst, req.count, now), ""};
                } else if constexpr (std::is_same_v<T, SetReplicas>) {
                    for (RuntimeId r : req.replicas) {
                        if (r == id_) return RpcAck{false, 0, "replica is self"};
                        if (!cluster_.find(r)) return RpcAck{false, 0, "replica not in cluster"};
                    }
                    set_replicas(req.replicas);
                    return RpcAck{true, req.replicas.size(), ""};
                } else {
                    static_assert(std::is_same_v<T, RecoverCmd>);
                    return RpcAck{true, recover_from(req.failed, now), ""};
                }
            },
            rpc.req);
        send_to(msg.src,
                make_message(id_, msg.src, msg.correlation_id, RpcRespBody{std::move(resp)}), now);
    }

    // ------------------------------------------------------------------
    // Migration: source side

    void start_migration(FlowActor& actor, RuntimeId target, VirtualTime now) {
        FLOWACTOR_CHECK(actor.mode == ActorMode::Normal, "migration of busy actor");
        actor.mode = ActorMode::MigrationSource;
        actor.fsm.phase = MigrationFsm::Phase::WaitCreate;
        actor.fsm.target = target;
        actor.fsm.correlation_id = next_corr_++;
        arm_fsm(actor, now);
        metrics_->migrations_started += 1;
        send_to(target, make_message(id_, target, actor.key, actor.fsm.correlation_id,
                                     MigrationCreateReqBody{}),
                now);
    }

    void on_migration_create_resp(const ActorMessage& msg, VirtualTime now) {
        FlowActor* a = fsm_actor(msg, MigrationFsm::Phase::WaitCreate);
        if (!a) return;
        if (!std::get<MigrationCreateRespBody>(msg.body).ok) {
            abort_migration(*a, now);
            return;
        }
        a->fsm.phase = MigrationFsm::Phase::WaitRoute;
        arm_fsm(*a, now);
        send_to(vswitch_id(), make_message(id_, vswitch_id(), a->key, a->fsm.correlation_id,
                                           RouteUpdateReqBody{a->fsm.target}),
                now);
    }

    void on_route_update_resp(const ActorMessage& msg, VirtualTime now) {
        FlowActor* a = fsm_actor(msg, MigrationFsm::Phase::WaitRoute);
        if (!a) return;
        if (!std::get<RouteUpdateRespBody>(msg.body).found) {
            abort_migration(*a, now);
            return;
        }
        a->fsm.phase = MigrationFsm::Phase::WaitState;
        arm_fsm(*a, now);
        send_to(a->fsm.target, make_message(id_, a->fsm.target, a->key, a->fsm.correlation_id,
                                            StateTransferReqBody{bundle_of(*a)}),
                now);
    }

    void on_state_transfer_resp(const ActorMessage& msg, VirtualTime now) {
        FlowActor* a = fsm_actor(msg, MigrationFsm::Phase::WaitState);
        if (!a) return;
        if (!std::get<StateTransferRespBody>(msg.body).ok) {
            abort_migration(*a, now);
            return;
        }
        // Commit: release shared-state claims, then retire the actor.
        for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
            chain_.nfs[i]->flow_migrate_out(*a->states[i], *storage_[i]);
        for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
            chain_.nfs[i]->deallocate_fs(std::move(a->states[i]));
        a->states.clear();
        a->fsm.phase = MigrationFsm::Phase::Done;
        metrics_->migrations_done += 1;
        metrics_->trace_event(trace_code::migration_done, FlowKeyHash{}(a->key), a->fsm.target,
                              now);
        finalize_actor(*a);
    }

    void abort_migration(FlowActor& actor, VirtualTime now) {
        send_to(actor.fsm.target, make_message(id_, actor.fsm.target, actor.key,
                                               actor.fsm.correlation_id, DestroyTargetBody{}),
                now);
        send_to(vswitch_id(), make_message(id_, vswitch_id(), actor.key, next_corr_++,
                                           RouteUpdateReqBody{id_}),
                now);
        actor.fsm = MigrationFsm{};
        actor.fsm.phase = MigrationFsm::Phase::Idle;
        actor.mode = ActorMode::Normal;
        metrics_->migrations_aborted += 1;
        metrics_->trace_event(trace_code::migration_aborted, FlowKeyHash{}(actor.key), 0, now);
    }

    FlowActor* fsm_actor(const ActorMessage& msg, MigrationFsm::Phase phase) {
        auto it = flows_.find(msg.key.value());
        if (it == flows_.end()) return nullptr;
        FlowActor& a = *it->second;
        if (a.mode != ActorMode::MigrationSource || a.fsm.phase != phase ||
            a.fsm.correlation_id != msg.correlation_id)
            return nullptr;  // stale or duplicated protocol message
        return &a;
    }

    void arm_fsm(FlowActor& actor, VirtualTime now) {
        actor.fsm.deadline = now + cfg_.migration_step_deadline;
        fsm_wheel_[actor.fsm.deadline].push_back(actor.key);
    }

    bool fsm_deadline_sweep(VirtualTime now) {
        bool progressed = false;
        while (!fsm_wheel_.empty() && fsm_wheel_.begin()->first <= now) {
            std::vector<FlowKey> keys = std::move(fsm_wheel_.begin()->second);
            fsm_wheel_.erase(fsm_wheel_.begin());
            for (const FlowKey& key : keys) {
                auto it = flows_.find(key);
                if (it == flows_.end()) continue;
                FlowActor& a = *it->second;
                if (a.mode != ActorMode::MigrationSource || a.fsm.deadline > now) continue;
                if (a.fsm.phase == MigrationFsm::Phase::WaitCreate ||
                    a.fsm.phase == MigrationFsm::Phase::WaitRoute ||
                    a.fsm.phase == MigrationFsm::Phase::WaitState) {
                    abort_migration(a, now);
                    progressed = true;
                }
            }
        }
        return progressed;
    }

    // ------------------------------------------------------------------
    // Migration: target side

    void on_state_transfer_req(const ActorMessage& msg, VirtualTime now) {
        auto it = flows_.find(msg.key.value());
        bool ok = it != flows_.end() && it->second->mode == ActorMode::MigrationTarget;
        const auto& bundle = std::get<StateTransferReqBody>(msg.body).states;
        if (ok && (bundle.chain_name != chain_.name || bundle.blobs.size() != chain_.nfs.size()))
            ok = false;
        if (ok) {
            FlowActor& a = *it->second;
            a.states.clear();
            for (std::size_t i = 0; i < chain_.nfs.size(); ++i) {
                a.states.push_back(chain_.nfs[i]->deserialize_fs(bundle.blobs[i]));
                chain_.nfs[i]->flow_migrate_in(*a.states[i], *storage_[i]);
            }
            a.mode = ActorMode::Normal;
            a.promoted_corr = msg.correlation_id;
            a.replica_source = 0;  // no longer anyone's standby record
            a.stored_bundle = FlowStateBundle{};
            if (!replica_list_.empty()) {
                a.replica_target = replica_list_[replica_rr_ % replica_list_.size()];
                replica_rr_ += 1;
            }
            a.last_pkt_time = now;
            std::deque<Packet> pending = std::move(a.buffer);
            a.buffer.clear();
            buffered_count_ -= pending.size();
            // Reply before draining: the drain may itself drop or emit, and
            // the source must learn the transfer landed regardless.
            send_to(msg.src, make_message(id_, msg.src, *msg.key, msg.correlation_id,
                                          StateTransferRespBody{true}),
                    now);
            for (auto& pkt : pending) process_through_chain(a, std::move(pkt), now);
            return;
        }
        send_to(msg.src, make_message(id_, msg.src, *msg.key, msg.correlation_id,
                                      StateTransferRespBody{false}),
                now);
    }

    void on_destroy_target(const ActorMessage& msg, VirtualTime now) {
        auto it = flows_.find(msg.key.value());
        if (it == flows_.end()) return;  // idempotent
        FlowActor& a = *it->second;
        if (a.mode == ActorMode::MigrationTarget) {
            buffered_count_ -= a.buffer.size();
            for (const Packet& p : a.buffer) drop_packet(DropKind::Protocol, p, now);
            a.buffer.clear();
            finalize_actor(a);
        } else if (a.mode == ActorMode::Normal && !a.states.empty() &&
                   msg.correlation_id == a.promoted_corr) {
            // The transfer landed but the source aborted anyway (lost reply).
            // Undo the shared-state acquisition and retire.
            for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
                chain_.nfs[i]->flow_migrate_out(*a.states[i], *storage_[i]);
            for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
                chain_.nfs[i]->deallocate_fs(std::move(a.states[i]));
            a.states.clear();
            buffered_count_ -= a.buffer.size();
            for (const Packet& p : a.buffer) drop_packet(DropKind::Protocol, p, now);
            a.buffer.clear();
            finalize_actor(a);
        }
    }

    // ------------------------------------------------------------------
    // Replication and recovery

    void on_replication_data(ActorMessage& msg, VirtualTime now) {
        auto& body = std::get<ReplicationDataBody>(msg.body);
        auto& pending = metrics_->repl_pending[id_];
        FLOWACTOR_CHECK(pending > 0, "replication arrived without a pending send");
        pending -= 1;
        FlowActor* a = nullptr;
        if (auto it = flows_.find(*msg.key); it != flows_.end()) {
            a = it->second.get();
            // MigrationTarget also stores: replications racing a migration of
            // the same flow onto this host must keep their durability order.
            if (a->mode != ActorMode::Replica && a->mode != ActorMode::MigrationTarget) {
                metrics_->liaison_errors += 1;
                drop_packet(DropKind::Protocol, body.pkt, now);
                return;
            }
        } else {
            if (flows_.size() >= cfg_.pool_capacity) {
                drop_packet(DropKind::Overload, body.pkt, now);
                return;
            }
            a = &make_actor(*msg.key, ActorMode::Replica, now);
        }
        a->replica_source = msg.src;
        a->stored_bundle = body.states;
        a->last_replicated_seq = body.pkt.gen_seq;
        a->last_pkt_time = now;
        if (metrics_->record_emissions)
            metrics_->replica_stored_ordinal[Metrics::packet_id(*msg.key, body.pkt.gen_seq)] =
                metrics_->next_ordinal++;
        // Output-commit: the state is durable here, so the packet may leave.
        if (role_ == MemberRole::VirtualSwitch) {
            ByteReader r(body.states.blobs.at(0));
            transport_.send_dataplane(r.u64(), body.pkt);
        } else {
            Packet out = std::move(body.pkt);
            emit_packet(std::move(out), msg.src, now);
        }
    }

    void on_recover_route_req(const ActorMessage& msg, VirtualTime now) {
        bool existed = true;
        auto it = flows_.find(*msg.key);
        if (it != flows_.end() && it->second->mode == ActorMode::Normal) {
            static_cast<ForwardState&>(*it->second->states[0]).dest = msg.src;
        } else if (it == flows_.end()) {
            existed = false;
            if (flows_.size() < cfg_.pool_capacity) {
                FlowActor& a = make_actor(*msg.key, ActorMode::Normal, now);
                a.states.push_back(chain_.nfs[0]->allocate_new_fs());
                static_cast<ForwardState&>(*a.states[0]).dest = msg.src;
                vs_assign_[msg.src] += 1;
            }
        }
        send_to(msg.src, make_message(id_, msg.src, *msg.key, msg.correlation_id,
                                      RecoverRouteRespBody{existed}),
                now);
    }

    void on_recover_route_resp(const ActorMessage& msg, VirtualTime now) {
        auto it = flows_.find(*msg.key);
        if (it == flows_.end()) return;
        FlowActor& a = *it->second;
        if (!a.recovery_pending ||
            (a.mode != ActorMode::Replica && a.mode != ActorMode::MigrationTarget))
            return;
        promote_replica(a, now);
    }

    void promote_replica(FlowActor& a, VirtualTime now) {
        if (a.stored_bundle.chain_name != chain_.name ||
            a.stored_bundle.blobs.size() != chain_.nfs.size()) {
            metrics_->liaison_errors += 1;
            buffered_count_ -= a.buffer.size();
            for (const Packet& p : a.buffer) drop_packet(DropKind::Failure, p, now);
            a.buffer.clear();
            finalize_actor(a);
            return;
        }
        a.states.clear();
        for (std::size_t i = 0; i < chain_.nfs.size(); ++i) {
            a.states.push_back(chain_.nfs[i]->deserialize_fs(a.stored_bundle.blobs[i]));
            chain_.nfs[i]->flow_recover(*a.states[i], *storage_[i]);
        }
        a.mode = ActorMode::Normal;
        a.recovery_pending = false;
        a.last_pkt_time = now;
        if (!replica_list_.empty()) {
            a.replica_target = replica_list_[replica_rr_ % replica_list_.size()];
            replica_rr_ += 1;
        }
        recovered_ += 1;
        metrics_->recovered_flows += 1;
        metrics_->trace_event(trace_code::flow_recovered, FlowKeyHash{}(a.key),
                              a.last_replicated_seq, now);
        std::deque<Packet> pending = std::move(a.buffer);
        a.buffer.clear();
        buffered_count_ -= pending.size();
        for (auto& pkt : pending) process_through_chain(a, std::move(pkt), now);
    }

    // ------------------------------------------------------------------
    // Vswitch route update (step 2 of migration)

    void on_route_update_req(const ActorMessage& msg, VirtualTime now) {
        auto it = flows_.find(*msg.key);
        bool found = it != flows_.end() && it->second->mode == ActorMode::Normal;
        if (found)
            static_cast<ForwardState&>(*it->second->states[0]).dest =
                std::get<RouteUpdateReqBody>(msg.body).new_dest;
        // The response deliberately travels the data path: it must arrive at
        // the old destination behind every packet already sent there.
        send_to(msg.src, make_message(id_, msg.src, *msg.key, msg.correlation_id,
                                      RouteUpdateRespBody{found}),
                now, PathClass::Data);
    }

    // ------------------------------------------------------------------
    // Helpers

    RuntimeId vswitch_id() const {
        for (const auto& m : cluster_.members)
            if (m.role == MemberRole::VirtualSwitch) return m.id;
        return 0;
    }

    FlowStateBundle bundle_of(const FlowActor& actor) const {
        FlowStateBundle b;
        b.chain_name = chain_.name;
        for (std::size_t i = 0; i < chain_.nfs.size(); ++i)
            b.blobs.push_back(chain_.nfs[i]->serialize_fs(*actor.states[i]));
        return b;
    }

    void send_to(RuntimeId dst, ActorMessage&& msg, VirtualTime now,
                 PathClass path = PathClass::Control) {
        if (dst == 0 && msg.kind() != MessageKind::RpcResp && msg.kind() != MessageKind::HeartbeatAck) {
            metrics_->liaison_errors += 1;
            return;
        }
        metrics_->trace_event(trace_code::msg_sent, static_cast<std::uint64_t>(msg.kind()), dst,
                              now);
        transport_.send_message(dst, msg, now, path);
    }

    RuntimeId id_;
    MemberRole role_;
    ServiceChain chain_;
    RuntimeConfig cfg_;
    Metrics* metrics_;
    EmitSink emit_;
    Transport transport_;

    std::unordered_map<FlowKey, std::unique_ptr<FlowActor>, FlowKeyHash> flows_;
    std::map<std::uint64_t, FlowKey> by_age_;
    std::vector<std::unique_ptr<SharedState>> storage_;
    std::deque<Packet> input_queue_;
    std::deque<ActorMessage> rx_ring_;
    std::map<VirtualTime, std::vector<FlowKey>> wheel_;
    std::map<VirtualTime, std::vector<FlowKey>> fsm_wheel_;

    ClusterConfig cluster_;
    std::vector<RuntimeId> replica_list_;
    std::size_t replica_rr_ = 0;
    std::map<RuntimeId, std::uint64_t> vs_assign_;  // local assignment deltas

    std::uint64_t next_created_ = 1;
    std::uint64_t next_corr_ = 1;
    std::uint64_t processed_since_poll_ = 0;
    std::uint64_t overload_drops_ = 0;
    std::uint64_t recovered_ = 0;
    std::uint64_t buffered_count_ = 0;  // sum of all actor buffer sizes
    bool in_chain_ = false;
};

}  // namespace flowactor
