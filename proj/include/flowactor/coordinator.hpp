#pragma once

#include "json.hpp"

#include "flowactor/sim.hpp"

namespace flowactor {

struct CoordinatorConfig {
    VirtualTime heartbeat_period = 100 * kMillisecond;
    VirtualTime poll_period = kSecond;
    int miss_limit = 3;
    std::uint64_t overload_drop_delta = 100;  // dropped packets between polls
    std::uint64_t migration_batch = 500;
    int idle_poll_limit = 3;      // consecutive quiet polls before draining
    double idle_fraction = 0.1;   // "quiet" = below this fraction of peak pps
    ChannelConfig channel;
};

// Cluster brain: keeps membership, detects failures by heartbeat silence,
// polls workloads, and reacts to overload and idleness. Every observation and
// decision is appended to an in-memory NDJSON-able log; decisions are pure
// functions of logged observations, so a log replay can re-derive and audit
// them (see replay_log below).
class Coordinator : public ControlNode {
public:
    // Asks the environment for a fresh runtime; returns its id (0 = refused).
    using LaunchFn = std::function<RuntimeId(VirtualTime)>;

    Coordinator(CoordinatorConfig cfg, Metrics* metrics, Transport::FrameSink sink)
        : cfg_(cfg), metrics_(metrics), transport_(kCoordinatorId, cfg.channel, std::move(sink)) {}

    void set_launch_fn(LaunchFn fn) { launch_ = std::move(fn); }

    // Boots the cluster: epoch 1, config to every member, replica wiring.
    void deploy_cluster(std::vector<MemberInfo> members,
                        std::map<RuntimeId, std::vector<RuntimeId>> replicas, VirtualTime now) {
        cluster_.cluster_id = 1;
        cluster_.epoch = 1;
        cluster_.members = std::move(members);
        replicas_of_ = std::move(replicas);
        for (const MemberInfo& m : cluster_.members) members_[m.id].info = m;
        nlohmann::json entry = {
            {"t", now},
            {"event", "deploy"},
            {"epoch", 1},
            {"heartbeat_period", cfg_.heartbeat_period},
            {"poll_period", cfg_.poll_period},
            {"miss_limit", cfg_.miss_limit},
            {"overload_drop_delta", cfg_.overload_drop_delta},
            {"migration_batch", cfg_.migration_batch},
            {"idle_poll_limit", cfg_.idle_poll_limit},
            {"idle_fraction", cfg_.idle_fraction},
            {"members", member_list()},
        };
        log_.push_back(std::move(entry));
        for (const MemberInfo& m : cluster_.members)
            send_rpc(m.id, NotifyClusterCfg{cluster_}, now);
        for (const auto& [rt, reps] : replicas_of_)
            if (!reps.empty()) send_rpc(rt, SetReplicas{reps}, now);
        next_beat_ = now + cfg_.heartbeat_period;
        next_poll_ = now + cfg_.poll_period;
    }

    const ClusterConfig& cluster() const { return cluster_; }
    const std::vector<nlohmann::json>& log() const { return log_; }
    bool is_alive(RuntimeId id) const {
        auto it = members_.find(id);
        return it != members_.end() && it->second.alive;
    }
    RuntimeId active_vswitch() const {
        for (const MemberInfo& m : cluster_.members)
            if (m.role == MemberRole::VirtualSwitch) return m.id;
        return 0;
    }

    // ------------------------------------------------------------------
    // ControlNode

    RuntimeId node_id() const override { return kCoordinatorId; }
    Transport& node_transport() override { return transport_; }

    void on_message(ActorMessage&& msg, VirtualTime now) override {
        if (msg.kind() == MessageKind::HeartbeatAck) {
            auto it = members_.find(msg.src);
            if (it != members_.end() && it->second.alive &&
                it->second.beat_corr == msg.correlation_id) {
                it->second.beat_corr = 0;
                it->second.misses = 0;
                it->second.first_unanswered = kNoDeadline;
            }
            return;
        }
        if (msg.kind() != MessageKind::RpcResp) return;
        auto pending = pending_.find(msg.correlation_id);
        if (pending == pending_.end()) return;
        PendingOp op = pending->second;
        pending_.erase(pending);
        const RpcResponse& resp = std::get<RpcRespBody>(msg.body).resp;
        if (op.kind == PendingOp::Poll)
            on_poll_resp(op.member, std::get<WorkloadResp>(resp).report, now);
        else if (op.kind == PendingOp::Migrate)
            log_.push_back({{"t", now},
                            {"event", "batch_ack"},
                            {"from", op.member},
                            {"to", op.peer},
                            {"started", std::get<RpcAck>(resp).value}});
        else if (op.kind == PendingOp::Recover)
            log_.push_back({{"t", now},
                            {"event", "recover_ack"},
                            {"replica", op.member},
                            {"failed", op.peer},
                            {"flows", std::get<RpcAck>(resp).value}});
    }

    bool node_tick(VirtualTime now) override {
        bool progressed = transport_.retransmit_sweep(now) > 0;
        while (next_beat_ != kNoDeadline && next_beat_ <= now) {
            heartbeat_round(next_beat_);
            next_beat_ += cfg_.heartbeat_period;
            progressed = true;
        }
        while (next_poll_ != kNoDeadline && next_poll_ <= now) {
            poll_round(next_poll_);
            next_poll_ += cfg_.poll_period;
            progressed = true;
        }
        return progressed;
    }

    VirtualTime node_next_deadline() const override {
        return std::min({next_beat_, next_poll_, transport_.next_deadline()});
    }

private:
    struct MemberState {
        MemberInfo info;
        bool alive = true;
        std::uint64_t beat_corr = 0;  // outstanding heartbeat, 0 = answered
        VirtualTime first_unanswered = kNoDeadline;
        int misses = 0;
        std::uint64_t last_dropped_total = 0;
        std::uint64_t peak_pps = 0;
        int idle_polls = 0;
        WorkloadReport last;
        bool polled_once = false;
    };

    struct PendingOp {
        enum Kind { Poll, Migrate, Recover, Notify, Replicas } kind = Poll;
        RuntimeId member = 0;
        RuntimeId peer = 0;
    };

    // One overload episode: shed half of the initial load to a fresh runtime.
    struct Episode {
        RuntimeId overloaded = 0;
        RuntimeId target = 0;
        std::uint64_t initial_active = 0;
        bool scale_in = false;  // draining an idle member instead
    };

    // ------------------------------------------------------------------
    // Heartbeats and failure declaration

    void heartbeat_round(VirtualTime now) {
        for (auto& [id, m] : members_) {
            if (!m.alive) continue;
            if (m.beat_corr != 0) {
                m.misses += 1;
                log_.push_back({{"t", now},
                                {"event", "heartbeat_miss"},
                                {"member", id},
                                {"misses", m.misses},
                                {"first_unanswered", m.first_unanswered}});
                if (m.misses >= cfg_.miss_limit) {
                    declare_failed(id, now);
                    continue;
                }
            } else {
                m.beat_corr = next_corr_++;
                m.first_unanswered = now;
                send_message(make_message(kCoordinatorId, id, m.beat_corr, HeartbeatBody{}), now);
            }
        }
    }

    void declare_failed(RuntimeId id, VirtualTime now) {
        MemberState& m = members_.at(id);
        m.alive = false;
        metrics_->trace_event(trace_code::member_failed, id, 0, now);
        std::vector<RuntimeId> reps;
        if (auto it = replicas_of_.find(id); it != replicas_of_.end()) reps = it->second;
        log_.push_back({{"t", now},
                        {"event", "member_failed"},
                        {"member", id},
                        {"first_unanswered", m.first_unanswered},
                        {"replicas", reps}});
        // Wake the replicas first, then tell everyone about the new world.
        for (RuntimeId r : reps) {
            if (!is_alive(r)) continue;
            std::uint64_t corr = send_rpc(r, RecoverCmd{id}, now);
            pending_[corr] = {PendingOp::Recover, r, id};
            log_.push_back({{"t", now}, {"event", "recover_cmd"}, {"replica", r}, {"failed", id}});
        }
        std::erase_if(cluster_.members, [&](const MemberInfo& mi) { return mi.id == id; });
        bump_epoch(now);
        if (episode_ && (episode_->overloaded == id || episode_->target == id)) episode_.reset();
    }

    // ------------------------------------------------------------------
    // Polls and the scaling policy

    void poll_round(VirtualTime now) {
        for (auto& [id, m] : members_) {
            if (!m.alive || m.info.role != MemberRole::Runtime) continue;
            std::uint64_t corr = send_rpc(id, PollWorkloadReq{}, now);
            pending_[corr] = {PendingOp::Poll, id, 0};
        }
    }

    void on_poll_resp(RuntimeId id, const WorkloadReport& r, VirtualTime now) {
        MemberState& m = members_.at(id);
        if (!m.alive) return;
        std::uint64_t drop_delta =
            m.polled_once ? r.dropped_packets - m.last_dropped_total : r.dropped_packets;
        m.last_dropped_total = r.dropped_packets;
        m.last = r;
        m.polled_once = true;
        m.peak_pps = std::max(m.peak_pps, r.throughput_pps);
        bool idle = r.throughput_pps <
                    static_cast<std::uint64_t>(static_cast<double>(m.peak_pps) * cfg_.idle_fraction);
        m.idle_polls = idle ? m.idle_polls + 1 : 0;
        log_.push_back({{"t", now},
                        {"event", "poll"},
                        {"member", id},
                        {"pps", r.throughput_pps},
                        {"active", r.active_flows},
                        {"dropped", r.dropped_packets},
                        {"drop_delta", drop_delta}});

        if (episode_) {
            drive_episode(id, r, now);
            return;  // one structural change at a time
        }
        if (drop_delta > cfg_.overload_drop_delta) {
            start_overload_episode(id, r, now);
            return;
        }
        maybe_scale_in(id, m, now);
    }

    void start_overload_episode(RuntimeId id, const WorkloadReport& r, VirtualTime now) {
        log_.push_back({{"t", now},
                        {"event", "overload"},
                        {"member", id},
                        {"active", r.active_flows}});
        RuntimeId fresh = launch_ ? launch_(now) : 0;
        if (fresh == 0) return;  // environment refused; retry on a later poll
        MemberInfo info{fresh, MemberRole::Runtime, "m" + std::to_string(fresh) + ".ctl",
                        "m" + std::to_string(fresh) + ".data", {}};
        members_[fresh].info = info;
        cluster_.members.push_back(info);
        log_.push_back({{"t", now}, {"event", "launch"}, {"member", fresh}});
        bump_epoch(now);
        episode_ = Episode{id, fresh, r.active_flows, false};
        send_batch(id, fresh, now);
    }

    void maybe_scale_in(RuntimeId id, MemberState& m, VirtualTime now) {
        if (m.idle_polls < cfg_.idle_poll_limit || m.peak_pps == 0) return;
        // Only drain if someone else can absorb the flows.
        RuntimeId dest = 0;
        std::uint64_t best = 0;
        for (const auto& [oid, om] : members_) {
            if (oid == id || !om.alive || om.info.role != MemberRole::Runtime) continue;
            if (dest == 0 || om.last.active_flows < best) {
                dest = oid;
                best = om.last.active_flows;
            }
        }
        if (dest == 0) return;
        log_.push_back(
            {{"t", now}, {"event", "scale_in"}, {"member", id}, {"to", dest}});
        episode_ = Episode{id, dest, m.last.active_flows, true};
        send_batch(id, dest, now);
    }

    void drive_episode(RuntimeId polled, const WorkloadReport& r, VirtualTime now) {
        if (polled != episode_->overloaded) return;
        std::uint64_t goal = episode_->scale_in ? 0 : episode_->initial_active / 2;
        if (r.active_flows <= goal) {
            if (episode_->scale_in) retire(episode_->overloaded, now);
            log_.push_back({{"t", now},
                            {"event", "episode_done"},
                            {"member", episode_->overloaded},
                            {"active", r.active_flows}});
            episode_.reset();
            return;
        }
        send_batch(episode_->overloaded, episode_->target, now);
    }

    void send_batch(RuntimeId from, RuntimeId to, VirtualTime now) {
        std::uint64_t corr = send_rpc(from, SetMigrationTarget{to, cfg_.migration_batch}, now);
        pending_[corr] = {PendingOp::Migrate, from, to};
        log_.push_back({{"t", now},
                        {"event", "migrate_batch"},
                        {"from", from},
                        {"to", to},
                        {"count", cfg_.migration_batch}});
    }

    void retire(RuntimeId id, VirtualTime now) {
        members_.at(id).alive = false;
        std::erase_if(cluster_.members, [&](const MemberInfo& mi) { return mi.id == id; });
        log_.push_back({{"t", now}, {"event", "retired"}, {"member", id}});
        bump_epoch(now);
    }

    // ------------------------------------------------------------------
    // Plumbing

    void bump_epoch(VirtualTime now) {
        cluster_.epoch += 1;
        metrics_->trace_event(trace_code::epoch_bumped, cluster_.epoch, 0, now);
        log_.push_back(
            {{"t", now}, {"event", "epoch"}, {"epoch", cluster_.epoch}, {"members", member_list()}});
        for (const MemberInfo& m : cluster_.members) {
            std::uint64_t corr = send_rpc(m.id, NotifyClusterCfg{cluster_}, now);
            pending_[corr] = {PendingOp::Notify, m.id, 0};
        }
    }

    nlohmann::json member_list() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const MemberInfo& m : cluster_.members)
            arr.push_back({{"id", m.id},
                           {"role", m.role == MemberRole::VirtualSwitch ? "vswitch" : "runtime"}});
        return arr;
    }

    std::uint64_t send_rpc(RuntimeId dst, RpcRequest req, VirtualTime now) {
        std::uint64_t corr = next_corr_++;
        send_message(make_message(kCoordinatorId, dst, corr, RpcBody{std::move(req)}), now);
        return corr;
    }

    void send_message(ActorMessage&& msg, VirtualTime now) {
        metrics_->coordinator_sends.push_back(now);
        transport_.send_message(msg.dst, msg, now);
    }

    CoordinatorConfig cfg_;
    Metrics* metrics_;
    Transport transport_;
    LaunchFn launch_;

    ClusterConfig cluster_;
    std::map<RuntimeId, MemberState> members_;
    std::map<RuntimeId, std::vector<RuntimeId>> replicas_of_;
    std::map<std::uint64_t, PendingOp> pending_;
    std::optional<Episode> episode_;
    std::vector<nlohmann::json> log_;

    VirtualTime next_beat_ = kNoDeadline;
    VirtualTime next_poll_ = kNoDeadline;
    std::uint64_t next_corr_ = 1;
};

// ---------------------------------------------------------------------------
// Log replay: re-derives every decision from the logged observations and
// flags any logged action the policy does not explain (and vice versa).

struct ReplayResult {
    std::vector<std::string> issues;
    std::uint64_t entries = 0;
    std::uint64_t decisions = 0;
    bool ok() const { return issues.empty(); }
};

inline ReplayResult replay_log(const std::vector<nlohmann::json>& log) {
    ReplayResult res;
    res.entries = log.size();
    auto complain = [&](VirtualTime t, const std::string& what) {
        res.issues.push_back("t=" + std::to_string(t) + ": " + what);
    };

    VirtualTime hb_period = 0, poll_period = 0;
    int miss_limit = 0, idle_poll_limit = 0;
    std::uint64_t overload_delta = 0, batch = 0;
    double idle_fraction = 0.0;
    bool deployed = false;
    std::uint64_t epoch = 0;

    struct Shadow {
        int misses = 0;
        bool alive = true;
        std::uint64_t last_dropped = 0;
        std::uint64_t last_delta = 0;
        std::uint64_t peak = 0;
        int idle_polls = 0;
        std::uint64_t last_active = 0;
        bool polled_once = false;
    };
    std::map<RuntimeId, Shadow> shadow;
    struct OpenEpisode {
        bool open = false;
        RuntimeId member = 0;
        RuntimeId target = 0;
        std::uint64_t initial = 0;
        bool scale_in = false;
    };
    OpenEpisode episode;
    bool expect_launch_or_nothing = false;  // right after an overload entry
    RuntimeId overloaded_pending = 0;
    std::uint64_t overload_active = 0;

    for (const nlohmann::json& e : log) {
        const std::string ev = e.at("event");
        const VirtualTime t = e.at("t");
        if (!deployed && ev != "deploy") {
            complain(t, "log does not start with deploy");
            break;
        }
        if (ev == "deploy") {
            deployed = true;
            hb_period = e.at("heartbeat_period");
            poll_period = e.at("poll_period");
            miss_limit = e.at("miss_limit");
            overload_delta = e.at("overload_drop_delta");
            batch = e.at("migration_batch");
            idle_poll_limit = e.at("idle_poll_limit");
            idle_fraction = e.at("idle_fraction");
            epoch = e.at("epoch");
            if (epoch != 1) complain(t, "deploy must open epoch 1");
            for (const auto& m : e.at("members")) shadow[m.at("id").get<RuntimeId>()] = {};
            if (poll_period <= 0 || hb_period <= 0) complain(t, "non-positive periods");
            continue;
        }
        if (expect_launch_or_nothing && ev != "launch") {
            // Overload with no launch means the environment refused; legal.
            expect_launch_or_nothing = false;
            overloaded_pending = 0;
        }
        if (ev == "heartbeat_miss") {
            RuntimeId id = e.at("member");
            Shadow& s = shadow[id];
            s.misses += 1;
            if (s.misses != e.at("misses").get<int>())
                complain(t, "miss count mismatch for member " + std::to_string(id));
        } else if (ev == "member_failed") {
            RuntimeId id = e.at("member");
            Shadow& s = shadow[id];
            if (s.misses < miss_limit)
                complain(t, "member " + std::to_string(id) + " declared failed after " +
                                std::to_string(s.misses) + " misses");
            VirtualTime first = e.at("first_unanswered");
            if (t != first + miss_limit * hb_period)
                complain(t, "failure declared at the wrong time (first unanswered at " +
                                std::to_string(first) + ")");
            s.alive = false;
            if (episode.open && (episode.member == id || episode.target == id))
                episode.open = false;
            res.decisions += 1;
        } else if (ev == "recover_cmd") {
            if (!shadow.count(e.at("replica").get<RuntimeId>()))
                complain(t, "recover_cmd to unknown replica");
            res.decisions += 1;
        } else if (ev == "poll") {
            RuntimeId id = e.at("member");
            Shadow& s = shadow[id];
            std::uint64_t dropped = e.at("dropped");
            std::uint64_t delta = s.polled_once ? dropped - s.last_dropped : dropped;
            if (delta != e.at("drop_delta").get<std::uint64_t>())
                complain(t, "drop_delta mismatch for member " + std::to_string(id));
            s.last_dropped = dropped;
            s.last_delta = delta;
            s.polled_once = true;
            std::uint64_t pps = e.at("pps");
            s.peak = std::max(s.peak, pps);
            bool idle = pps < static_cast<std::uint64_t>(static_cast<double>(s.peak) * idle_fraction);
            s.idle_polls = idle ? s.idle_polls + 1 : 0;
            s.last_active = e.at("active");
        } else if (ev == "overload") {
            RuntimeId id = e.at("member");
            // Justified only by the immediately preceding poll of this member.
            // The shadow recomputed that delta; re-check against the policy.
            if (episode.open) complain(t, "overload declared during an open episode");
            if (shadow[id].last_delta <= overload_delta)
                complain(t, "overload declared below the drop threshold for member " +
                                std::to_string(id));
            expect_launch_or_nothing = true;
            overloaded_pending = id;
            overload_active = e.at("active");
            res.decisions += 1;
        } else if (ev == "launch") {
            if (!expect_launch_or_nothing) complain(t, "launch without overload");
            expect_launch_or_nothing = false;
            RuntimeId fresh = e.at("member");
            shadow[fresh] = {};
            episode = {true, overloaded_pending, fresh, overload_active, false};
            overloaded_pending = 0;
            res.decisions += 1;
        } else if (ev == "scale_in") {
            RuntimeId id = e.at("member");
            Shadow& s = shadow[id];
            if (episode.open) complain(t, "scale_in during an open episode");
            if (s.idle_polls < idle_poll_limit)
                complain(t, "scale_in after only " + std::to_string(s.idle_polls) +
                                " idle polls for member " + std::to_string(id));
            episode = {true, id, e.at("to"), s.last_active, true};
            res.decisions += 1;
        } else if (ev == "migrate_batch") {
            if (!episode.open)
                complain(t, "migrate_batch outside any episode");
            else if (episode.member != e.at("from").get<RuntimeId>() ||
                     episode.target != e.at("to").get<RuntimeId>())
                complain(t, "migrate_batch does not match the open episode");
            if (e.at("count").get<std::uint64_t>() != batch)
                complain(t, "batch size mismatch");
            res.decisions += 1;
        } else if (ev == "episode_done") {
            if (!episode.open) {
                complain(t, "episode_done without an episode");
            } else {
                std::uint64_t goal = episode.scale_in ? 0 : episode.initial / 2;
                if (e.at("active").get<std::uint64_t>() > goal)
                    complain(t, "episode closed above its goal");
                episode.open = false;
            }
        } else if (ev == "retired") {
            shadow[e.at("member").get<RuntimeId>()].alive = false;
            res.decisions += 1;
        } else if (ev == "epoch") {
            std::uint64_t next = e.at("epoch");
            if (next != epoch + 1)
                complain(t, "epoch " + std::to_string(next) + " does not follow " +
                                std::to_string(epoch));
            epoch = next;
        } else if (ev == "batch_ack" || ev == "recover_ack") {
            // Acknowledgments are observations; nothing to re-derive.
        } else {
            complain(t, "unknown event '" + ev + "'");
        }
    }
    if (!deployed) res.issues.push_back("empty log");
    return res;
}

inline std::string log_to_ndjson(const std::vector<nlohmann::json>& log) {
    std::string out;
    for (const nlohmann::json& e : log) {
        out += e.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<nlohmann::json> ndjson_to_log(const std::string& text) {
    std::vector<nlohmann::json> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(nlohmann::json::parse(line));
    }
    return out;
}

}  // namespace flowactor
