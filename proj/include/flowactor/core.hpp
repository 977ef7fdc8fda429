#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "flowactor/bytes.hpp"

namespace flowactor {

// Virtual-time nanoseconds. Deterministic mode advances this via the event
// loop; benchmark mode samples a monotonic clock.
using VirtualTime = std::int64_t;

constexpr VirtualTime kMicrosecond = 1'000;
constexpr VirtualTime kMillisecond = 1'000'000;
constexpr VirtualTime kSecond = 1'000'000'000;

// Globally unique per cluster. Id 0 is reserved for the coordinator.
using RuntimeId = std::uint64_t;
constexpr RuntimeId kCoordinatorId = 0;

constexpr std::size_t kMtu = 1500;
constexpr std::size_t kMaxMessageBody = 64 * 1024;

enum class Proto : std::uint8_t { Tcp = 6, Udp = 17 };

// The 5-tuple identifying a flow. Total order is lexicographic over the
// fields so the key can drive ordered maps deterministically.
struct FlowKey {
    std::uint32_t src_ip = 0;
    std::uint32_t dst_ip = 0;
    Proto proto = Proto::Tcp;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;

    auto operator<=>(const FlowKey&) const = default;
};

struct FlowKeyHash {
    std::size_t operator()(const FlowKey& k) const {
        std::uint64_t h = 14695981039346656037ull;
        h = fnv1a_u64((std::uint64_t(k.src_ip) << 32) | k.dst_ip, h);
        h = fnv1a_u64((std::uint64_t(k.src_port) << 24) |
                          (std::uint64_t(k.dst_port) << 8) |
                          std::uint64_t(k.proto),
                      h);
        return static_cast<std::size_t>(h);
    }
};

inline std::string ip_to_string(std::uint32_t ip) {
    return std::to_string(ip >> 24) + "." + std::to_string((ip >> 16) & 0xff) + "." +
           std::to_string((ip >> 8) & 0xff) + "." + std::to_string(ip & 0xff);
}

inline std::string to_string(const FlowKey& k) {
    return ip_to_string(k.src_ip) + ":" + std::to_string(k.src_port) + ">" +
           ip_to_string(k.dst_ip) + ":" + std::to_string(k.dst_port) +
           (k.proto == Proto::Tcp ? "/tcp" : "/udp");
}

// Simulated dataplane unit. gen_seq is assigned by the traffic generator and
// strictly increases within one generated flow; it also rides in the first
// eight payload bytes so loss accounting stays possible after NF rewrites.
struct Packet {
    FlowKey key;
    std::uint64_t gen_seq = 0;
    Bytes payload;
    VirtualTime ts_created = 0;
    std::optional<VirtualTime> ts_emitted;

    bool operator==(const Packet&) const = default;
};

inline FlowKey flow_key_of(const Packet& pkt) { return pkt.key; }

struct WorkloadReport {
    std::uint64_t dropped_packets = 0;
    std::uint64_t throughput_pps = 0;
    std::uint64_t active_flows = 0;

    bool operator==(const WorkloadReport&) const = default;
};

enum class MemberRole : std::uint8_t { Runtime = 0, VirtualSwitch = 1 };

struct MemberInfo {
    RuntimeId id = 0;
    MemberRole role = MemberRole::Runtime;
    std::string control_addr;
    std::string data_addr;
    WorkloadReport workload;

    bool operator==(const MemberInfo&) const = default;
};

// Epoch-versioned cluster membership. Epochs strictly increase across
// successive notifications; receivers ignore stale epochs.
struct ClusterConfig {
    std::uint64_t cluster_id = 0;
    std::uint64_t epoch = 0;
    std::vector<MemberInfo> members;

    bool operator==(const ClusterConfig&) const = default;

    const MemberInfo* find(RuntimeId id) const {
        for (const auto& m : members)
            if (m.id == id) return &m;
        return nullptr;
    }
};

// Ordered per-NF opaque state blobs for one flow, matching the service chain.
struct FlowStateBundle {
    std::string chain_name;
    std::vector<Bytes> blobs;

    bool operator==(const FlowStateBundle&) const = default;
};

// ---------------------------------------------------------------------------
// Actor messages

enum class MessageKind : std::uint8_t {
    MigrationCreateReq = 1,
    MigrationCreateResp = 2,
    RouteUpdateReq = 3,
    RouteUpdateResp = 4,
    StateTransferReq = 5,
    StateTransferResp = 6,
    DestroyTarget = 7,
    ReplicationData = 8,
    RecoverRouteReq = 9,
    RecoverRouteResp = 10,
    Rpc = 11,
    RpcResp = 12,
    Heartbeat = 13,
    HeartbeatAck = 14,
};

inline const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::MigrationCreateReq: return "MigrationCreateReq";
        case MessageKind::MigrationCreateResp: return "MigrationCreateResp";
        case MessageKind::RouteUpdateReq: return "RouteUpdateReq";
        case MessageKind::RouteUpdateResp: return "RouteUpdateResp";
        case MessageKind::StateTransferReq: return "StateTransferReq";
        case MessageKind::StateTransferResp: return "StateTransferResp";
        case MessageKind::DestroyTarget: return "DestroyTarget";
        case MessageKind::ReplicationData: return "ReplicationData";
        case MessageKind::RecoverRouteReq: return "RecoverRouteReq";
        case MessageKind::RecoverRouteResp: return "RecoverRouteResp";
        case MessageKind::Rpc: return "Rpc";
        case MessageKind::RpcResp: return "RpcResp";
        case MessageKind::Heartbeat: return "Heartbeat";
        case MessageKind::HeartbeatAck: return "HeartbeatAck";
    }
    return "?";
}

struct MigrationCreateReqBody {
    bool operator==(const MigrationCreateReqBody&) const = default;
};
struct MigrationCreateRespBody {
    bool ok = true;
    bool operator==(const MigrationCreateRespBody&) const = default;
};
struct RouteUpdateReqBody {
    RuntimeId new_dest = 0;
    bool operator==(const RouteUpdateReqBody&) const = default;
};
struct RouteUpdateRespBody {
    bool found = true;
    bool operator==(const RouteUpdateRespBody&) const = default;
};
struct StateTransferReqBody {
    FlowStateBundle states;
    bool operator==(const StateTransferReqBody&) const = default;
};
struct StateTransferRespBody {
    bool ok = true;
    bool operator==(const StateTransferRespBody&) const = default;
};
struct DestroyTargetBody {
    bool operator==(const DestroyTargetBody&) const = default;
};
// Always carries exactly one packet and one state bundle.
struct ReplicationDataBody {
    Packet pkt;
    FlowStateBundle states;
    bool operator==(const ReplicationDataBody&) const = default;
};
struct RecoverRouteReqBody {
    bool operator==(const RecoverRouteReqBody&) const = default;
};
struct RecoverRouteRespBody {
    bool existed = true;
    bool operator==(const RecoverRouteRespBody&) const = default;
};

// Coordinator RPCs (Table-style control surface).
struct PollWorkloadReq {
    bool operator==(const PollWorkloadReq&) const = default;
};
struct NotifyClusterCfg {
    ClusterConfig cfg;
    bool operator==(const NotifyClusterCfg&) const = default;
};
struct SetMigrationTarget {
    RuntimeId dst = 0;
    std::uint64_t count = 0;
    bool operator==(const SetMigrationTarget&) const = default;
};
struct SetReplicas {
    std::vector<RuntimeId> replicas;
    bool operator==(const SetReplicas&) const = default;
};
struct RecoverCmd {
    RuntimeId failed = 0;
    bool operator==(const RecoverCmd&) const = default;
};

using RpcRequest =
    std::variant<PollWorkloadReq, NotifyClusterCfg, SetMigrationTarget, SetReplicas, RecoverCmd>;

struct RpcAck {
    bool ok = true;
    std::uint64_t value = 0;
    std::string info;
    bool operator==(const RpcAck&) const = default;
};
struct WorkloadResp {
    WorkloadReport report;
    bool operator==(const WorkloadResp&) const = default;
};

using RpcResponse = std::variant<RpcAck, WorkloadResp>;

struct RpcBody {
    RpcRequest req;
    bool operator==(const RpcBody&) const = default;
};
struct RpcRespBody {
    RpcResponse resp;
    bool operator==(const RpcRespBody&) const = default;
};
struct HeartbeatBody {
    bool operator==(const HeartbeatBody&) const = default;
};
struct HeartbeatAckBody {
    bool operator==(const HeartbeatAckBody&) const = default;
};

// Variant index + 1 == MessageKind value.
using MessageBody =
    std::variant<MigrationCreateReqBody, MigrationCreateRespBody, RouteUpdateReqBody,
                 RouteUpdateRespBody, StateTransferReqBody, StateTransferRespBody,
                 DestroyTargetBody, ReplicationDataBody, RecoverRouteReqBody,
                 RecoverRouteRespBody, RpcBody, RpcRespBody, HeartbeatBody, HeartbeatAckBody>;

// Typed control envelope exchanged between runtimes. The correlation id of a
// response always equals the id of its request.
struct ActorMessage {
    RuntimeId src = 0;
    RuntimeId dst = 0;
    std::optional<FlowKey> key;
    std::uint64_t correlation_id = 0;
    MessageBody body;

    MessageKind kind() const { return static_cast<MessageKind>(body.index() + 1); }

    bool operator==(const ActorMessage&) const = default;
};

template <typename Body>
ActorMessage make_message(RuntimeId src, RuntimeId dst, std::uint64_t corr, Body body) {
    return ActorMessage{src, dst, std::nullopt, corr, MessageBody{std::move(body)}};
}

template <typename Body>
ActorMessage make_message(RuntimeId src, RuntimeId dst, const FlowKey& key, std::uint64_t corr,
                          Body body) {
    return ActorMessage{src, dst, key, corr, MessageBody{std::move(body)}};
}

// ---------------------------------------------------------------------------
// Wire codec
//
// Self-delimiting layout, little-endian throughout (see docs/wire-format.md):
//   u32 total length of everything after the prefix
//   u8  kind tag
//   u64 src, u64 dst, u64 correlation_id
//   u8  key-present flag, then 13 key bytes when present
//   kind-specific body
// Bodies above 64 KiB are refused; fragmentation of large control messages is
// the transport's job, not the codec's.

struct EncodeTooLarge : std::runtime_error {
    explicit EncodeTooLarge(std::size_t size)
        : std::runtime_error("message body of " + std::to_string(size) +
                             " bytes exceeds the 64 KiB cap") {}
};

inline void encode_flow_key(ByteWriter& w, const FlowKey& k) {
    w.u32(k.src_ip);
    w.u32(k.dst_ip);
    w.u8(static_cast<std::uint8_t>(k.proto));
    w.u16(k.src_port);
    w.u16(k.dst_port);
}

inline FlowKey decode_flow_key(ByteReader& r) {
    FlowKey k;
    k.src_ip = r.u32();
    k.dst_ip = r.u32();
    auto proto = r.u8();
    if (proto != static_cast<std::uint8_t>(Proto::Tcp) &&
        proto != static_cast<std::uint8_t>(Proto::Udp))
        throw DecodeError("bad proto " + std::to_string(proto));
    k.proto = static_cast<Proto>(proto);
    k.src_port = r.u16();
    k.dst_port = r.u16();
    return k;
}

inline void encode_packet(ByteWriter& w, const Packet& p) {
    encode_flow_key(w, p.key);
    w.u64(p.gen_seq);
    w.i64(p.ts_created);
    w.u8(p.ts_emitted ? 1 : 0);
    if (p.ts_emitted) w.i64(*p.ts_emitted);
    w.u16(static_cast<std::uint16_t>(p.payload.size()));
    w.raw(p.payload);
}

inline Packet decode_packet(ByteReader& r) {
    Packet p;
    p.key = decode_flow_key(r);
    p.gen_seq = r.u64();
    p.ts_created = r.i64();
    if (r.u8()) p.ts_emitted = r.i64();
    p.payload = r.raw(r.u16());
    return p;
}

inline void encode_bundle(ByteWriter& w, const FlowStateBundle& b) {
    w.str(b.chain_name);
    w.u16(static_cast<std::uint16_t>(b.blobs.size()));
    for (const auto& blob : b.blobs) w.blob(blob);
}

inline FlowStateBundle decode_bundle(ByteReader& r) {
    FlowStateBundle b;
    b.chain_name = r.str();
    std::size_t n = r.u16();
    b.blobs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) b.blobs.push_back(r.blob());
    return b;
}

inline void encode_workload(ByteWriter& w, const WorkloadReport& r) {
    w.u64(r.dropped_packets);
    w.u64(r.throughput_pps);
    w.u64(r.active_flows);
}

inline WorkloadReport decode_workload(ByteReader& r) {
    WorkloadReport out;
    out.dropped_packets = r.u64();
    out.throughput_pps = r.u64();
    out.active_flows = r.u64();
    return out;
}

inline void encode_cluster_cfg(ByteWriter& w, const ClusterConfig& cfg) {
    w.u64(cfg.cluster_id);
    w.u64(cfg.epoch);
    w.u16(static_cast<std::uint16_t>(cfg.members.size()));
    for (const auto& m : cfg.members) {
        w.u64(m.id);
        w.u8(static_cast<std::uint8_t>(m.role));
        w.str(m.control_addr);
        w.str(m.data_addr);
        encode_workload(w, m.workload);
    }
}

inline ClusterConfig decode_cluster_cfg(ByteReader& r) {
    ClusterConfig cfg;
    cfg.cluster_id = r.u64();
    cfg.epoch = r.u64();
    std::size_t n = r.u16();
    cfg.members.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        MemberInfo m;
        m.id = r.u64();
        m.role = static_cast<MemberRole>(r.u8());
        m.control_addr = r.str();
        m.data_addr = r.str();
        m.workload = decode_workload(r);
        cfg.members.push_back(std::move(m));
    }
    return cfg;
}

namespace detail {

inline void encode_rpc_request(ByteWriter& w, const RpcRequest& req) {
    w.u8(static_cast<std::uint8_t>(req.index()));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, PollWorkloadReq>) {
            } else if constexpr (std::is_same_v<T, NotifyClusterCfg>) {
                encode_cluster_cfg(w, v.cfg);
            } else if constexpr (std::is_same_v<T, SetMigrationTarget>) {
                w.u64(v.dst);
                w.u64(v.count);
            } else if constexpr (std::is_same_v<T, SetReplicas>) {
                w.u16(static_cast<std::uint16_t>(v.replicas.size()));
                for (RuntimeId id : v.replicas) w.u64(id);
            } else if constexpr (std::is_same_v<T, RecoverCmd>) {
                w.u64(v.failed);
            }
        },
        req);
}

inline RpcRequest decode_rpc_request(ByteReader& r) {
    switch (r.u8()) {
        case 0: return PollWorkloadReq{};
        case 1: return NotifyClusterCfg{decode_cluster_cfg(r)};
        case 2: {
            SetMigrationTarget t;
            t.dst = r.u64();
            t.count = r.u64();
            return t;
        }
        case 3: {
            SetReplicas s;
            std::size_t n = r.u16();
            s.replicas.reserve(n);
            for (std::size_t i = 0; i < n; ++i) s.replicas.push_back(r.u64());
            return s;
        }
        case 4: return RecoverCmd{r.u64()};
        default: throw DecodeError("bad rpc request tag");
    }
}

inline void encode_rpc_response(ByteWriter& w, const RpcResponse& resp) {
    w.u8(static_cast<std::uint8_t>(resp.index()));
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, RpcAck>) {
                w.u8(v.ok ? 1 : 0);
                w.u64(v.value);
                w.str(v.info);
            } else if constexpr (std::is_same_v<T, WorkloadResp>) {
                encode_workload(w, v.report);
            }
        },
        resp);
}

inline RpcResponse decode_rpc_response(ByteReader& r) {
    switch (r.u8()) {
        case 0: {
            RpcAck a;
            a.ok = r.u8() != 0;
            a.value = r.u64();
            a.info = r.str();
            return a;
        }
        case 1: return WorkloadResp{decode_workload(r)};
        default: throw DecodeError("bad rpc response tag");
    }
}

inline void encode_body(ByteWriter& w, const MessageBody& body) {
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, MigrationCreateRespBody>) {
                w.u8(v.ok ? 1 : 0);
            } else if constexpr (std::is_same_v<T, RouteUpdateReqBody>) {
                w.u64(v.new_dest);
            } else if constexpr (std::is_same_v<T, RouteUpdateRespBody>) {
                w.u8(v.found ? 1 : 0);
            } else if constexpr (std::is_same_v<T, StateTransferReqBody>) {
                encode_bundle(w, v.states);
            } else if constexpr (std::is_same_v<T, StateTransferRespBody>) {
                w.u8(v.ok ? 1 : 0);
            } else if constexpr (std::is_same_v<T, ReplicationDataBody>) {
                encode_packet(w, v.pkt);
                encode_bundle(w, v.states);
            } else if constexpr (std::is_same_v<T, RecoverRouteRespBody>) {
                w.u8(v.existed ? 1 : 0);
            } else if constexpr (std::is_same_v<T, RpcBody>) {
                encode_rpc_request(w, v.req);
            } else if constexpr (std::is_same_v<T, RpcRespBody>) {
                encode_rpc_response(w, v.resp);
            }
            // Remaining kinds carry empty bodies.
        },
        body);
}

inline MessageBody decode_body(MessageKind kind, ByteReader& r) {
    switch (kind) {
        case MessageKind::MigrationCreateReq: return MigrationCreateReqBody{};
        case MessageKind::MigrationCreateResp: return MigrationCreateRespBody{r.u8() != 0};
        case MessageKind::RouteUpdateReq: return RouteUpdateReqBody{r.u64()};
        case MessageKind::RouteUpdateResp: return RouteUpdateRespBody{r.u8() != 0};
        case MessageKind::StateTransferReq: return StateTransferReqBody{decode_bundle(r)};
        case MessageKind::StateTransferResp: return StateTransferRespBody{r.u8() != 0};
        case MessageKind::DestroyTarget: return DestroyTargetBody{};
        case MessageKind::ReplicationData: {
            ReplicationDataBody b;
            b.pkt = decode_packet(r);
            b.states = decode_bundle(r);
            return b;
        }
        case MessageKind::RecoverRouteReq: return RecoverRouteReqBody{};
        case MessageKind::RecoverRouteResp: return RecoverRouteRespBody{r.u8() != 0};
        case MessageKind::Rpc: return RpcBody{decode_rpc_request(r)};
        case MessageKind::RpcResp: return RpcRespBody{decode_rpc_response(r)};
        case MessageKind::Heartbeat: return HeartbeatBody{};
        case MessageKind::HeartbeatAck: return HeartbeatAckBody{};
    }
    throw DecodeError("bad message kind");
}

}  // namespace detail

inline Bytes encode_message(const ActorMessage& msg) {
    ByteWriter body;
    detail::encode_body(body, msg.body);
    if (body.size() > kMaxMessageBody) throw EncodeTooLarge(body.size());

    ByteWriter w(body.size() + 48);
    w.u32(0);  // patched below
    w.u8(static_cast<std::uint8_t>(msg.kind()));
    w.u64(msg.src);
    w.u64(msg.dst);
    w.u64(msg.correlation_id);
    w.u8(msg.key ? 1 : 0);
    if (msg.key) encode_flow_key(w, *msg.key);
    w.raw(body.bytes());
    w.patch_u32(0, static_cast<std::uint32_t>(w.size() - 4));
    return w.take();
}

// Decodes one message, returning it plus the bytes consumed.
inline std::pair<ActorMessage, std::size_t> decode_message_prefix(BytesView bytes) {
    ByteReader outer(bytes);
    std::size_t len = outer.u32();
    if (outer.remaining() < len) throw DecodeError("truncated message");

    ByteReader r(bytes.subspan(4, len));
    ActorMessage msg;
    auto kind_tag = r.u8();
    if (kind_tag < 1 || kind_tag > 14) throw DecodeError("bad kind tag");
    auto kind = static_cast<MessageKind>(kind_tag);
    msg.src = r.u64();
    msg.dst = r.u64();
    msg.correlation_id = r.u64();
    if (r.u8()) msg.key = decode_flow_key(r);
    msg.body = detail::decode_body(kind, r);
    if (!r.done()) throw DecodeError("trailing bytes in message");
    return {std::move(msg), 4 + len};
}

inline ActorMessage decode_message(BytesView bytes) {
    auto [msg, used] = decode_message_prefix(bytes);
    if (used != bytes.size()) throw DecodeError("trailing bytes after message");
    return msg;
}

}  // namespace flowactor
