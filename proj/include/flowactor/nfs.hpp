#pragma once

#include <algorithm>
#include <map>
#include <set>

#include "flowactor/aho_corasick.hpp"
#include "flowactor/check.hpp"
#include "flowactor/nf.hpp"

namespace flowactor {

// Payload layout convention owned by the traffic generator:
//   [0,8)   generation sequence number (opaque to NFs)
//   [8,12)  NAT-rewritable source ip
//   [12,14) NAT-rewritable source port
//   [14,18) LB-rewritable server ip
//   [18,20) LB-rewritable server port
//   [20,..) arbitrary body (what the IPS hunts through, along with the rest)
// NFs that rewrite skip payloads too short for their region but still update
// state, so truncated packets cannot desynchronize flow state.
constexpr std::size_t kNatRewriteEnd = 14;
constexpr std::size_t kLbRewriteEnd = 20;
// Everything before this offset plays the role of packet headers; deep
// inspection starts here so header bytes never interleave into the scanned
// application stream.
constexpr std::size_t kPayloadHeaderBytes = 20;

// ---------------------------------------------------------------------------
// Firewall: stateless ACL filter, stateful per-flow counters.

struct AclRule {
    std::optional<std::uint32_t> src_ip;
    std::optional<std::uint32_t> dst_ip;
    std::optional<Proto> proto;
    std::optional<std::uint16_t> src_port;
    std::optional<std::uint16_t> dst_port;
    Action action = Action::Drop;

    bool operator==(const AclRule&) const = default;

    bool matches(const FlowKey& k) const {
        return (!src_ip || *src_ip == k.src_ip) && (!dst_ip || *dst_ip == k.dst_ip) &&
               (!proto || *proto == k.proto) && (!src_port || *src_port == k.src_port) &&
               (!dst_port || *dst_port == k.dst_port);
    }
};

struct FirewallShared : SharedState {
    std::vector<AclRule> acl;
};

struct FirewallFlow : FlowState {
    std::uint64_t pkt_count = 0;
    std::uint64_t byte_count = 0;
};

class FirewallNf : public Nf {
public:
    explicit FirewallNf(std::vector<AclRule> acl, Action default_action = Action::Forward)
        : acl_(std::move(acl)), default_action_(default_action) {}

    std::string name() const override { return "firewall"; }

    std::unique_ptr<SharedState> allocate_shared_state() const override {
        auto ss = std::make_unique<FirewallShared>();
        ss->acl = acl_;
        return ss;
    }

    std::unique_ptr<FlowState> allocate_new_fs() const override {
        return std::make_unique<FirewallFlow>();
    }

    Verdict process_pkt(const Packet& pkt, FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<FirewallFlow&>(fs);
        f.pkt_count += 1;
        f.byte_count += pkt.payload.size();
        for (const AclRule& rule : static_cast<FirewallShared&>(ss).acl)
            if (rule.matches(pkt.key))
                return rule.action == Action::Drop ? Verdict::drop() : Verdict::forward();
        return default_action_ == Action::Drop ? Verdict::drop() : Verdict::forward();
    }

    Bytes serialize_fs(const FlowState& fs) const override {
        const auto& f = static_cast<const FirewallFlow&>(fs);
        ByteWriter w;
        w.u64(f.pkt_count);
        w.u64(f.byte_count);
        return w.take();
    }

    std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const override {
        ByteReader r(bytes);
        auto f = std::make_unique<FirewallFlow>();
        f->pkt_count = r.u64();
        f->byte_count = r.u64();
        return f;
    }

private:
    std::vector<AclRule> acl_;
    Action default_action_;
};

// ---------------------------------------------------------------------------
// Intrusion prevention: shared pattern automaton, per-flow scan position.
// A signature hit drops the packet and latches the whole flow to Drop.

struct IpsShared : SharedState {
    AcAutomaton automaton;
};

struct IpsFlow : FlowState {
    std::uint32_t node = AcAutomaton::kRoot;
    bool blocked = false;
};

class IpsNf : public Nf {
public:
    explicit IpsNf(std::vector<Bytes> signatures) : signatures_(std::move(signatures)) {
        // Fail at configuration time, not at first runtime boot.
        AcAutomaton::build(signatures_);
    }

    std::string name() const override { return "ips"; }

    std::unique_ptr<SharedState> allocate_shared_state() const override {
        auto ss = std::make_unique<IpsShared>();
        ss->automaton = AcAutomaton::build(signatures_);
        return ss;
    }

    std::unique_ptr<FlowState> allocate_new_fs() const override {
        return std::make_unique<IpsFlow>();
    }

    Verdict process_pkt(const Packet& pkt, FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<IpsFlow&>(fs);
        if (f.blocked) return Verdict::drop();
        const auto& automaton = static_cast<IpsShared&>(ss).automaton;
        std::size_t begin = std::min(kPayloadHeaderBytes, pkt.payload.size());
        for (std::size_t i = begin; i < pkt.payload.size(); ++i) {
            f.node = automaton.step(f.node, pkt.payload[i]);
            if (!automaton.matches(f.node).empty()) {
                f.blocked = true;
                return Verdict::drop();
            }
        }
        return Verdict::forward();
    }

    Bytes serialize_fs(const FlowState& fs) const override {
        const auto& f = static_cast<const IpsFlow&>(fs);
        ByteWriter w;
        w.u32(f.node);
        w.u8(f.blocked ? 1 : 0);
        return w.take();
    }

    std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const override {
        ByteReader r(bytes);
        auto f = std::make_unique<IpsFlow>();
        f->node = r.u32();
        f->blocked = r.u8() != 0;
        return f;
    }

private:
    std::vector<Bytes> signatures_;
};

// ---------------------------------------------------------------------------
// Load balancer: pick the least-loaded server on the first packet, stick with
// it, keep the shared workload counters exact across expiry and migration.

struct ServerAddr {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;
    bool operator==(const ServerAddr&) const = default;
};

struct LbShared : SharedState {
    struct Server {
        ServerAddr addr;
        std::uint64_t counter = 0;
    };
    std::vector<Server> servers;
};

struct LbFlow : FlowState {
    static constexpr std::uint16_t kNone = 0xffff;
    std::uint16_t server = kNone;

    bool selected() const { return server != kNone; }
};

class LbNf : public Nf {
public:
    explicit LbNf(std::vector<ServerAddr> servers) : servers_(std::move(servers)) {
        if (servers_.empty()) throw ConfigError("load balancer needs at least one server");
        if (servers_.size() >= LbFlow::kNone) throw ConfigError("too many servers");
    }

    std::string name() const override { return "lb"; }

    std::unique_ptr<SharedState> allocate_shared_state() const override {
        auto ss = std::make_unique<LbShared>();
        for (const auto& addr : servers_) ss->servers.push_back({addr, 0});
        return ss;
    }

    std::unique_ptr<FlowState> allocate_new_fs() const override {
        return std::make_unique<LbFlow>();
    }

    Verdict process_pkt(const Packet& pkt, FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<LbFlow&>(fs);
        auto& table = static_cast<LbShared&>(ss).servers;
        if (!f.selected()) {
            // Argmin over counters; ties go to the lowest index so runs are
            // reproducible.
            std::size_t best = 0;
            for (std::size_t i = 1; i < table.size(); ++i)
                if (table[i].counter < table[best].counter) best = i;
            f.server = static_cast<std::uint16_t>(best);
            table[best].counter += 1;
        }
        const ServerAddr& chosen = table[f.server].addr;
        if (pkt.payload.size() < kLbRewriteEnd) return Verdict::forward();
        Bytes payload = pkt.payload;
        ByteWriter w;
        w.u32(chosen.ip);
        w.u16(chosen.port);
        std::copy(w.bytes().begin(), w.bytes().end(), payload.begin() + 14);
        return Verdict::forward_with(std::move(payload));
    }

    void flow_expires(FlowState& fs, SharedState& ss) const override { release(fs, ss); }
    void flow_migrate_out(FlowState& fs, SharedState& ss) const override { release(fs, ss); }
    void flow_migrate_in(FlowState& fs, SharedState& ss) const override { acquire(fs, ss); }
    void flow_recover(FlowState& fs, SharedState& ss) const override { acquire(fs, ss); }

    Bytes serialize_fs(const FlowState& fs) const override {
        ByteWriter w;
        w.u16(static_cast<const LbFlow&>(fs).server);
        return w.take();
    }

    std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const override {
        ByteReader r(bytes);
        auto f = std::make_unique<LbFlow>();
        f->server = r.u16();
        return f;
    }

private:
    void release(FlowState& fs, SharedState& ss) const {
        auto& f = static_cast<LbFlow&>(fs);
        if (!f.selected()) return;
        auto& server = static_cast<LbShared&>(ss).servers.at(f.server);
        FLOWACTOR_CHECK(server.counter > 0, "lb counter underflow");
        server.counter -= 1;
    }

    void acquire(FlowState& fs, SharedState& ss) const {
        auto& f = static_cast<LbFlow&>(fs);
        if (!f.selected()) return;
        static_cast<LbShared&>(ss).servers.at(f.server).counter += 1;
    }

    std::vector<ServerAddr> servers_;
};

// ---------------------------------------------------------------------------
// NAT: lowest-free (ip, port) allocation from a shared pool, stable source
// rewrite for the flow's lifetime. Migration hands the allocated address to
// the target pool, so the pool tracks how many addresses it currently owns.

struct NatAddr {
    std::uint32_t ip = 0;
    std::uint16_t port = 0;
    auto operator<=>(const NatAddr&) const = default;
};

struct NatShared : SharedState {
    std::set<NatAddr> free;
    std::map<FlowKey, NatAddr> used;
    // |free| + |used| == owned at every instant. Starts at pool capacity;
    // migrate_out shrinks it, migrate_in/recover grow it.
    std::uint64_t owned = 0;
};

struct NatFlow : FlowState {
    std::optional<NatAddr> addr;
    FlowKey key;  // remembered so expiry can release without a key argument
};

struct NatPoolConfig {
    std::uint32_t base_ip = 0;
    std::uint32_t ip_count = 1;
    std::uint16_t port_lo = 1;
    std::uint16_t port_hi = 1;
};

class NatNf : public Nf {
public:
    explicit NatNf(NatPoolConfig pool) : pool_(pool) {
        if (pool_.ip_count == 0 || pool_.port_hi < pool_.port_lo)
            throw ConfigError("empty NAT pool");
    }

    std::string name() const override { return "nat"; }

    std::unique_ptr<SharedState> allocate_shared_state() const override {
        auto ss = std::make_unique<NatShared>();
        for (std::uint32_t i = 0; i < pool_.ip_count; ++i)
            for (std::uint32_t p = pool_.port_lo; p <= pool_.port_hi; ++p)
                ss->free.insert({pool_.base_ip + i, static_cast<std::uint16_t>(p)});
        ss->owned = ss->free.size();
        return ss;
    }

    std::unique_ptr<FlowState> allocate_new_fs() const override {
        return std::make_unique<NatFlow>();
    }

    Verdict process_pkt(const Packet& pkt, FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<NatFlow&>(fs);
        auto& pool = static_cast<NatShared&>(ss);
        if (!f.addr) {
            // Unallocated flows retry on every packet, so an address released
            // by an expiry becomes available to waiting flows.
            if (pool.free.empty()) return Verdict::drop();
            auto it = pool.free.begin();
            f.addr = *it;
            f.key = pkt.key;
            FLOWACTOR_CHECK(pool.used.emplace(pkt.key, *it).second, "nat double allocation");
            pool.free.erase(it);
        }
        if (pkt.payload.size() < kNatRewriteEnd) return Verdict::forward();
        Bytes payload = pkt.payload;
        ByteWriter w;
        w.u32(f.addr->ip);
        w.u16(f.addr->port);
        std::copy(w.bytes().begin(), w.bytes().end(), payload.begin() + 8);
        return Verdict::forward_with(std::move(payload));
    }

    void flow_expires(FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<NatFlow&>(fs);
        if (!f.addr) return;
        auto& pool = static_cast<NatShared&>(ss);
        FLOWACTOR_CHECK(pool.used.erase(f.key) == 1, "nat expiry of unknown mapping");
        pool.free.insert(*f.addr);
    }

    void flow_migrate_out(FlowState& fs, SharedState& ss) const override {
        auto& f = static_cast<NatFlow&>(fs);
        if (!f.addr) return;
        auto& pool = static_cast<NatShared&>(ss);
        FLOWACTOR_CHECK(pool.used.erase(f.key) == 1, "nat migrate_out of unknown mapping");
        FLOWACTOR_CHECK(pool.owned > 0, "nat pool ownership underflow");
        pool.owned -= 1;
    }

    void flow_migrate_in(FlowState& fs, SharedState& ss) const override { adopt(fs, ss); }
    void flow_recover(FlowState& fs, SharedState& ss) const override { adopt(fs, ss); }

    Bytes serialize_fs(const FlowState& fs) const override {
        const auto& f = static_cast<const NatFlow&>(fs);
        ByteWriter w;
        w.u8(f.addr ? 1 : 0);
        if (f.addr) {
            w.u32(f.addr->ip);
            w.u16(f.addr->port);
            encode_flow_key(w, f.key);
        }
        return w.take();
    }

    std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const override {
        ByteReader r(bytes);
        auto f = std::make_unique<NatFlow>();
        if (r.u8()) {
            NatAddr a;
            a.ip = r.u32();
            a.port = r.u16();
            f->addr = a;
            f->key = decode_flow_key(r);
        }
        return f;
    }

private:
    void adopt(FlowState& fs, SharedState& ss) const {
        auto& f = static_cast<NatFlow&>(fs);
        if (!f.addr) return;
        auto& pool = static_cast<NatShared&>(ss);
        FLOWACTOR_CHECK(pool.used.emplace(f.key, *f.addr).second, "nat double adoption");
        pool.owned += 1;
    }

    NatPoolConfig pool_;
};

// ---------------------------------------------------------------------------
// Forwarder: the virtual switch's table entry expressed as an NF, so routing
// entries ride the same replication and recovery machinery as flow state.

struct NopShared : SharedState {};

struct ForwardState : FlowState {
    RuntimeId dest = 0;
};

class ForwarderNf : public Nf {
public:
    std::string name() const override { return "forward"; }

    std::unique_ptr<SharedState> allocate_shared_state() const override {
        return std::make_unique<NopShared>();
    }

    std::unique_ptr<FlowState> allocate_new_fs() const override {
        return std::make_unique<ForwardState>();
    }

    Verdict process_pkt(const Packet&, FlowState&, SharedState&) const override {
        return Verdict::forward();
    }

    Bytes serialize_fs(const FlowState& fs) const override {
        ByteWriter w;
        w.u64(static_cast<const ForwardState&>(fs).dest);
        return w.take();
    }

    std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const override {
        ByteReader r(bytes);
        auto f = std::make_unique<ForwardState>();
        f->dest = r.u64();
        return f;
    }
};

}  // namespace flowactor
