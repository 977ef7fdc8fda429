#pragma once

#include <unordered_map>
#include <vector>

#include "flowactor/core.hpp"

namespace flowactor {

// Packet drop buckets. Every generated packet ends the run either delivered
// or in exactly one bucket or physically in flight; the conservation checker
// holds the system to that.
enum class DropKind : std::uint8_t {
    Nf,        // an NF verdict said Drop
    Protocol,  // migration machinery: post-transfer discard, buffer overflow, abort cleanup
    Overload,  // actor pool exhausted / no live runtime to assign
    Failure,   // destroyed with a killed runtime or addressed to a dead one
};

struct EmissionRecord {
    FlowKey key;
    std::uint64_t gen_seq = 0;
    VirtualTime at = 0;
    std::uint64_t ordinal = 0;  // global event order, breaks same-instant ties
    RuntimeId emitter = 0;
    RuntimeId processed_by = 0;  // differs from emitter when a replica emitted
};

// Shared by every component of one simulation; single-threaded by design
// (benchmark mode keeps per-thread copies and merges).
class Metrics {
public:
    std::uint64_t generated = 0;
    std::uint64_t delivered = 0;
    std::uint64_t nf_drops = 0;
    std::uint64_t protocol_drops = 0;
    std::uint64_t overload_drops = 0;
    std::uint64_t failure_drops = 0;

    // Packets inside ReplicationData messages: sent by a source but not yet
    // stored at the replica, keyed by replica runtime.
    std::unordered_map<RuntimeId, std::uint64_t> repl_pending;

    bool record_latency = true;
    std::vector<VirtualTime> latency_samples;

    std::uint64_t migrations_started = 0;
    std::uint64_t migrations_done = 0;
    std::uint64_t migrations_aborted = 0;
    std::uint64_t replication_degraded = 0;
    std::uint64_t recovered_flows = 0;
    std::uint64_t liaison_errors = 0;

    // Every coordinator-originated message (heartbeats, RPCs, cfg notifies),
    // timestamped so episode windows can be audited.
    std::vector<VirtualTime> coordinator_sends;

    // Output-commit instrumentation (optional; heavyweight).
    bool record_emissions = false;
    std::uint64_t next_ordinal = 1;
    std::vector<EmissionRecord> emissions;
    std::unordered_map<std::uint64_t, std::uint64_t> replica_stored_ordinal;  // (key,seq)

    // Per-packet post-chain state digests (optional; prefix-equivalence oracle).
    bool record_state_digests = false;
    std::unordered_map<std::uint64_t, std::uint64_t> state_digests;

    static std::uint64_t packet_id(const FlowKey& k, std::uint64_t gen_seq) {
        std::uint64_t h = FlowKeyHash{}(k);
        return fnv1a_u64(gen_seq, h);
    }

    void drop(DropKind kind, std::uint64_t n = 1) {
        switch (kind) {
            case DropKind::Nf: nf_drops += n; break;
            case DropKind::Protocol: protocol_drops += n; break;
            case DropKind::Overload: overload_drops += n; break;
            case DropKind::Failure: failure_drops += n; break;
        }
    }

    std::uint64_t repl_pending_total() const {
        std::uint64_t n = 0;
        for (const auto& [rt, c] : repl_pending) n += c;
        return n;
    }

    std::uint64_t accounted() const {
        return delivered + nf_drops + protocol_drops + overload_drops + failure_drops;
    }

    // Rolling event-trace hash: two runs are behaviorally identical iff their
    // hashes agree. Everything observable folds in, in execution order.
    std::uint64_t trace = 14695981039346656037ull;
    void trace_event(std::uint64_t code, std::uint64_t a = 0, std::uint64_t b = 0,
                     std::int64_t t = 0) {
        trace = fnv1a_u64(code, trace);
        trace = fnv1a_u64(a, trace);
        trace = fnv1a_u64(b, trace);
        trace = fnv1a_u64(static_cast<std::uint64_t>(t), trace);
    }
};

// Trace event codes (arbitrary but stable).
namespace trace_code {
constexpr std::uint64_t generated = 1;
constexpr std::uint64_t delivered = 2;
constexpr std::uint64_t dropped = 3;
constexpr std::uint64_t msg_sent = 4;
constexpr std::uint64_t migration_done = 5;
constexpr std::uint64_t migration_aborted = 6;
constexpr std::uint64_t flow_recovered = 7;
constexpr std::uint64_t member_failed = 8;
constexpr std::uint64_t epoch_bumped = 9;
constexpr std::uint64_t actor_expired = 10;
}  // namespace trace_code

}  // namespace flowactor
