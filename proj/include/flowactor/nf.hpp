#pragma once

#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowactor/core.hpp"

namespace flowactor {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-flow state, owned by exactly one flow actor at a time.
struct FlowState {
    virtual ~FlowState() = default;
};

// Per-NF singleton held by the runtime's storage actor. Flow actors borrow it
// for the duration of a single call and must not retain references.
struct SharedState {
    virtual ~SharedState() = default;
};

enum class Action : std::uint8_t { Forward, Drop };

struct Verdict {
    Action action = Action::Forward;
    // Replaces the packet payload for the rest of the chain (and the emitted
    // packet). Never set on Drop.
    std::optional<Bytes> mutated_payload;

    static Verdict forward() { return {}; }
    static Verdict forward_with(Bytes payload) { return {Action::Forward, std::move(payload)}; }
    static Verdict drop() { return {Action::Drop, std::nullopt}; }
};

// One network function: behavior plus the state codec that migration and
// replication rely on. Implementations are pure with respect to everything
// outside (pkt, fs, ss) and are invoked only from their owning runtime.
class Nf {
public:
    virtual ~Nf() = default;

    virtual std::string name() const = 0;

    // Called once per runtime at boot; result is the storage-actor singleton.
    virtual std::unique_ptr<SharedState> allocate_shared_state() const = 0;

    // Called when a flow actor is created for a brand-new flow.
    virtual std::unique_ptr<FlowState> allocate_new_fs() const = 0;

    // Deterministic given (pkt, fs, ss); may mutate fs and ss.
    virtual Verdict process_pkt(const Packet& pkt, FlowState& fs, SharedState& ss) const = 0;

    // Consumes the flow state after exactly one of flow_expires or
    // flow_migrate_out has run; taking ownership makes double-free a type
    // error rather than a runtime bug.
    virtual void deallocate_fs(std::unique_ptr<FlowState> fs) const { fs.reset(); }

    // Expiry: resources held in fs return to ss.
    virtual void flow_expires(FlowState&, SharedState&) const {}

    // Migration: source releases ss-side claims, target acquires them.
    virtual void flow_migrate_out(FlowState&, SharedState&) const {}
    virtual void flow_migrate_in(FlowState&, SharedState&) const {}

    // Failure recovery on a replica promoting a replicated flow state.
    virtual void flow_recover(FlowState&, SharedState&) const {}

    // State codec; must round-trip every state process_pkt can produce.
    virtual Bytes serialize_fs(const FlowState& fs) const = 0;
    virtual std::unique_ptr<FlowState> deserialize_fs(BytesView bytes) const = 0;
};

using NfPtr = std::shared_ptr<const Nf>;

// Ordered NF pipeline a cluster is configured with.
struct ServiceChain {
    std::string name;
    std::vector<NfPtr> nfs;
};

inline ServiceChain make_chain(std::string name, std::vector<NfPtr> nfs) {
    if (nfs.empty()) throw ConfigError("service chain '" + name + "' has no NFs");
    std::set<std::string> seen;
    for (const auto& nf : nfs)
        if (!seen.insert(nf->name()).second)
            throw ConfigError("service chain '" + name + "' repeats NF '" + nf->name() + "'");
    return ServiceChain{std::move(name), std::move(nfs)};
}

}  // namespace flowactor
