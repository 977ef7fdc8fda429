#pragma once

#include <chrono>
#include <thread>

#include "flowactor/scenario.hpp"

namespace flowactor {

// ---------------------------------------------------------------------------
// Scenario execution: builds the cluster a scenario describes, scripts the
// traffic, faults and operator actions, and evaluates the scenario's checks.

struct RunResult {
    bool ok = true;                      // all checks and invariants held
    std::vector<std::string> failures;   // one line per violated check
    nlohmann::json metrics;              // summary counters for --out
    nlohmann::json state;                // final flow state for --dump-state
    std::string coordinator_ndjson;      // empty when no coordinator ran
};

namespace detail {

inline std::string key_str(const FlowKey& k) {
    auto ip = [](std::uint32_t v) {
        return std::to_string(v >> 24) + "." + std::to_string((v >> 16) & 0xff) + "." +
               std::to_string((v >> 8) & 0xff) + "." + std::to_string(v & 0xff);
    };
    return std::string(k.proto == Proto::Udp ? "udp " : "tcp ") + ip(k.src_ip) + ":" +
           std::to_string(k.src_port) + " > " + ip(k.dst_ip) + ":" + std::to_string(k.dst_port);
}

inline std::string hex(BytesView v) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(v.size() * 2);
    for (std::uint8_t b : v) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0xf]);
    }
    return out;
}

// NF factory. NAT pools are partitioned per runtime so address ownership
// stays disjoint when flows move between runtimes.
inline ServiceChain chain_for(const Scenario& sc, RuntimeId id) {
    std::vector<std::shared_ptr<const Nf>> nfs;
    for (const std::string& n : sc.nfs) {
        if (n == "firewall") {
            nfs.push_back(std::make_shared<FirewallNf>(sc.acl, sc.fw_default));
        } else if (n == "ips") {
            nfs.push_back(std::make_shared<IpsNf>(sc.signatures));
        } else if (n == "nat") {
            NatPoolConfig pool;
            pool.base_ip = sc.nat_base + static_cast<std::uint32_t>(id) * sc.nat_ips;
            pool.ip_count = sc.nat_ips;
            pool.port_lo = sc.nat_port_lo;
            pool.port_hi = sc.nat_port_hi;
            nfs.push_back(std::make_shared<NatNf>(pool));
        } else if (n == "lb") {
            nfs.push_back(std::make_shared<LbNf>(sc.servers));
        }
    }
    return make_chain(sc.chain_name, std::move(nfs));
}

inline ServiceChain switch_chain() {
    return make_chain("vs", {std::make_shared<ForwarderNf>()});
}

inline std::uint64_t percentile(std::vector<VirtualTime> v, double p) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    std::size_t i = static_cast<std::size_t>(p * static_cast<double>(v.size() - 1));
    return static_cast<std::uint64_t>(v[i]);
}

// Store-before-emit audit over the recorded emission stream: whenever a
// replica emitted for its source, the backing state must have been stored
// at a strictly earlier global ordinal.
inline std::uint64_t commit_violations(const Metrics& m) {
    std::uint64_t bad = 0;
    for (const EmissionRecord& e : m.emissions) {
        if (e.emitter == e.processed_by) continue;
        auto it = m.replica_stored_ordinal.find(Metrics::packet_id(e.key, e.gen_seq));
        if (it == m.replica_stored_ordinal.end() || it->second >= e.ordinal) bad += 1;
    }
    return bad;
}

}  // namespace detail

// Final flow state across the cluster: per-flow serialized NF state, keyed by
// flow, plus the switch's routing view. Comparable across runs; the flow map
// is location-independent so a migrated run can match an unmigrated one.
inline nlohmann::json dump_state(Sim& sim, const Scenario& sc) {
    nlohmann::json flows = nlohmann::json::object();
    nlohmann::json routes = nlohmann::json::object();
    for (const auto& [id, r] : sim.runtimes()) {
        if (sim.dead(id)) continue;
        for (const auto& [seq, key] : r->flows_by_age()) {
            const FlowActor* a = r->find(key);
            if (!a || (a->mode != ActorMode::Normal && a->mode != ActorMode::MigrationSource))
                continue;
            if (r->role() == MemberRole::VirtualSwitch) {
                routes[detail::key_str(key)] =
                    static_cast<const ForwardState&>(*a->states.at(0)).dest;
                continue;
            }
            FlowStateBundle b = r->snapshot(key);
            nlohmann::json blobs = nlohmann::json::array();
            for (const Bytes& blob : b.blobs) blobs.push_back(detail::hex(blob));
            flows[detail::key_str(key)] = {{"chain", b.chain_name}, {"at", id}, {"blobs", blobs}};
        }
    }
    return {{"scenario", sc.name}, {"seed", sc.seed}, {"t", sim.now()},
            {"flows", flows},      {"switch", routes}};
}

// Diff of two state dumps. Flow state must match byte-exact; the `at`
// placement and switch routes legitimately differ between runs and are
// ignored.
struct CompareResult {
    bool equal = true;
    std::vector<std::string> diffs;
};

inline CompareResult compare_dumps(const nlohmann::json& a, const nlohmann::json& b) {
    CompareResult res;
    auto note = [&](const std::string& s) {
        res.equal = false;
        if (res.diffs.size() < 50) res.diffs.push_back(s);
    };
    const auto& fa = a.at("flows");
    const auto& fb = b.at("flows");
    for (auto it = fa.begin(); it != fa.end(); ++it) {
        if (!fb.contains(it.key())) {
            note("only in first: " + it.key());
            continue;
        }
        const auto& va = it.value();
        const auto& vb = fb.at(it.key());
        if (va.at("chain") != vb.at("chain") || va.at("blobs") != vb.at("blobs"))
            note("state differs: " + it.key());
    }
    for (auto it = fb.begin(); it != fb.end(); ++it)
        if (!fa.contains(it.key())) note("only in second: " + it.key());
    return res;
}

// ---------------------------------------------------------------------------
// Deterministic mode.

class ScenarioRun {
public:
    explicit ScenarioRun(Scenario sc, std::uint64_t seed_override = 0)
        : sc_(std::move(sc)), sim_(seed_override ? seed_override : sc_.seed, sc_.link) {
        if (seed_override) sc_.seed = seed_override;
        build_cluster();
    }

    Sim& sim() { return sim_; }
    const Scenario& scenario() const { return sc_; }
    Coordinator* coordinator() { return coord_ ? coord_.get() : nullptr; }

    RunResult run() {
        RunResult res;
        TrafficGen gen(sc_.traffic, sc_.seed);
        gen.skip_to(sc_.traffic_start);
        std::size_t op_i = 0;
        try {
            for (;;) {
                while (op_i < sc_.ops.size() && sc_.ops[op_i].at <= sim_.now())
                    apply_op(sc_.ops[op_i++], res);
                if (traffic_on_ && sim_.now() >= sc_.traffic_start &&
                    sim_.now() < sc_.traffic_stop)
                    gen.pump(sim_.now(), [&](Packet&& p) { offer(std::move(p)); });
                if (sim_.now() >= sc_.duration) break;
                VirtualTime target = sc_.duration;
                if (op_i < sc_.ops.size()) target = std::min(target, sc_.ops[op_i].at);
                if (traffic_on_ && gen.next_due() < sc_.traffic_stop)
                    target = std::min(target, std::max(gen.next_due(), sc_.traffic_start));
                sim_.run_until(target);
            }
        } catch (const InvariantError& e) {
            res.ok = false;
            res.failures.push_back(std::string("invariant: ") + e.what());
        }
        finish(gen, res);
        return res;
    }

private:
    void build_cluster() {
        sim_.metrics().record_emissions = sc_.check_output_commit;
        // Large scenario runs track counters, not per-packet vectors.
        bool heavy = sc_.traffic.rate_pps * (sc_.duration / kSecond + 1) > 2'000'000;
        sim_.keep_emitted = !heavy;
        sim_.metrics().record_latency = !heavy;

        RuntimeConfig sw_cfg = sc_.runtime_cfg;
        sw_cfg.pool_capacity = std::max<std::uint64_t>(sw_cfg.pool_capacity, 1u << 20);
        std::vector<MemberInfo> members;
        auto member = [](RuntimeId id, MemberRole role) {
            return MemberInfo{id, role, "m" + std::to_string(id) + ".ctl",
                              "m" + std::to_string(id) + ".data", {}};
        };
        sim_.add_runtime(sc_.vswitch, MemberRole::VirtualSwitch, detail::switch_chain(), sw_cfg);
        members.push_back(member(sc_.vswitch, MemberRole::VirtualSwitch));
        if (sc_.standby_vswitch) {
            sim_.add_runtime(*sc_.standby_vswitch, MemberRole::VirtualSwitch,
                             detail::switch_chain(), sw_cfg);
            members.push_back(member(*sc_.standby_vswitch, MemberRole::VirtualSwitch));
        }
        for (RuntimeId id : sc_.runtimes) {
            sim_.add_runtime(id, MemberRole::Runtime, detail::chain_for(sc_, id),
                             sc_.runtime_cfg);
            members.push_back(member(id, MemberRole::Runtime));
        }

        if (sc_.coordinator) {
            coord_ = std::make_unique<Coordinator>(sc_.coordinator_cfg, &sim_.metrics(),
                                                   sim_.frame_sink());
            sim_.add_node(coord_.get());
            auto pool = std::make_shared<std::vector<RuntimeId>>(sc_.launchable);
            coord_->set_launch_fn([this, pool](VirtualTime) -> RuntimeId {
                if (pool->empty()) return 0;
                RuntimeId id = pool->front();
                pool->erase(pool->begin());
                sim_.add_runtime(id, MemberRole::Runtime, detail::chain_for(sc_, id),
                                 sc_.runtime_cfg);
                return id;
            });
            coord_->deploy_cluster(members, sc_.replicas, sim_.now());
        } else {
            // No coordinator: install the config and replica wiring directly.
            ClusterConfig cfg;
            cfg.cluster_id = 1;
            cfg.epoch = 1;
            cfg.members = members;
            for (const auto& [id, r] : sim_.runtimes()) {
                r->adopt_cluster(cfg);
                if (auto it = sc_.replicas.find(id); it != sc_.replicas.end())
                    r->set_replicas(it->second);
            }
        }
        if (sc_.check_conservation)
            sim_.add_check([this](VirtualTime) { sim_.check_conservation(); });
    }

    void offer(Packet&& p) {
        // Ingress follows the live switch: when the primary dies and a standby
        // holds the replicated routes, new packets go there.
        if (sim_.dead(ingress_) && sc_.standby_vswitch && !sim_.dead(*sc_.standby_vswitch))
            ingress_ = *sc_.standby_vswitch;
        sim_.offer_packet(ingress_, std::move(p));
    }

    void apply_op(const Scenario::Op& op, RunResult& res) {
        auto id = [&](std::size_t i) { return static_cast<RuntimeId>(std::stoull(op.args[i])); };
        try {
            if (op.verb == "kill") {
                sim_.kill(id(0));
            } else if (op.verb == "migrate") {
                std::uint64_t n = std::stoull(op.args[2]);
                sim_.runtime(id(0)).start_migrations(id(1), n, sim_.now());
            } else if (op.verb == "silence") {
                sim_.fabric().silence(id(0), id(1));
                sim_.fabric().silence(id(1), id(0));
            } else if (op.verb == "restore") {
                sim_.fabric().restore(id(0), id(1));
                sim_.fabric().restore(id(1), id(0));
            } else if (op.verb == "recover") {
                sim_.runtime(id(0)).recover_from(id(1), sim_.now());
            } else if (op.verb == "stop_traffic") {
                traffic_on_ = false;
            }
        } catch (const std::exception& e) {
            res.ok = false;
            res.failures.push_back("op '" + op.verb + "' at t=" + std::to_string(op.at) +
                                   " failed: " + e.what());
        }
    }

    std::map<std::string, std::uint64_t> metric_table(const TrafficGen& gen) {
        Metrics& m = sim_.metrics();
        std::map<std::string, std::uint64_t> t;
        t["generated"] = m.generated;
        t["delivered"] = m.delivered;
        t["nf_drops"] = m.nf_drops;
        t["protocol_drops"] = m.protocol_drops;
        t["overload_drops"] = m.overload_drops;
        t["failure_drops"] = m.failure_drops;
        t["fabric_lost"] = sim_.fabric().dataplane_lost();
        t["frames_lost"] = sim_.fabric().frames_lost();
        t["in_flight"] = sim_.packets_in_flight();
        t["migrations_started"] = m.migrations_started;
        t["migrations_done"] = m.migrations_done;
        t["migrations_aborted"] = m.migrations_aborted;
        t["replication_degraded"] = m.replication_degraded;
        t["recovered_flows"] = m.recovered_flows;
        t["liaison_errors"] = m.liaison_errors;
        t["stray_frames"] = sim_.stray_frames();
        t["commit_violations"] = sc_.check_output_commit ? detail::commit_violations(m) : 0;
        t["offered"] = gen.emitted();
        std::uint64_t live = 0;
        for (const auto& [id, r] : sim_.runtimes())
            if (!sim_.dead(id) && r->role() == MemberRole::Runtime)
                live += r->live_processing_flows();
        t["live_flows"] = live;
        t["epoch"] = coord_ ? coord_->cluster().epoch : 1;
        t["coordinator_sends"] = m.coordinator_sends.size();
        return t;
    }

    void finish(const TrafficGen& gen, RunResult& res) {
        auto table = metric_table(gen);
        if (sc_.check_output_commit && table["commit_violations"] != 0) {
            res.ok = false;
            res.failures.push_back("output commit violated " +
                                   std::to_string(table["commit_violations"]) + " times");
        }
        for (const Scenario::Assert& a : sc_.asserts) {
            auto resolve = [&](const std::string& s) -> std::uint64_t {
                if (auto it = table.find(s); it != table.end()) return it->second;
                try {
                    return std::stoull(s);
                } catch (const std::exception&) {
                    throw ScenarioError("line " + std::to_string(a.line) +
                                        ": unknown metric '" + s + "'");
                }
            };
            std::uint64_t lhs = resolve(a.lhs), rhs = resolve(a.rhs);
            bool pass = a.op == "==" ? lhs == rhs
                        : a.op == "!=" ? lhs != rhs
                        : a.op == "<=" ? lhs <= rhs
                        : a.op == ">=" ? lhs >= rhs
                        : a.op == "<"  ? lhs < rhs
                                       : lhs > rhs;
            if (!pass) {
                res.ok = false;
                res.failures.push_back("assert " + a.lhs + " " + a.op + " " + a.rhs +
                                       " failed: " + std::to_string(lhs) + " " + a.op + " " +
                                       std::to_string(rhs));
            }
        }
        res.metrics = {{"scenario", sc_.name},
                       {"mode", "deterministic"},
                       {"seed", sc_.seed},
                       {"t_end", sim_.now()},
                       {"trace", sim_.metrics().trace}};
        for (const auto& [k, v] : table) res.metrics[k] = v;
        if (sim_.metrics().record_latency) {
            res.metrics["latency_p50"] = detail::percentile(sim_.metrics().latency_samples, 0.5);
            res.metrics["latency_p99"] = detail::percentile(sim_.metrics().latency_samples, 0.99);
        }
        res.metrics["checks_passed"] = res.ok;
        if (!res.failures.empty()) res.metrics["failures"] = res.failures;
        res.state = dump_state(sim_, sc_);
        if (coord_) res.coordinator_ndjson = log_to_ndjson(coord_->log());
    }

    Scenario sc_;
    Sim sim_;
    std::unique_ptr<Coordinator> coord_;
    RuntimeId ingress_ = sc_.vswitch;
    bool traffic_on_ = true;
};

inline RunResult run_scenario(const Scenario& sc, std::uint64_t seed_override = 0) {
    return ScenarioRun(sc, seed_override).run();
}

// ---------------------------------------------------------------------------
// Benchmark mode: one OS thread per runtime, each with a private runtime,
// metrics and traffic stream; wall-clock throughput of the chain machinery.
// This path exercises the same Runtime::tick code as the simulator but trades
// the shared fabric for thread-local sinks, so adding runtimes scales with
// available cores.

inline RunResult run_benchmark(const Scenario& sc, std::uint64_t seed_override = 0) {
    std::uint64_t seed = seed_override ? seed_override : sc.seed;
    std::size_t n = std::max<std::size_t>(1, sc.runtimes.size());
    std::uint64_t total_packets = sc.traffic.rate_pps * (sc.duration / kSecond);
    if (total_packets == 0) total_packets = sc.traffic.rate_pps;
    std::uint64_t per_thread = total_packets / n;

    struct Lane {
        std::unique_ptr<Metrics> metrics;
        std::unique_ptr<Runtime> runtime;
        std::uint64_t emitted = 0;
        std::uint64_t offered = 0;
    };
    std::vector<Lane> lanes(n);
    for (std::size_t i = 0; i < n; ++i) {
        Lane& lane = lanes[i];
        lane.metrics = std::make_unique<Metrics>();
        lane.metrics->record_latency = false;
        RuntimeId id = sc.runtimes.empty() ? 1 : sc.runtimes[i];
        lane.runtime = std::make_unique<Runtime>(
            id, MemberRole::Runtime, detail::chain_for(sc, id), sc.runtime_cfg,
            lane.metrics.get(), [](WireFrame&&) {},
            [&lane](Packet&&, RuntimeId, RuntimeId) { lane.emitted += 1; });
    }

    auto t0 = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) {
        threads.emplace_back([&, i] {
            Lane& lane = lanes[i];
            TrafficConfig tc = sc.traffic;
            tc.src_ip_base += static_cast<std::uint32_t>(i) * 0x10000u;
            TrafficGen gen(tc, seed + i);
            VirtualTime now = 0;
            constexpr std::uint64_t kBatch = 256;
            while (lane.offered < per_thread) {
                std::uint64_t want = std::min(kBatch, per_thread - lane.offered);
                now += std::max<VirtualTime>(1, want * (kSecond / tc.rate_pps));
                lane.offered += gen.pump(now, [&](Packet&& p) {
                    lane.metrics->generated += 1;
                    lane.runtime->enqueue_packet(std::move(p));
                });
                lane.runtime->tick(now);
            }
        });
    }
    for (std::thread& t : threads) t.join();
    auto wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::uint64_t offered = 0, emitted = 0, dropped = 0;
    for (Lane& lane : lanes) {
        offered += lane.offered;
        emitted += lane.emitted;
        dropped += lane.metrics->nf_drops + lane.metrics->overload_drops;
    }
    std::uint64_t pps = wall > 0 ? static_cast<std::uint64_t>(emitted / wall) : 0;

    RunResult res;
    std::map<std::string, std::uint64_t> table{{"pps", pps},
                                               {"offered", offered},
                                               {"delivered", emitted},
                                               {"dropped", dropped},
                                               {"runtimes", n},
                                               {"wall_us", static_cast<std::uint64_t>(wall * 1e6)}};
    for (const Scenario::Assert& a : sc.asserts) {
        auto resolve = [&](const std::string& s) -> std::uint64_t {
            if (auto it = table.find(s); it != table.end()) return it->second;
            try {
                return std::stoull(s);
            } catch (const std::exception&) {
                throw ScenarioError("line " + std::to_string(a.line) + ": unknown metric '" + s +
                                    "' in benchmark mode");
            }
        };
        std::uint64_t lhs = resolve(a.lhs), rhs = resolve(a.rhs);
        bool pass = a.op == "==" ? lhs == rhs
                    : a.op == "!=" ? lhs != rhs
                    : a.op == "<=" ? lhs <= rhs
                    : a.op == ">=" ? lhs >= rhs
                    : a.op == "<"  ? lhs < rhs
                                   : lhs > rhs;
        if (!pass) {
            res.ok = false;
            res.failures.push_back("assert " + a.lhs + " " + a.op + " " + a.rhs + " failed: " +
                                   std::to_string(lhs) + " " + a.op + " " + std::to_string(rhs));
        }
    }
    res.metrics = {{"scenario", sc.name}, {"mode", "benchmark"}, {"seed", seed}};
    for (const auto& [k, v] : table) res.metrics[k] = v;
    res.metrics["checks_passed"] = res.ok;
    if (!res.failures.empty()) res.metrics["failures"] = res.failures;
    res.state = nlohmann::json::object();
    return res;
}

}  // namespace flowactor
