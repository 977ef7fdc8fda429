// Acceptance gate: ten end-to-end guarantees, each printing one PASS/FAIL
// line. Every tolerance is pinned here as a named constant; everything else
// is exact equality.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>

#include "flowactor/harness.hpp"

using namespace flowactor;

namespace {

// Pinned tolerances. All other comparisons in this file are exact.
constexpr VirtualTime kRecoveryBudget = 50 * kMillisecond;  // declare -> flows live again
constexpr std::uint64_t kMsgsPerMember = 4;      // coordinator sends during recovery
constexpr std::uint64_t kMinSinglePps = 100'000; // sustained single-runtime throughput
constexpr double kMinScaleFactor = 1.8;          // two runtimes vs one

bool verdict(int n, const char* title, const std::vector<std::string>& problems) {
    std::printf("%s %2d: %s\n", problems.empty() ? "PASS" : "FAIL", n, title);
    for (const std::string& p : problems) std::printf("         - %s\n", p.c_str());
    std::fflush(stdout);
    return problems.empty();
}

void expect(std::vector<std::string>& problems, bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
}

Scenario parse(const std::string& text) { return Scenario::parse(text, "acceptance"); }

std::uint64_t metric(const RunResult& r, const char* name) {
    return r.metrics.at(name).get<std::uint64_t>();
}

std::string num(std::uint64_t v) { return std::to_string(v); }

// --- direct-drive helpers (mirroring the simulator's public API) ----------

FlowKey mk_key(std::uint32_t i) {
    FlowKey k;
    k.src_ip = 0x0a000000u + i;
    k.dst_ip = 0xc0a80001u;
    k.proto = Proto::Tcp;
    k.src_port = static_cast<std::uint16_t>(1024 + (i % 40000));
    k.dst_port = 443;
    return k;
}

Packet mk_pkt(const FlowKey& key, std::uint64_t seq, VirtualTime at) {
    Packet p;
    p.key = key;
    p.gen_seq = seq;
    p.ts_created = at;
    ByteWriter w;
    w.u64(seq);
    for (std::size_t i = 8; i < kPayloadHeaderBytes; ++i) w.u8(0);
    p.payload = w.take();
    return p;
}

ServiceChain fw_chain() {
    return make_chain("work", {std::make_shared<FirewallNf>(std::vector<AclRule>{})});
}

ServiceChain vs_chain() { return make_chain("vs", {std::make_shared<ForwarderNf>()}); }

MemberInfo member(RuntimeId id, MemberRole role) {
    return {id, role, "m" + std::to_string(id) + ".ctl", "m" + std::to_string(id) + ".data", {}};
}

std::vector<nlohmann::json> by_event(const std::vector<nlohmann::json>& log,
                                     const std::string& event) {
    std::vector<nlohmann::json> out;
    for (const nlohmann::json& e : log)
        if (e.at("event") == event) out.push_back(e);
    return out;
}

// One fully observed failure-and-recovery episode, shared by the timing and
// the message-budget checks. Four members; flows spread over three runtimes;
// runtime 1 dies between beats.
struct FailureEpisode {
    VirtualTime declared = 0;
    VirtualTime first_unanswered = 0;
    VirtualTime done = 0;
    std::uint64_t victim_flows = 0;
    std::uint64_t recovered = 0;
    std::uint64_t sends_in_window = 0;
    std::uint64_t delivered_after = 0;  // packets delivered for all keys post-recovery
    std::uint64_t keys = 0;
    std::uint64_t members_at_failure = 0;
    bool replay_ok = false;
};

const FailureEpisode& failure_episode() {
    static const FailureEpisode ep = [] {
        FailureEpisode e;
        Sim sim(404);
        sim.add_runtime(9, MemberRole::VirtualSwitch, vs_chain());
        for (RuntimeId id : {1, 2, 3}) sim.add_runtime(id, MemberRole::Runtime, fw_chain());
        Coordinator coord({}, &sim.metrics(), sim.frame_sink());
        sim.add_node(&coord);
        coord.deploy_cluster(
            {member(9, MemberRole::VirtualSwitch), member(1, MemberRole::Runtime),
             member(2, MemberRole::Runtime), member(3, MemberRole::Runtime)},
            {{1, {3}}, {2, {3}}, {3, {2}}}, sim.now());
        sim.run_until(10 * kMillisecond);

        std::vector<FlowKey> keys;
        for (std::uint32_t i = 0; i < 60; ++i) keys.push_back(mk_key(i));
        std::uint64_t seq = 0;
        for (VirtualTime t = 10 * kMillisecond; t <= 1040 * kMillisecond;
             t += 20 * kMillisecond) {
            sim.run_until(t);
            for (const FlowKey& k : keys) sim.offer_packet(9, mk_pkt(k, ++seq, t));
        }

        // Beats answered through 1.0s; death at 1.05s makes 1.1s the first
        // unanswered beat.
        sim.run_until(1050 * kMillisecond);
        e.members_at_failure = coord.cluster().members.size();
        e.victim_flows = sim.runtime(1).live_processing_flows();
        sim.kill(1);

        VirtualTime t = 1050 * kMillisecond;
        while (t < 1900 * kMillisecond &&
               sim.metrics().recovered_flows < e.victim_flows) {
            t += kMillisecond;
            sim.run_until(t);
        }
        e.done = t;
        e.recovered = sim.metrics().recovered_flows;
        e.keys = keys.size();

        for (const nlohmann::json& entry : by_event(coord.log(), "member_failed")) {
            e.declared = entry.at("t").get<VirtualTime>();
            e.first_unanswered = entry.at("first_unanswered").get<VirtualTime>();
        }
        for (VirtualTime s : sim.metrics().coordinator_sends)
            if (s >= e.declared && s <= e.done) e.sends_in_window += 1;

        // Every flow, including the recovered ones, keeps processing.
        std::uint64_t before = sim.metrics().delivered;
        sim.run_until(e.done + 10 * kMillisecond);
        for (const FlowKey& k : keys) sim.offer_packet(9, mk_pkt(k, ++seq, sim.now()));
        sim.run_until(e.done + 40 * kMillisecond);
        e.delivered_after = sim.metrics().delivered - before;

        e.replay_ok = replay_log(coord.log()).ok();
        return e;
    }();
    return ep;
}

}  // namespace

TEST_CASE("acceptance 1") {
    Scenario sc = parse(R"(
[run]
name = accept-migration
seed = 42
duration = 2500ms

[cluster]
vswitch = 9
runtimes = 1 2

[chain]
nfs = firewall nat

[traffic]
flows = 10000
rate = 100000
payload = 64
stop = 2s

[ops]
at 800ms migrate 1 2 3000
at 1400ms migrate 2 1 3000

[checks]
conservation = on
output_commit = on
)");
    RunResult res = run_scenario(sc);
    std::vector<std::string> p;
    expect(p, res.ok, "run reported failures");
    for (const std::string& f : res.failures) p.push_back(f);
    expect(p, metric(res, "generated") == 200000,
           "generated " + num(metric(res, "generated")) + " != 200000");
    expect(p, metric(res, "delivered") == metric(res, "generated"),
           "lost packets: delivered " + num(metric(res, "delivered")) + " of " +
               num(metric(res, "generated")));
    expect(p, metric(res, "migrations_started") == 6000,
           "migrations_started " + num(metric(res, "migrations_started")));
    expect(p, metric(res, "migrations_done") == 6000,
           "migrations_done " + num(metric(res, "migrations_done")));
    expect(p, metric(res, "migrations_aborted") == 0,
           "migrations_aborted " + num(metric(res, "migrations_aborted")));
    expect(p, metric(res, "protocol_drops") == 0,
           "protocol_drops " + num(metric(res, "protocol_drops")));
    expect(p, metric(res, "nf_drops") == 0, "nf_drops " + num(metric(res, "nf_drops")));
    expect(p, metric(res, "overload_drops") == 0,
           "overload_drops " + num(metric(res, "overload_drops")));
    expect(p, metric(res, "in_flight") == 0, "in_flight " + num(metric(res, "in_flight")));
    expect(p, metric(res, "commit_violations") == 0,
           "commit_violations " + num(metric(res, "commit_violations")));
    REQUIRE(verdict(1, "live migration under load loses nothing at ten-thousand-flow scale", p));
}

TEST_CASE("acceptance 2") {
    const char* common = R"(
[cluster]
vswitch = 9
runtimes = 1 2

[chain]
name = edge
nfs = firewall ips nat lb

[nf.firewall]
default = forward
rule drop proto=udp dst_port=53

[nf.ips]
signatures = MALWARE XPLOIT

[nf.nat]
ip_base = 10.200.0.0
ips = 4

[nf.lb]
servers = 192.168.10.1:80 192.168.10.2:80 192.168.10.3:80

[traffic]
flows = 1000
rate = 20000
payload = 80
stop = 1s

[checks]
conservation = on
)";
    Scenario base = parse(std::string("[run]\nname = accept-golden-base\nseed = 1234\n"
                                      "duration = 1500ms\n") +
                          common);
    Scenario moved = parse(std::string("[run]\nname = accept-golden-moved\nseed = 1234\n"
                                       "duration = 1500ms\n") +
                           common + "[ops]\nat 600ms migrate 1 2 300\n");
    RunResult a = run_scenario(base);
    RunResult b = run_scenario(moved);
    CompareResult cmp = compare_dumps(a.state, b.state);

    std::vector<std::string> p;
    expect(p, a.ok && b.ok, "one of the runs reported failures");
    expect(p, metric(a, "delivered") == metric(a, "generated"), "base run lost packets");
    expect(p, metric(b, "delivered") == metric(b, "generated"), "moved run lost packets");
    expect(p, metric(b, "migrations_done") == 300,
           "migrations_done " + num(metric(b, "migrations_done")) + " != 300");
    expect(p, a.state.at("flows").size() == 1000,
           "dump holds " + num(a.state.at("flows").size()) + " flows, wanted 1000");
    expect(p, cmp.equal, "state dumps differ after relocation");
    for (std::size_t i = 0; i < cmp.diffs.size() && i < 3; ++i) p.push_back(cmp.diffs[i]);
    REQUIRE(verdict(2, "relocated flows end with byte-identical state to an undisturbed run", p));
}

TEST_CASE("acceptance 3") {
    Scenario sc = parse(R"(
[run]
name = accept-output-commit
seed = 77
duration = 2s

[cluster]
vswitch = 9
runtimes = 1 2 3
replicas.1 = 3

[chain]
nfs = firewall nat

[traffic]
flows = 2000
rate = 40000
payload = 64
stop = 1800ms

[ops]
at 1s kill 1
at 1100ms recover 3 1

[checks]
conservation = on
output_commit = on
)");
    ScenarioRun run(sc);
    RunResult res = run.run();

    std::uint64_t remote = 0;
    for (const EmissionRecord& e : run.sim().metrics().emissions)
        if (e.emitter != e.processed_by) remote += 1;

    std::vector<std::string> p;
    expect(p, res.ok, "run reported failures");
    for (const std::string& f : res.failures) p.push_back(f);
    expect(p, metric(res, "commit_violations") == 0,
           num(metric(res, "commit_violations")) + " emissions escaped before their state");
    expect(p, remote > 5000,
           "only " + num(remote) + " packets released by the standby; check not exercised");
    expect(p, metric(res, "recovered_flows") >= 1, "no flows recovered after the kill");
    expect(p, metric(res, "replication_degraded") == 0,
           "replication degraded on " + num(metric(res, "replication_degraded")) + " flows");
    REQUIRE(verdict(3, "no packet leaves before its state is safely stored elsewhere", p));
}

TEST_CASE("acceptance 4") {
    const FailureEpisode& e = failure_episode();
    std::vector<std::string> p;
    expect(p, e.victim_flows >= 10,
           "only " + num(e.victim_flows) + " flows on the victim; setup too thin");
    expect(p, e.first_unanswered == 1100 * kMillisecond,
           "first unanswered beat at " + num(e.first_unanswered) + ", wanted 1100ms");
    expect(p, e.declared == e.first_unanswered + 3 * 100 * kMillisecond,
           "declared at " + num(e.declared) + ", wanted first unanswered + 3 beats exactly");
    expect(p, e.recovered == e.victim_flows,
           "recovered " + num(e.recovered) + " of " + num(e.victim_flows) + " flows");
    expect(p, e.done - e.declared <= kRecoveryBudget,
           "recovery took " + num(e.done - e.declared) + "ns, budget " +
               num(kRecoveryBudget));
    expect(p, e.delivered_after == e.keys,
           "post-recovery round delivered " + num(e.delivered_after) + " of " + num(e.keys));
    expect(p, e.replay_ok, "decision log failed replay");
    REQUIRE(verdict(
        4, "failure is declared after exactly three missed beats and repaired within 50ms", p));
}

TEST_CASE("acceptance 5") {
    Scenario sc = parse(R"(
[run]
name = accept-conservation
seed = 4242
duration = 60s

[cluster]
vswitch = 9
runtimes = 1 2 3
replicas.1 = 2
replicas.2 = 3
replicas.3 = 1
coordinator = on

[chain]
nfs = nat lb

[nf.lb]
servers = 192.168.20.1:443 192.168.20.2:443

[traffic]
flows = 500
rate = 5000
payload = 64
start = 10ms
stop = 59s

[ops]
at 30s kill 2

[checks]
conservation = on
)");
    RunResult res = run_scenario(sc);
    std::vector<std::string> p;
    expect(p, res.ok, "a per-step conservation check tripped");
    for (const std::string& f : res.failures) p.push_back(f);
    expect(p, metric(res, "generated") == 294950,
           "generated " + num(metric(res, "generated")) + " != 294950");
    expect(p, metric(res, "epoch") == 2, "epoch " + num(metric(res, "epoch")) + " != 2");
    expect(p, metric(res, "recovered_flows") >= 1, "the failure was never repaired");
    REQUIRE(verdict(
        5, "packet books balance on every step of a minute-long run with a mid-life failure", p));
}

TEST_CASE("acceptance 6") {
    const std::vector<std::string> sigs = {"EVILWARE", "XPLOITKIT", "BADBEEF"};
    std::vector<Bytes> sig_bytes;
    for (const std::string& s : sigs) sig_bytes.emplace_back(s.begin(), s.end());
    IpsNf ips(sig_bytes);
    auto ss = ips.allocate_shared_state();

    constexpr int kFlows = 300;
    constexpr int kCases = 10000;
    std::vector<std::unique_ptr<FlowState>> fs;
    for (int i = 0; i < kFlows; ++i) fs.push_back(ips.allocate_new_fs());
    std::vector<std::string> seen(kFlows);          // reference: full scan stream
    std::vector<std::string> pending_tail(kFlows);  // armed cross-packet split
    std::vector<std::uint64_t> seqn(kFlows, 0);

    Rng rng(606);
    auto filler = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<char>('a' + rng.below(26));
        return s;
    };
    auto contains_any = [&](const std::string& stream) {
        for (const std::string& s : sigs)
            if (stream.find(s) != std::string::npos) return true;
        return false;
    };

    std::uint64_t mismatches = 0, first_mismatch = kCases;
    for (int c = 0; c < kCases; ++c) {
        int f = static_cast<int>(rng.below(kFlows));
        std::string body;
        // Every fifth flow never carries a signature: the filler alphabet is
        // lowercase and the signatures are uppercase, so these stay clean.
        if (f % 5 == 0) {
            body = filler(rng.below(40));
        } else if (!pending_tail[f].empty()) {
            body = pending_tail[f] + filler(rng.below(20));
            pending_tail[f].clear();
        } else if (f % 7 == 3 && rng.chance(0.25)) {
            const std::string& s = sigs[rng.below(sigs.size())];
            std::size_t cut = 1 + rng.below(s.size() - 1);
            body = filler(rng.below(20)) + s.substr(0, cut);
            pending_tail[f] = s.substr(cut);
        } else if (rng.chance(0.06)) {
            const std::string& s = sigs[rng.below(sigs.size())];
            body = filler(rng.below(15)) + s + filler(rng.below(15));
        } else {
            body = filler(rng.below(40));
        }

        Packet pkt = mk_pkt(mk_key(static_cast<std::uint32_t>(f)), seqn[f]++, 0);
        pkt.payload.insert(pkt.payload.end(), body.begin(), body.end());
        bool dropped = ips.process_pkt(pkt, *fs[f], *ss).action == Action::Drop;
        seen[f] += body;
        bool want = contains_any(seen[f]);
        if (dropped != want && first_mismatch == kCases) first_mismatch = c;
        mismatches += dropped != want;
    }

    int hostile = 0, clean = 0, split_hits = 0;
    for (int f = 0; f < kFlows; ++f) {
        bool hit = contains_any(seen[f]);
        hostile += hit;
        clean += !hit;
        if (f % 7 == 3 && hit) split_hits += 1;
    }

    std::vector<std::string> p;
    expect(p, mismatches == 0,
           num(mismatches) + " of " + num(kCases) + " verdicts disagree (first at case " +
               num(first_mismatch) + ")");
    expect(p, hostile >= 30, "only " + num(hostile) + " flows ever matched; corpus too tame");
    expect(p, clean >= 30, "only " + num(clean) + " flows stayed clean; corpus too hot");
    expect(p, split_hits >= 5,
           "only " + num(split_hits) + " cross-packet matches; split coverage too thin");
    REQUIRE(verdict(
        6, "the intrusion scanner agrees with a reference scanner on ten thousand cases", p));
}

TEST_CASE("acceptance 7") {
    struct WirePair {
        VirtualTime now = 0;
        SimFabric fabric;
        std::optional<Transport> a, b;
        std::vector<std::uint64_t> got;

        WirePair(std::uint64_t seed, LinkConfig link) : fabric(seed, link) {
            a.emplace(1, ChannelConfig{},
                      [this](WireFrame&& f) { fabric.send(std::move(f), now); });
            b.emplace(2, ChannelConfig{},
                      [this](WireFrame&& f) { fabric.send(std::move(f), now); });
        }
        bool settle() {
            bool progressed = false;
            for (WireFrame& f : fabric.deliver_due(now)) {
                progressed = true;
                Transport& ep = f.dst == 1 ? *a : *b;
                for (ActorMessage& m : ep.on_frame(f, now))
                    if (f.dst == 2) got.push_back(m.correlation_id);
            }
            if (a->retransmit_sweep(now) > 0) progressed = true;
            if (b->retransmit_sweep(now) > 0) progressed = true;
            return progressed;
        }
        void run(VirtualTime horizon) {
            for (;;) {
                while (settle()) {
                }
                VirtualTime next = std::min(
                    {fabric.next_deadline(), a->next_deadline(), b->next_deadline()});
                if (next == kNoDeadline || next > horizon) break;
                now = std::max(now, next);
            }
        }
    };

    std::vector<std::string> p;
    for (double loss : {0.05, 0.2, 0.5}) {
        for (std::uint64_t seed : {101ull, 202ull, 303ull}) {
            WirePair wire(seed, LinkConfig{50 * kMicrosecond, 20 * kMicrosecond, loss, false});
            constexpr std::uint64_t kMsgs = 500;
            for (std::uint64_t n = 0; n < kMsgs; ++n)
                wire.a->send_message(2, make_message(1, 2, n, RouteUpdateReqBody{n}),
                                     wire.now);
            wire.run(300 * kSecond);

            std::string tag = "loss " + std::to_string(loss) + " seed " + num(seed) + ": ";
            bool exact = wire.got.size() == kMsgs;
            for (std::uint64_t n = 0; exact && n < kMsgs; ++n) exact = wire.got[n] == n;
            expect(p, exact,
                   tag + "delivered " + num(wire.got.size()) + " of " + num(kMsgs) +
                       (wire.got.size() == kMsgs ? " but out of order" : ""));
            expect(p, wire.a->channel(2).stats().retransmits > 0,
                   tag + "no retransmits; loss not exercised");
        }
    }
    REQUIRE(verdict(
        7, "control channels deliver exactly-once in-order at 5, 20 and 50 percent loss", p));
}

TEST_CASE("acceptance 8") {
    std::vector<std::string> p;

    Scenario out = parse(R"(
[run]
name = accept-scale-out
seed = 31
duration = 3200ms

[cluster]
vswitch = 9
runtimes = 1
launchable = 4 5
coordinator = on

[chain]
nfs = firewall

[runtime]
pool = 1200

[coordinator]
overload_delta = 100
batch = 500

[traffic]
flows = 1400
rate = 14000
start = 10ms
stop = 2900ms

[checks]
conservation = on
)");
    RunResult r1 = run_scenario(out);
    auto log1 = ndjson_to_log(r1.coordinator_ndjson);
    expect(p, r1.ok, "scale-out run reported failures");
    expect(p, metric(r1, "overload_drops") > 0, "nothing was shed; overload never happened");
    auto overloads = by_event(log1, "overload");
    expect(p, !overloads.empty() && overloads.front().at("member") == 1 &&
                  overloads.front().at("active") == 1200,
           "no overload decision for member 1 at 1200 active flows");
    expect(p, by_event(log1, "launch").size() == 1, "expected exactly one launch");
    auto batches = by_event(log1, "migrate_batch");
    expect(p, batches.size() == 2, "expected two drain batches, saw " + num(batches.size()));
    for (const nlohmann::json& b : batches)
        expect(p, b.at("count") == 500 && b.at("from") == 1 && b.at("to") == 4,
               "batch deviates from policy: " + b.dump());
    auto done = by_event(log1, "episode_done");
    expect(p, done.size() == 1 && done.front().at("active").get<std::uint64_t>() <= 600,
           "episode did not end at or below half the initial flows");
    expect(p, metric(r1, "migrations_done") == 1000,
           "migrations_done " + num(metric(r1, "migrations_done")) + " != 1000");
    ReplayResult rep1 = replay_log(log1);
    expect(p, rep1.ok(), "scale-out log failed replay: " +
                             (rep1.issues.empty() ? "" : rep1.issues.front()));

    Scenario in = parse(R"(
[run]
name = accept-scale-in
seed = 8
duration = 8s

[cluster]
vswitch = 9
runtimes = 1 2
coordinator = on

[chain]
nfs = firewall

[runtime]
expiry = 30s

[coordinator]
idle_polls = 3
idle_fraction = 0.1

[traffic]
flows = 40
rate = 4000
start = 10ms

[ops]
at 1500ms stop_traffic

[checks]
conservation = on
)");
    RunResult r2 = run_scenario(in);
    auto log2 = ndjson_to_log(r2.coordinator_ndjson);
    expect(p, r2.ok, "scale-in run reported failures");
    auto drains = by_event(log2, "scale_in");
    expect(p, !drains.empty() && drains.front().at("member") == 1 && drains.front().at("to") == 2,
           "no drain of idle member 1 to peer 2");
    expect(p, !by_event(log2, "retired").empty(), "idle member was never retired");
    expect(p, metric(r2, "live_flows") == 40,
           "survivor holds " + num(metric(r2, "live_flows")) + " flows, wanted all 40");
    expect(p, metric(r2, "migrations_aborted") == 0, "drain aborted some migrations");
    ReplayResult rep2 = replay_log(log2);
    expect(p, rep2.ok(), "scale-in log failed replay: " +
                             (rep2.issues.empty() ? "" : rep2.issues.front()));

    REQUIRE(verdict(8, "scaling decisions follow policy and the decision log replays consistently",
                    p));
}

TEST_CASE("acceptance 9") {
    const FailureEpisode& e = failure_episode();
    std::vector<std::string> p;
    expect(p, e.victim_flows >= 10, "victim held too few flows to be meaningful");
    expect(p, e.recovered == e.victim_flows, "recovery incomplete; budget check is moot");
    std::uint64_t budget = kMsgsPerMember * e.members_at_failure;
    expect(p, e.sends_in_window <= budget,
           "coordinator sent " + num(e.sends_in_window) + " messages during recovery, budget " +
               num(budget) + " (4 x " + num(e.members_at_failure) + " members)");
    expect(p, e.replay_ok, "decision log failed replay");
    REQUIRE(verdict(
        9, "recovery stays decentralized: coordinator sends at most four messages per member", p));
}

TEST_CASE("acceptance 10") {
    Scenario one = parse(R"(
[run]
name = accept-bench
mode = benchmark
seed = 3
duration = 1s

[cluster]
runtimes = 1

[chain]
nfs = firewall nat

[traffic]
flows = 10000
rate = 2000000
payload = 64
)");
    Scenario two = one;
    two.runtimes = {1, 2};

    RunResult r1 = run_benchmark(one);
    RunResult r2 = run_benchmark(two);
    std::uint64_t pps1 = metric(r1, "pps");
    std::uint64_t pps2 = metric(r2, "pps");
    double ratio = pps1 ? static_cast<double>(pps2) / static_cast<double>(pps1) : 0.0;
    std::printf("         measured: one runtime %llu pps, two runtimes %llu pps, ratio %.2f\n",
                static_cast<unsigned long long>(pps1), static_cast<unsigned long long>(pps2),
                ratio);

    std::vector<std::string> p;
    expect(p, metric(r1, "delivered") == metric(r1, "offered"), "single-runtime run dropped");
    expect(p, metric(r2, "delivered") == metric(r2, "offered"), "dual-runtime run dropped");
    expect(p, pps1 >= kMinSinglePps,
           "single runtime " + num(pps1) + " pps, floor " + num(kMinSinglePps));
    expect(p, ratio >= kMinScaleFactor,
           "two runtimes scale by " + std::to_string(ratio) + ", floor " +
               std::to_string(kMinScaleFactor) + " (needs two hardware cores)");
    REQUIRE(verdict(
        10, "single-runtime throughput exceeds 100k pps and a second runtime scales it 1.8x", p));
}
