#include <catch2/catch_amalgamated.hpp>

#include "flowactor/harness.hpp"

using namespace flowactor;

namespace {

Scenario parse(const std::string& text) { return Scenario::parse(text, "test.ini"); }

const char* kBase = R"(
[run]
name = base
seed = 21
duration = 1500ms

[cluster]
vswitch = 9
runtimes = 1 2

[chain]
nfs = firewall nat

[traffic]
flows = 40
rate = 5000
payload = 64
stop = 1s

[checks]
conservation = on
assert delivered == generated
assert protocol_drops == 0
)";

}  // namespace

TEST_CASE("scenario text parses into a typed description") {
    Scenario sc = parse(R"(
[run]
name = demo
seed = 7
duration = 2s

[cluster]
vswitch = 9
standby_vswitch = 10
runtimes = 1 2
replicas.1 = 2
coordinator = on
launchable = 4 5

[chain]
name = edge
nfs = firewall ips nat lb

[nf.firewall]
default = drop
rule forward proto=tcp dst_port=443
rule drop src_ip=10.9.9.9

[nf.ips]
signatures = EVIL ATTACK

[nf.nat]
ip_base = 10.100.0.0
ips = 2
port_lo = 1000
port_hi = 2000

[nf.lb]
servers = 192.168.1.1:80 192.168.1.2:8080

[traffic]
flows = 10
rate = 1000
packets_per_flow = 6
hostile_fraction = 0.5
hostile_token = ATTACK
proto = udp

[transport]
delay = 80us
jitter = 20us
loss = 0.01

[runtime]
pool = 4096
expiry = 3s
step_deadline = 25ms
buffer_cap = 64

[coordinator]
heartbeat = 50ms
miss_limit = 4

[ops]
at 1s kill 1
at 500ms migrate 1 2 10

[checks]
conservation = on
output_commit = on
assert recovered_flows >= 1
)");
    CHECK(sc.name == "demo");
    CHECK(sc.duration == 2 * kSecond);
    CHECK(sc.standby_vswitch == RuntimeId{10});
    CHECK(sc.replicas.at(1) == std::vector<RuntimeId>{2});
    CHECK(sc.replicas.at(9) == std::vector<RuntimeId>{10});  // standby wiring
    CHECK(sc.coordinator);
    CHECK(sc.launchable == std::vector<RuntimeId>{4, 5});
    CHECK(sc.chain_name == "edge");
    CHECK(sc.nfs == std::vector<std::string>{"firewall", "ips", "nat", "lb"});
    CHECK(sc.fw_default == Action::Drop);
    REQUIRE(sc.acl.size() == 2);
    CHECK(sc.acl[0].action == Action::Forward);
    CHECK(sc.acl[0].dst_port == std::uint16_t{443});
    CHECK(sc.acl[1].src_ip == 0x0a090909u);
    CHECK(sc.signatures.size() == 2);
    CHECK(sc.nat_base == 0x0a640000u);
    CHECK(sc.nat_ips == 2);
    REQUIRE(sc.servers.size() == 2);
    CHECK(sc.servers[1].port == 8080);
    CHECK(sc.traffic.packets_per_flow == 6);
    CHECK(sc.traffic.proto == Proto::Udp);
    CHECK(sc.link.delay == 80 * kMicrosecond);
    CHECK(sc.link.loss_prob == 0.01);
    CHECK(sc.runtime_cfg.pool_capacity == 4096);
    CHECK(sc.runtime_cfg.migration_step_deadline == 25 * kMillisecond);
    CHECK(sc.coordinator_cfg.heartbeat_period == 50 * kMillisecond);
    CHECK(sc.coordinator_cfg.miss_limit == 4);
    REQUIRE(sc.ops.size() == 2);
    CHECK(sc.ops[0].verb == "migrate");  // sorted by time
    CHECK(sc.ops[1].verb == "kill");
    CHECK(sc.check_output_commit);
    REQUIRE(sc.asserts.size() == 1);
    CHECK(sc.asserts[0].lhs == "recovered_flows");
}

TEST_CASE("scenario diagnostics carry file and line") {
    auto expect_err = [](const std::string& text, const std::string& needle) {
        try {
            Scenario::parse(text, "bad.ini");
            FAIL("expected a parse error for: " << text);
        } catch (const ScenarioError& e) {
            INFO(e.what());
            CHECK(std::string(e.what()).find("bad.ini:") == 0);
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_err("[run]\nbogus = 1\n", "unknown key 'bogus'");
    expect_err("[nope]\n", "unknown section");
    expect_err("stray\n", "content before any [section]");
    expect_err("[run]\nduration = fast\n", "expected a duration");
    expect_err("[run]\nduration = 10parsecs\n", "unknown time unit");
    expect_err("[run]\nseed = twelve\n", "expected an integer");
    expect_err("[chain]\nnfs = firewall dpi\n", "unknown NF 'dpi'");
    expect_err("[ops]\nat noon kill 1\n", "expected a duration");
    expect_err("[ops]\nat 1s explode 1\n", "unknown op");
    expect_err("[ops]\nat 1s kill 1 2\n", "takes 1 argument");
    expect_err("[checks]\nassert delivered ~= 3\n", "unknown comparison");
    expect_err("[run]\nseed = 1\nseed = 2\n", "duplicate key");
    expect_err("[run]\n[run]\n", "duplicate section");
    expect_err("[chain]\nnfs = lb\n", "no servers");
}

TEST_CASE("traffic pacing, churn and payload layout are deterministic") {
    TrafficConfig tc;
    tc.flows = 4;
    tc.rate_pps = 1000;  // 1ms spacing
    tc.packets_per_flow = 5;
    tc.payload_bytes = 48;
    tc.hostile_fraction = 1.0;
    tc.hostile_token = {'A', 'T', 'K'};
    TrafficGen gen(tc, 99);

    std::vector<Packet> got;
    gen.pump(99 * kMillisecond, [&](Packet&& p) { got.push_back(std::move(p)); });
    REQUIRE(got.size() == 100);  // packets due at 0..99ms inclusive
    CHECK(gen.emitted() == 100);

    // Round-robin across four concurrent flows, unique global sequence.
    CHECK(got[0].key == got[4].key);
    CHECK_FALSE(got[0].key == got[1].key);
    for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got[i].gen_seq == i + 1);
        REQUIRE(got[i].payload.size() == 48);
        ByteReader r(BytesView(got[i].payload.data(), 8));
        REQUIRE(r.u64() == got[i].gen_seq);
        for (std::size_t b = 8; b < kPayloadHeaderBytes; ++b) REQUIRE(got[i].payload[b] == 0);
    }
    // Every flow is hostile here; once the attack packet is reached the token
    // sits exactly at the scan offset.
    const auto& recs = gen.records();
    REQUIRE(recs.size() >= 4);
    for (const auto& rec : recs) {
        CHECK(rec.hostile);
        if (rec.budget != 0) {
            CHECK(rec.attack_at >= 1);
            CHECK(rec.attack_at <= rec.budget);
        }
    }
    for (const Packet& p : got) {
        bool has_token = std::equal(tc.hostile_token.begin(), tc.hostile_token.end(),
                                    p.payload.begin() + kPayloadHeaderBytes);
        // Body filler is lowercase; the token is uppercase, so presence is
        // unambiguous.
        for (std::size_t b = kPayloadHeaderBytes + (has_token ? tc.hostile_token.size() : 0);
             b < p.payload.size(); ++b) {
            REQUIRE(p.payload[b] >= 'a');
            REQUIRE(p.payload[b] <= 'z');
        }
    }

    // Budgets: 5-packet flows retire and fresh keys take their slots.
    std::uint64_t started = recs.size();
    CHECK(started > 4);  // churn happened
    for (std::size_t i = 0; i + 1 < recs.size(); ++i)
        CHECK_FALSE(recs[i].key == recs[i + 1].key);

    // Same config and seed reproduce the identical stream.
    TrafficGen gen2(tc, 99);
    std::vector<Packet> got2;
    gen2.pump(99 * kMillisecond, [&](Packet&& p) { got2.push_back(std::move(p)); });
    REQUIRE(got2.size() == got.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        REQUIRE(got2[i].key == got[i].key);
        REQUIRE(got2[i].payload == got[i].payload);
    }

    // skip_to delays the first due packet without emitting.
    TrafficGen gen3(tc, 99);
    gen3.skip_to(50 * kMillisecond);
    std::uint64_t n = gen3.pump(49 * kMillisecond, [](Packet&&) {});
    CHECK(n == 0);
    CHECK(gen3.next_due() == 50 * kMillisecond);
}

TEST_CASE("a plain scenario runs clean and satisfies its own checks") {
    Scenario sc = parse(kBase);
    RunResult res = run_scenario(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    CHECK(res.failures.empty());
    CHECK(res.metrics.at("generated") == 5000);
    CHECK(res.metrics.at("delivered") == 5000);
    CHECK(res.metrics.at("checks_passed") == true);
    CHECK(res.state.at("flows").size() == 40);
    CHECK(res.state.at("switch").size() == 40);
    CHECK(res.coordinator_ndjson.empty());
}

TEST_CASE("failed scenario assertions flip the result and say why") {
    Scenario sc = parse(kBase);
    sc.asserts.push_back({"delivered", "==", "1", 0});
    RunResult res = run_scenario(sc);
    CHECK_FALSE(res.ok);
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].find("assert delivered == 1 failed") != std::string::npos);
}

TEST_CASE("identical seeds reproduce the trace, different seeds diverge") {
    Scenario sc = parse(kBase);
    sc.link.jitter = 30 * kMicrosecond;  // give the seed something to drive
    RunResult a = run_scenario(sc);
    RunResult b = run_scenario(sc);
    RunResult c = run_scenario(sc, 777);
    REQUIRE(a.metrics.at("trace") == b.metrics.at("trace"));
    REQUIRE(a.metrics.at("trace") != c.metrics.at("trace"));
    CHECK(a.ok);
    CHECK(c.ok);
}

TEST_CASE("state dumps compare location-independently") {
    Scenario plain = parse(kBase);
    RunResult golden = run_scenario(plain);

    Scenario moved = parse(kBase);
    moved.ops.push_back({600 * kMillisecond, "migrate", {"1", "2", "15"}, 0});
    RunResult shifted = run_scenario(moved);
    REQUIRE(shifted.ok);
    REQUIRE(shifted.metrics.at("migrations_done") == 15);

    // Same traffic, same flow state, different placement: still equal.
    CompareResult cmp = compare_dumps(golden.state, shifted.state);
    INFO((cmp.diffs.empty() ? std::string("no diffs") : cmp.diffs[0]));
    CHECK(cmp.equal);

    // A byte of flow state difference is caught.
    nlohmann::json tampered = shifted.state;
    for (auto& [k, v] : tampered.at("flows").items()) {
        std::string blob = v.at("blobs")[0];
        blob[0] = blob[0] == 'f' ? 'e' : 'f';
        v["blobs"][0] = blob;
        break;
    }
    CHECK_FALSE(compare_dumps(golden.state, tampered).equal);

    // A missing flow is caught in both directions.
    nlohmann::json pruned = shifted.state;
    auto it = pruned.at("flows").begin();
    pruned.at("flows").erase(it.key());
    CHECK_FALSE(compare_dumps(golden.state, pruned).equal);
    CHECK_FALSE(compare_dumps(pruned, golden.state).equal);
}

TEST_CASE("flows can migrate onto the host that stores their replicas") {
    // The standby record for each flow lives on the migration destination.
    // The create step must convert that record into a migration target
    // instead of refusing, and the handoff must finish without aborts.
    Scenario sc = parse(R"(
[run]
name = onto-replica
seed = 17
duration = 1500ms

[cluster]
vswitch = 9
runtimes = 1 2
replicas.1 = 2

[chain]
nfs = firewall

[traffic]
flows = 12
rate = 4000
stop = 1s

[ops]
at 500ms migrate 1 2 6

[checks]
conservation = on
output_commit = on
assert migrations_done == 6
assert migrations_aborted == 0
assert delivered == generated
)");
    RunResult res = run_scenario(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    CHECK(res.metrics.at("commit_violations") == 0);
}

TEST_CASE("ops script kills and recovers through the scenario file") {
    Scenario sc = parse(R"(
[run]
name = scripted
seed = 5
duration = 2s

[cluster]
vswitch = 9
runtimes = 1 2 3
replicas.1 = 3

[chain]
nfs = firewall

[traffic]
flows = 30
rate = 3000
stop = 900ms

[ops]
at 1s kill 1
at 1100ms recover 3 1

[checks]
conservation = on
assert recovered_flows >= 1
assert failure_drops == 0
)");
    RunResult res = run_scenario(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    CHECK(res.metrics.at("recovered_flows").get<std::uint64_t>() >= 1);
}

TEST_CASE("a coordinator-run scenario heals a killed runtime end to end") {
    Scenario sc = parse(R"(
[run]
name = healed
seed = 13
duration = 3s

[cluster]
vswitch = 9
runtimes = 1 2
replicas.1 = 2
replicas.2 = 1
coordinator = on

[chain]
nfs = firewall

[traffic]
flows = 20
rate = 2000
start = 10ms
stop = 800ms

[ops]
at 1s kill 1

[checks]
conservation = on
assert recovered_flows >= 1
assert epoch == 2
)");
    RunResult res = run_scenario(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    CHECK_FALSE(res.coordinator_ndjson.empty());
    auto log = ndjson_to_log(res.coordinator_ndjson);
    CHECK(replay_log(log).ok());
    bool declared = false;
    for (const auto& e : log) declared |= e.at("event") == "member_failed";
    CHECK(declared);
}

TEST_CASE("a standby switch takes over ingress after the primary dies") {
    Scenario sc = parse(R"(
[run]
name = switch-failover
seed = 29
duration = 3s

[cluster]
vswitch = 9
standby_vswitch = 10
runtimes = 1 2
coordinator = on

[chain]
nfs = firewall

[traffic]
flows = 10
rate = 1000
start = 10ms
stop = 2500ms

[ops]
at 1s kill 9

[checks]
conservation = on
assert recovered_flows >= 10
assert delivered > 0
)");
    RunResult res = run_scenario(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    // Traffic kept flowing after the takeover: deliveries well beyond what
    // had left before the kill at 1s (1000 pps means ~1000 by then).
    CHECK(res.metrics.at("delivered").get<std::uint64_t>() > 1500);
}

TEST_CASE("benchmark mode reports wall-clock throughput") {
    Scenario sc = parse(R"(
[run]
mode = benchmark
seed = 3
duration = 1s

[cluster]
runtimes = 1

[chain]
nfs = firewall

[traffic]
rate = 100000
flows = 200

[checks]
assert pps > 0
assert delivered == offered
)");
    RunResult res = run_benchmark(sc);
    INFO(res.metrics.dump(2));
    CHECK(res.ok);
    CHECK(res.metrics.at("runtimes") == 1);
    CHECK(res.metrics.at("offered").get<std::uint64_t>() >= 100000);
}
