#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "flowactor/coordinator.hpp"
#include "flowactor/traffic.hpp"

namespace flowactor {

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Experiment description: an INI-style text file with `key = value` entries
// plus bare statement lines in [ops], [checks] and [nf.firewall]. Every
// diagnostic carries file and line. docs/scenario.md documents the schema.

struct Scenario {
    // [run]
    std::string name = "scenario";
    std::uint64_t seed = 1;
    VirtualTime duration = kSecond;
    std::string mode = "deterministic";  // or "benchmark"

    // [cluster]
    RuntimeId vswitch = 9;
    std::optional<RuntimeId> standby_vswitch;
    std::vector<RuntimeId> runtimes;
    std::map<RuntimeId, std::vector<RuntimeId>> replicas;
    bool coordinator = false;
    std::vector<RuntimeId> launchable;

    // [chain] and [nf.*]
    std::string chain_name = "work";
    std::vector<std::string> nfs{"firewall"};
    Action fw_default = Action::Forward;
    std::vector<AclRule> acl;
    std::vector<Bytes> signatures;
    std::uint32_t nat_base = 0x0a640000u;  // per-runtime pools offset from here
    std::uint32_t nat_ips = 1;
    std::uint16_t nat_port_lo = 2000;
    std::uint16_t nat_port_hi = 60000;
    std::vector<ServerAddr> servers;

    // [traffic]
    TrafficConfig traffic;
    VirtualTime traffic_start = 0;
    VirtualTime traffic_stop = kNoDeadline;  // default: the whole run

    // [transport], [runtime], [coordinator]
    LinkConfig link;
    RuntimeConfig runtime_cfg;
    CoordinatorConfig coordinator_cfg;

    // [ops]: timed script commands
    struct Op {
        VirtualTime at = 0;
        std::string verb;
        std::vector<std::string> args;
        int line = 0;
    };
    std::vector<Op> ops;

    // [checks]
    bool check_conservation = false;
    bool check_output_commit = false;
    struct Assert {
        std::string lhs;
        std::string op;
        std::string rhs;
        int line = 0;
    };
    std::vector<Assert> asserts;

    static Scenario parse(const std::string& text, const std::string& origin = "<inline>");
    static Scenario parse_file(const std::string& path);
};

// ---------------------------------------------------------------------------
// Low-level text form.

namespace detail {

struct RawSection {
    std::map<std::string, std::pair<std::string, int>> kv;  // key -> (value, line)
    std::vector<std::pair<std::string, int>> statements;    // bare lines
    int line = 0;
};

[[noreturn]] inline void fail(const std::string& origin, int line, const std::string& msg) {
    throw ScenarioError(origin + ":" + std::to_string(line) + ": " + msg);
}

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::map<std::string, RawSection> parse_sections(const std::string& text,
                                                        const std::string& origin) {
    std::map<std::string, RawSection> sections;
    std::string current;
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        line += 1;
        std::size_t hash = raw.find_first_of("#;");
        std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']') fail(origin, line, "unterminated section header");
            current = trim(s.substr(1, s.size() - 2));
            if (current.empty()) fail(origin, line, "empty section name");
            if (sections.count(current)) fail(origin, line, "duplicate section [" + current + "]");
            sections[current].line = line;
            continue;
        }
        if (current.empty()) fail(origin, line, "content before any [section]");
        // `key = value` only when the key is one word; anything else is a
        // statement line (ops, checks, ACL rules).
        std::size_t eq = s.find('=');
        std::string key = eq == std::string::npos ? "" : trim(s.substr(0, eq));
        if (key.empty() || key.find_first_of(" \t") != std::string::npos) {
            sections[current].statements.emplace_back(s, line);
            continue;
        }
        std::string value = trim(s.substr(eq + 1));
        if (sections[current].kv.count(key))
            fail(origin, line, "duplicate key '" + key + "' in [" + current + "]");
        sections[current].kv[key] = {value, line};
    }
    return sections;
}

// Typed readers. Each consumes the key (so leftovers can be reported).

class SectionReader {
public:
    SectionReader(const std::string& origin, const std::string& name, RawSection* raw)
        : origin_(origin), name_(name), raw_(raw) {}

    bool present() const { return raw_ != nullptr; }

    std::optional<std::pair<std::string, int>> take(const std::string& key) {
        if (!raw_) return std::nullopt;
        auto it = raw_->kv.find(key);
        if (it == raw_->kv.end()) return std::nullopt;
        auto out = it->second;
        raw_->kv.erase(it);
        return out;
    }

    std::uint64_t u64(const std::string& key, std::uint64_t def) {
        auto v = take(key);
        if (!v) return def;
        return parse_u64(v->first, v->second);
    }

    double real(const std::string& key, double def) {
        auto v = take(key);
        if (!v) return def;
        try {
            std::size_t used = 0;
            double d = std::stod(v->first, &used);
            if (used != v->first.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            fail(origin_, v->second, "expected a number, got '" + v->first + "'");
        }
    }

    bool boolean(const std::string& key, bool def) {
        auto v = take(key);
        if (!v) return def;
        if (v->first == "on" || v->first == "true" || v->first == "yes") return true;
        if (v->first == "off" || v->first == "false" || v->first == "no") return false;
        fail(origin_, v->second, "expected on/off, got '" + v->first + "'");
    }

    VirtualTime duration(const std::string& key, VirtualTime def) {
        auto v = take(key);
        if (!v) return def;
        return parse_duration(v->first, v->second);
    }

    std::string word(const std::string& key, const std::string& def) {
        auto v = take(key);
        return v ? v->first : def;
    }

    std::vector<std::uint64_t> id_list(const std::string& key) {
        auto v = take(key);
        std::vector<std::uint64_t> out;
        if (!v) return out;
        for (const std::string& tok : split_ws(v->first)) out.push_back(parse_u64(tok, v->second));
        return out;
    }

    std::uint32_t ip(const std::string& key, std::uint32_t def) {
        auto v = take(key);
        if (!v) return def;
        return parse_ip(v->first, v->second);
    }

    // Everything left over is a typo; say so with its line.
    void finish() {
        if (!raw_) return;
        for (const auto& [key, val] : raw_->kv)
            fail(origin_, val.second, "unknown key '" + key + "' in [" + name_ + "]");
        if (name_ != "ops" && name_ != "checks" && name_ != "nf.firewall")
            for (const auto& [stmt, line] : raw_->statements)
                fail(origin_, line, "unexpected statement in [" + name_ + "]");
    }

    std::uint64_t parse_u64(const std::string& s, int line) {
        try {
            std::size_t used = 0;
            std::uint64_t v = std::stoull(s, &used, 0);
            if (used != s.size()) throw std::invalid_argument("");
            return v;
        } catch (const std::exception&) {
            fail(origin_, line, "expected an integer, got '" + s + "'");
        }
    }

    VirtualTime parse_duration(const std::string& s, int line) {
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(s, &used, 10);
        } catch (const std::exception&) {
            fail(origin_, line, "expected a duration like 50ms, got '" + s + "'");
        }
        if (v < 0) fail(origin_, line, "durations cannot be negative");
        std::string unit = s.substr(used);
        if (unit == "ns" || unit == "") return v;
        if (unit == "us") return v * kMicrosecond;
        if (unit == "ms") return v * kMillisecond;
        if (unit == "s") return v * kSecond;
        fail(origin_, line, "unknown time unit '" + unit + "' (use ns/us/ms/s)");
    }

    std::uint32_t parse_ip(const std::string& s, int line) {
        unsigned a = 0, b = 0, c = 0, d = 0;
        char tail = 0;
        if (std::sscanf(s.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) == 4 && a < 256 &&
            b < 256 && c < 256 && d < 256)
            return (a << 24) | (b << 16) | (c << 8) | d;
        return static_cast<std::uint32_t>(parse_u64(s, line));
    }

    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::string name_;
    RawSection* raw_;
};

}  // namespace detail

inline Scenario Scenario::parse(const std::string& text, const std::string& origin) {
    using detail::fail;
    auto sections = detail::parse_sections(text, origin);
    auto reader = [&](const std::string& name) {
        auto it = sections.find(name);
        return detail::SectionReader(origin, name, it == sections.end() ? nullptr : &it->second);
    };
    static const std::vector<std::string> known = {
        "run",     "cluster", "chain",       "nf.firewall", "nf.ips", "nf.nat",
        "nf.lb",   "traffic", "transport",   "runtime",     "coordinator",
        "ops",     "checks"};
    for (const auto& [name, sec] : sections)
        if (std::find(known.begin(), known.end(), name) == known.end())
            fail(origin, sec.line, "unknown section [" + name + "]");

    Scenario sc;

    {
        auto r = reader("run");
        sc.name = r.word("name", sc.name);
        sc.seed = r.u64("seed", sc.seed);
        sc.duration = r.duration("duration", sc.duration);
        sc.mode = r.word("mode", sc.mode);
        if (sc.mode != "deterministic" && sc.mode != "benchmark")
            fail(origin, sections.count("run") ? sections["run"].line : 0,
                 "mode must be deterministic or benchmark");
        r.finish();
    }
    {
        auto r = reader("cluster");
        sc.vswitch = r.u64("vswitch", sc.vswitch);
        if (auto v = r.take("standby_vswitch"))
            sc.standby_vswitch = r.parse_u64(v->first, v->second);
        for (std::uint64_t id : r.id_list("runtimes")) sc.runtimes.push_back(id);
        sc.coordinator = r.boolean("coordinator", sc.coordinator);
        for (std::uint64_t id : r.id_list("launchable")) sc.launchable.push_back(id);
        // replicas.<id> = <id> <id> ...
        for (RuntimeId rt : sc.runtimes) {
            auto ids = r.id_list("replicas." + std::to_string(rt));
            if (!ids.empty()) sc.replicas[rt] = {ids.begin(), ids.end()};
        }
        if (sc.standby_vswitch) sc.replicas[sc.vswitch] = {*sc.standby_vswitch};
        r.finish();
        if (sc.runtimes.empty() && sections.count("cluster"))
            fail(origin, sections["cluster"].line, "cluster has no runtimes");
    }
    {
        auto r = reader("chain");
        sc.chain_name = r.word("name", sc.chain_name);
        if (auto v = r.take("nfs")) {
            sc.nfs = detail::split_ws(v->first);
            for (const std::string& n : sc.nfs)
                if (n != "firewall" && n != "ips" && n != "nat" && n != "lb")
                    fail(origin, v->second, "unknown NF '" + n + "' (firewall/ips/nat/lb)");
            if (sc.nfs.empty()) fail(origin, v->second, "empty NF list");
        }
        r.finish();
    }
    {
        auto r = reader("nf.firewall");
        std::string d = r.word("default", "forward");
        if (d != "forward" && d != "drop")
            fail(origin, sections["nf.firewall"].line, "default must be forward or drop");
        sc.fw_default = d == "drop" ? Action::Drop : Action::Forward;
        if (sections.count("nf.firewall"))
            for (const auto& [stmt, line] : sections["nf.firewall"].statements) {
                auto toks = detail::split_ws(stmt);
                if (toks.size() < 2 || toks[0] != "rule" ||
                    (toks[1] != "drop" && toks[1] != "forward"))
                    fail(origin, line, "expected: rule <drop|forward> [field=value ...]");
                AclRule rule;
                rule.action = toks[1] == "drop" ? Action::Drop : Action::Forward;
                for (std::size_t i = 2; i < toks.size(); ++i) {
                    std::size_t eq = toks[i].find('=');
                    if (eq == std::string::npos)
                        fail(origin, line, "expected field=value, got '" + toks[i] + "'");
                    std::string f = toks[i].substr(0, eq), v = toks[i].substr(eq + 1);
                    if (f == "src_ip") rule.src_ip = r.parse_ip(v, line);
                    else if (f == "dst_ip") rule.dst_ip = r.parse_ip(v, line);
                    else if (f == "src_port")
                        rule.src_port = static_cast<std::uint16_t>(r.parse_u64(v, line));
                    else if (f == "dst_port")
                        rule.dst_port = static_cast<std::uint16_t>(r.parse_u64(v, line));
                    else if (f == "proto")
                        rule.proto = v == "udp" ? Proto::Udp : Proto::Tcp;
                    else
                        fail(origin, line, "unknown ACL field '" + f + "'");
                }
                sc.acl.push_back(rule);
            }
        r.finish();
    }
    {
        auto r = reader("nf.ips");
        if (auto v = r.take("signatures"))
            for (const std::string& tok : detail::split_ws(v->first))
                sc.signatures.emplace_back(tok.begin(), tok.end());
        r.finish();
    }
    {
        auto r = reader("nf.nat");
        sc.nat_base = r.ip("ip_base", sc.nat_base);
        sc.nat_ips = static_cast<std::uint32_t>(r.u64("ips", sc.nat_ips));
        sc.nat_port_lo = static_cast<std::uint16_t>(r.u64("port_lo", sc.nat_port_lo));
        sc.nat_port_hi = static_cast<std::uint16_t>(r.u64("port_hi", sc.nat_port_hi));
        r.finish();
    }
    {
        auto r = reader("nf.lb");
        if (auto v = r.take("servers"))
            for (const std::string& tok : detail::split_ws(v->first)) {
                std::size_t colon = tok.rfind(':');
                if (colon == std::string::npos)
                    fail(origin, v->second, "server must be ip:port, got '" + tok + "'");
                ServerAddr s;
                s.ip = r.parse_ip(tok.substr(0, colon), v->second);
                s.port = static_cast<std::uint16_t>(r.parse_u64(tok.substr(colon + 1), v->second));
                sc.servers.push_back(s);
            }
        r.finish();
    }
    {
        auto r = reader("traffic");
        sc.traffic.flows = static_cast<std::uint32_t>(r.u64("flows", sc.traffic.flows));
        sc.traffic.packets_per_flow = r.u64("packets_per_flow", sc.traffic.packets_per_flow);
        sc.traffic.long_flow_fraction = r.real("long_flow_fraction", sc.traffic.long_flow_fraction);
        sc.traffic.long_flow_multiplier =
            r.u64("long_flow_multiplier", sc.traffic.long_flow_multiplier);
        sc.traffic.rate_pps = r.u64("rate", sc.traffic.rate_pps);
        sc.traffic.payload_bytes =
            static_cast<std::uint32_t>(r.u64("payload", sc.traffic.payload_bytes));
        sc.traffic.hostile_fraction = r.real("hostile_fraction", sc.traffic.hostile_fraction);
        std::string token = r.word("hostile_token", "");
        if (!token.empty()) sc.traffic.hostile_token = Bytes(token.begin(), token.end());
        sc.traffic.src_ip_base = r.ip("src_ip_base", sc.traffic.src_ip_base);
        sc.traffic.dst_ip = r.ip("dst_ip", sc.traffic.dst_ip);
        sc.traffic.dst_port = static_cast<std::uint16_t>(r.u64("dst_port", sc.traffic.dst_port));
        sc.traffic.proto = r.word("proto", "tcp") == "udp" ? Proto::Udp : Proto::Tcp;
        sc.traffic_start = r.duration("start", sc.traffic_start);
        sc.traffic_stop = r.duration("stop", sc.traffic_stop);
        r.finish();
    }
    {
        auto r = reader("transport");
        sc.link.delay = r.duration("delay", sc.link.delay);
        sc.link.jitter = r.duration("jitter", sc.link.jitter);
        sc.link.loss_prob = r.real("loss", sc.link.loss_prob);
        sc.link.reorder = r.boolean("reorder", sc.link.reorder);
        r.finish();
    }
    {
        auto r = reader("runtime");
        sc.runtime_cfg.pool_capacity = r.u64("pool", sc.runtime_cfg.pool_capacity);
        sc.runtime_cfg.expiry_timeout = r.duration("expiry", sc.runtime_cfg.expiry_timeout);
        sc.runtime_cfg.migration_step_deadline =
            r.duration("step_deadline", sc.runtime_cfg.migration_step_deadline);
        sc.runtime_cfg.target_buffer_cap = r.u64("buffer_cap", sc.runtime_cfg.target_buffer_cap);
        r.finish();
    }
    {
        auto r = reader("coordinator");
        sc.coordinator_cfg.heartbeat_period =
            r.duration("heartbeat", sc.coordinator_cfg.heartbeat_period);
        sc.coordinator_cfg.poll_period = r.duration("poll", sc.coordinator_cfg.poll_period);
        sc.coordinator_cfg.miss_limit =
            static_cast<int>(r.u64("miss_limit", sc.coordinator_cfg.miss_limit));
        sc.coordinator_cfg.overload_drop_delta =
            r.u64("overload_delta", sc.coordinator_cfg.overload_drop_delta);
        sc.coordinator_cfg.migration_batch = r.u64("batch", sc.coordinator_cfg.migration_batch);
        sc.coordinator_cfg.idle_poll_limit =
            static_cast<int>(r.u64("idle_polls", sc.coordinator_cfg.idle_poll_limit));
        sc.coordinator_cfg.idle_fraction =
            r.real("idle_fraction", sc.coordinator_cfg.idle_fraction);
        r.finish();
    }
    if (sections.count("ops")) {
        auto r = reader("ops");
        for (const auto& [stmt, line] : sections["ops"].statements) {
            auto toks = detail::split_ws(stmt);
            if (toks.size() < 3 || toks[0] != "at")
                fail(origin, line, "expected: at <time> <verb> [args...]");
            Scenario::Op op;
            op.at = r.parse_duration(toks[1], line);
            op.verb = toks[2];
            op.args.assign(toks.begin() + 3, toks.end());
            op.line = line;
            static const std::vector<std::string> verbs = {"kill",    "migrate", "silence",
                                                           "restore", "recover", "stop_traffic"};
            if (std::find(verbs.begin(), verbs.end(), op.verb) == verbs.end())
                fail(origin, line, "unknown op '" + op.verb + "'");
            static const std::map<std::string, std::size_t> arity = {
                {"kill", 1},    {"migrate", 3}, {"silence", 2},
                {"restore", 2}, {"recover", 2}, {"stop_traffic", 0}};
            if (op.args.size() != arity.at(op.verb))
                fail(origin, line,
                     "op '" + op.verb + "' takes " + std::to_string(arity.at(op.verb)) +
                         " argument(s)");
            sc.ops.push_back(std::move(op));
        }
        r.finish();
        std::stable_sort(sc.ops.begin(), sc.ops.end(),
                         [](const Scenario::Op& a, const Scenario::Op& b) { return a.at < b.at; });
    }
    if (sections.count("checks")) {
        auto r = reader("checks");
        sc.check_conservation = r.boolean("conservation", false);
        sc.check_output_commit = r.boolean("output_commit", false);
        for (const auto& [stmt, line] : sections["checks"].statements) {
            auto toks = detail::split_ws(stmt);
            if (toks.size() != 4 || toks[0] != "assert")
                fail(origin, line, "expected: assert <metric> <op> <metric|number>");
            static const std::vector<std::string> ops = {"==", "!=", "<=", ">=", "<", ">"};
            if (std::find(ops.begin(), ops.end(), toks[2]) == ops.end())
                fail(origin, line, "unknown comparison '" + toks[2] + "'");
            sc.asserts.push_back({toks[1], toks[2], toks[3], line});
        }
        r.finish();
    }

    if (sc.traffic_stop == kNoDeadline) sc.traffic_stop = sc.duration;
    bool uses_nat = std::find(sc.nfs.begin(), sc.nfs.end(), "nat") != sc.nfs.end();
    if (uses_nat && sc.nat_port_lo > sc.nat_port_hi)
        throw ScenarioError(origin + ": NAT port range is empty");
    bool uses_lb = std::find(sc.nfs.begin(), sc.nfs.end(), "lb") != sc.nfs.end();
    if (uses_lb && sc.servers.empty())
        throw ScenarioError(origin + ": chain uses lb but [nf.lb] lists no servers");
    return sc;
}

inline Scenario Scenario::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(path + ": cannot open scenario file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
}

}  // namespace flowactor
