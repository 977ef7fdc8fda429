// Command-line front end: run scenario files, diff state dumps, audit
// coordinator decision logs.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "flowactor/harness.hpp"

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spill(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

int cmd_run(const std::string& scenario_path, const std::string& mode_flag, std::uint64_t seed,
            const std::string& out_path, const std::string& dump_path) {
    flowactor::Scenario sc = flowactor::Scenario::parse_file(scenario_path);
    std::string mode = mode_flag.empty() ? sc.mode : mode_flag;
    if (mode != "deterministic" && mode != "benchmark")
        throw flowactor::ScenarioError("unknown mode '" + mode + "'");

    flowactor::RunResult res = mode == "benchmark" ? flowactor::run_benchmark(sc, seed)
                                                   : flowactor::run_scenario(sc, seed);

    if (!out_path.empty()) spill(out_path, res.metrics.dump(2) + "\n");
    if (!dump_path.empty()) spill(dump_path, res.state.dump(2) + "\n");
    if (!res.coordinator_ndjson.empty() && !out_path.empty()) {
        spill(out_path + ".coordinator.ndjson", res.coordinator_ndjson);
    }

    std::cout << res.metrics.dump(2) << "\n";
    for (const std::string& f : res.failures) std::cerr << "FAIL " << f << "\n";
    std::cout << (res.ok ? "ok" : "failed") << ": " << sc.name << " (" << mode << ")\n";
    return res.ok ? 0 : 1;
}

int cmd_compare(const std::string& a_path, const std::string& b_path) {
    nlohmann::json a = nlohmann::json::parse(slurp(a_path));
    nlohmann::json b = nlohmann::json::parse(slurp(b_path));
    flowactor::CompareResult cmp = flowactor::compare_dumps(a, b);
    for (const std::string& d : cmp.diffs) std::cerr << "DIFF " << d << "\n";
    std::cout << (cmp.equal ? "equal" : "different") << "\n";
    return cmp.equal ? 0 : 1;
}

int cmd_replay(const std::string& log_path) {
    auto log = flowactor::ndjson_to_log(slurp(log_path));
    flowactor::ReplayResult res = flowactor::replay_log(log);
    for (const std::string& i : res.issues) std::cerr << "ISSUE " << i << "\n";
    std::cout << res.entries << " entries, " << res.decisions << " decisions audited: "
              << (res.ok() ? "consistent" : "inconsistent") << "\n";
    return res.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowactor: deterministic NFV flow-actor simulator"};
    app.require_subcommand(1);

    std::string scenario_path, mode_flag, out_path, dump_path;
    std::uint64_t seed = 0;
    CLI::App* run = app.add_subcommand("run", "execute a scenario file");
    run->add_option("scenario", scenario_path, "scenario file")->required();
    run->add_option("--mode", mode_flag, "deterministic or benchmark (default: from scenario)");
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--out", out_path, "write metrics JSON here");
    run->add_option("--dump-state", dump_path, "write the final state dump here");

    std::string cmp_a, cmp_b;
    CLI::App* compare = app.add_subcommand("compare", "diff two state dumps");
    compare->add_option("a", cmp_a, "first dump")->required();
    compare->add_option("b", cmp_b, "second dump")->required();

    std::string log_path;
    CLI::App* replay = app.add_subcommand("replay-log", "audit a coordinator decision log");
    replay->add_option("log", log_path, "NDJSON decision log")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(scenario_path, mode_flag, seed, out_path, dump_path);
        if (compare->parsed()) return cmd_compare(cmp_a, cmp_b);
        if (replay->parsed()) return cmd_replay(log_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
