// mvee: run, verify, benchmark and attack the synchronization replication
// lab from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mvee/harness.hpp"
#include "mvee/report_io.hpp"
#include "mvee/runtime.hpp"
#include "mvee/syncid.hpp"

namespace {

using namespace mvee;

std::optional<Strategy> parse_strategy(const std::string& s) {
    if (s == "to") return Strategy::TotalOrder;
    if (s == "po") return Strategy::PartialOrder;
    if (s == "woc") return Strategy::WallOfClocks;
    if (s == "swoc") return Strategy::SecuredWallOfClocks;
    if (s == "none") return Strategy::None;
    return std::nullopt;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_output(const std::string& path, const std::string& content) {
    if (path.empty()) {
        std::cout << content << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

struct CommonOpts {
    std::string workload = "builtin:finegrain";
    std::string strategy = "woc";
    std::uint32_t replicas = 2;
    std::uint32_t threads = 4;
    std::uint64_t seed = 1;
    std::uint32_t trials = 100;
    std::uint32_t clocks = 4096;
    std::uint32_t ring_capacity = 1u << 16;
    std::optional<std::uint32_t> ops;
    std::string out_path;
    std::string format = "json";
    bool no_arbitration = false;
};

Workload resolve_workload(const std::string& spec, std::uint32_t threads,
                          std::optional<std::uint32_t> ops) {
    if (spec.rfind("builtin:", 0) == 0) {
        std::string name = spec.substr(8);
        BuiltinParams p;
        p.threads = threads;
        p.ops = ops;
        auto w = make_builtin(name, p);
        if (!w) throw std::runtime_error("unknown builtin workload '" + name + "'");
        return *w;
    }
    return parse_workload(read_file(spec), spec);
}

SimOptions make_sim_options(const CommonOpts& c) {
    SimOptions opt;
    auto strat = parse_strategy(c.strategy);
    if (!strat) throw CLI::ValidationError("--strategy", "expected to|po|woc|swoc|none");
    opt.strategy = *strat;
    opt.replicas = c.replicas;
    opt.seed = c.seed;
    opt.clocks = c.clocks;
    opt.ring_capacity = c.ring_capacity;
    opt.arbitrate_futex = !c.no_arbitration;
    return opt;
}

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--workload", c.workload, "workload file or builtin:NAME");
    cmd->add_option("--strategy", c.strategy, "to|po|woc|swoc|none");
    cmd->add_option("--replicae", c.replicas, "replica count (1 master + slaves)");
    cmd->add_option("--threads", c.threads, "thread count for builtin workloads");
    cmd->add_option("--seed", c.seed, "base seed");
    cmd->add_option("--trials", c.trials, "trial count");
    cmd->add_option("--clocks", c.clocks, "logical clock count for woc/swoc");
    cmd->add_option("--ring-capacity", c.ring_capacity, "ring capacity (power of two)");
    cmd->add_option("--ops", c.ops, "per-thread op count for builtin workloads");
    cmd->add_option("--out", c.out_path, "output file (default: stdout)");
    cmd->add_option("--format", c.format, "json|csv");
    cmd->add_flag("--no-arbitration", c.no_arbitration,
                  "disable monitor futex arbitration (hazard demo)");
}

int cmd_run(const CommonOpts& c) {
    Workload w = resolve_workload(c.workload, c.threads, c.ops);
    TrialReport t = run_trial(w, make_sim_options(c));
    write_output(c.out_path, to_json(t).dump(2));
    return t.equivalent() ? 0 : 1;
}

int cmd_verify_cli(const CommonOpts& c) {
    Workload w = resolve_workload(c.workload, c.threads, c.ops);
    auto trials = cmd_verify(w, make_sim_options(c), c.trials);
    std::uint32_t failures = 0;
    json jt = json::array();
    for (const auto& t : trials) {
        if (!t.equivalent()) ++failures;
        jt.push_back(to_json(t));
    }
    json summary{{"workload", w.name},
                 {"strategy", c.strategy},
                 {"replicae", c.replicas},
                 {"trials", c.trials},
                 {"failures", failures},
                 {"trial_reports", jt}};
    if (c.format == "csv")
        write_output(c.out_path, trials_csv(trials));
    else
        write_output(c.out_path, summary.dump(2));
    std::fprintf(stderr, "verify: %u/%u equivalent\n", c.trials - failures, c.trials);
    return failures == 0 ? 0 : 1;
}

int cmd_bench_cli(const CommonOpts& c, const std::string& strategies,
                  const std::string& thread_list, const std::string& replica_list) {
    BenchReport report;
    for (const std::string& wspec : split_csv(c.workload)) {
        for (const std::string& tstr : split_csv(thread_list.empty() ? std::to_string(c.threads)
                                                                      : thread_list)) {
            std::uint32_t threads = static_cast<std::uint32_t>(std::stoul(tstr));
            Workload w = resolve_workload(wspec, threads, c.ops);
            for (const std::string& sstr :
                 split_csv(strategies.empty() ? c.strategy : strategies)) {
                auto strat = parse_strategy(sstr);
                if (!strat || *strat == Strategy::None)
                    throw CLI::ValidationError("--strategy", "bench needs to|po|woc|swoc");
                for (const std::string& rstr : split_csv(
                         replica_list.empty() ? std::to_string(c.replicas) : replica_list)) {
                    std::uint32_t replicas = static_cast<std::uint32_t>(std::stoul(rstr));
                    report.rows.push_back(bench_one(w, *strat, replicas, c.seed));
                }
            }
        }
    }
    if (c.format == "csv")
        write_output(c.out_path, bench_csv(report));
    else
        write_output(c.out_path, to_json(report).dump(2));
    return 0;
}

int cmd_fuzz(const CommonOpts& c) {
    std::vector<Strategy> strategies;
    for (const std::string& s : split_csv(c.strategy)) {
        auto strat = parse_strategy(s);
        if (!strat || *strat == Strategy::None)
            throw CLI::ValidationError("--strategy", "fuzz needs to|po|woc|swoc");
        strategies.push_back(*strat);
    }
    std::uint32_t checked = 0;
    std::uint64_t interleavings = 0;
    for (std::uint32_t i = 0; i < c.trials; ++i) {
        Workload w;
        std::uint64_t inst_seed = c.seed + i;
        for (std::uint32_t attempt = 0;; ++attempt) {
            w = gen_small_workload(hash_combine(inst_seed, attempt));
            SimOptions opt = make_sim_options(c);
            opt.replicas = c.replicas < 2 ? 2 : c.replicas;
            try {
                bool ok = true;
                std::uint64_t count = 0;
                for (Strategy strat : strategies) {
                    OracleResult res = brute_force_oracle(w, strat, opt, 50000);
                    if (res.hit_cap) throw InstanceTooLarge{};
                    count += res.interleavings;
                    if (!res.passed()) {
                        std::fprintf(stderr, "fuzz: instance %u failed under %s: %s\n", i,
                                     strategy_name(strat), res.failure.c_str());
                        std::printf("%s\n", print_workload(w).c_str());
                        return 1;
                    }
                }
                interleavings += count;
                ok = true;
                if (ok) break;
            } catch (const InstanceTooLarge&) {
                continue;  // resample
            }
        }
        ++checked;
    }
    std::fprintf(stderr, "fuzz: %u instances, %llu interleavings, all equivalent\n", checked,
                 static_cast<unsigned long long>(interleavings));
    return 0;
}

int cmd_attack(const CommonOpts& c, const std::string& scenario) {
    json results = json::array();
    bool all_ok = true;
    auto run_scenario = [&](AttackScenario s) {
        for (std::uint32_t i = 0; i < c.trials; ++i) {
            AttackReport rep;
            switch (s) {
                case AttackScenario::TamperSyscallArg: rep = attack_tamper_syscall(c.seed + i); break;
                case AttackScenario::TamperBufferPayload: {
                    auto strat = parse_strategy(c.strategy);
                    rep = attack_tamper_buffer(strat.value_or(Strategy::WallOfClocks), c.seed + i);
                    break;
                }
                case AttackScenario::ScanForBuffer:
                    rep = attack_scan_for_buffer(Strategy::SecuredWallOfClocks, c.seed + i);
                    break;
            }
            all_ok &= rep.detected;
            results.push_back(json{{"scenario", attack_name(rep.scenario)},
                                   {"trial", i},
                                   {"detected", rep.detected},
                                   {"outcome", outcome_name(rep.outcome)},
                                   {"detail", rep.detail}});
        }
    };
    if (scenario == "tamper-syscall-arg") run_scenario(AttackScenario::TamperSyscallArg);
    else if (scenario == "tamper-buffer-payload") run_scenario(AttackScenario::TamperBufferPayload);
    else if (scenario == "scan-for-buffer") run_scenario(AttackScenario::ScanForBuffer);
    else if (scenario == "all") {
        run_scenario(AttackScenario::TamperSyscallArg);
        run_scenario(AttackScenario::TamperBufferPayload);
        run_scenario(AttackScenario::ScanForBuffer);
    } else {
        throw CLI::ValidationError("--scenario",
                                   "tamper-syscall-arg|tamper-buffer-payload|scan-for-buffer|all");
    }
    write_output(c.out_path, json{{"results", results}}.dump(2));
    return all_ok ? 0 : 1;
}

int cmd_classify(const std::string& listing_path, const std::string& debug_map_path,
                 const std::string& intrinsics_path, const std::string& out_path) {
    auto instrs = syncid::parse_listing(read_file(listing_path));
    auto classified = syncid::classify(instrs);
    std::unordered_map<std::uint64_t, std::pair<std::string, std::uint32_t>> dmap;
    if (!debug_map_path.empty()) dmap = syncid::parse_debug_map(read_file(debug_map_path));
    auto plan = syncid::plan_wrapping(instrs, classified, dmap);
    json j = to_json(classified, instrs, plan);
    if (!intrinsics_path.empty()) {
        std::vector<std::pair<std::string, std::uint32_t>> intrinsics;
        std::stringstream ss(read_file(intrinsics_path));
        std::string name;
        std::uint32_t arity;
        while (ss >> name >> arity) intrinsics.emplace_back(name, arity);
        j["wrapper_header"] = syncid::generate_wrapper_header(intrinsics);
    }
    write_output(out_path, j.dump(2));
    return 0;
}

int cmd_guess_prob(std::uint64_t buffer_bytes, std::uint64_t page_bytes,
                   std::uint32_t address_bits, const std::string& out_path) {
    double p = guess_probability(buffer_bytes, page_bytes, address_bits);
    json j{{"buffer_bytes", buffer_bytes},
           {"page_bytes", page_bytes},
           {"address_bits", address_bits},
           {"probability", p}};
    write_output(out_path, j.dump(2));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-variant synchronization replication lab"};
    app.require_subcommand(1);

    CommonOpts c;
    std::string scenario = "all";
    std::string bench_strategies = "to,po,woc,swoc";
    std::string bench_threads;
    std::string bench_replicas;
    std::string listing_path, debug_map_path, intrinsics_path;
    std::uint64_t buffer_bytes = 256ull * 1024 * 1024;
    std::uint64_t page_bytes = 4096;
    std::uint32_t address_bits = 48;

    CLI::App* run = app.add_subcommand("run", "run one seeded trial");
    add_common(run, c);
    CLI::App* verify = app.add_subcommand("verify", "N seeded trials, fail on any divergence");
    add_common(verify, c);
    CLI::App* bench = app.add_subcommand("bench", "overhead vs native, median of 5");
    add_common(bench, c);
    bench->add_option("--strategies", bench_strategies, "comma list of strategies");
    bench->add_option("--thread-counts", bench_threads, "comma list of thread counts");
    bench->add_option("--replica-counts", bench_replicas, "comma list of replica counts");
    CLI::App* fuzz = app.add_subcommand("fuzz", "exhaustively check generated small instances");
    add_common(fuzz, c);
    CLI::App* attack = app.add_subcommand("attack", "security scenarios");
    add_common(attack, c);
    attack->add_option("--scenario", scenario,
                       "tamper-syscall-arg|tamper-buffer-payload|scan-for-buffer|all");
    CLI::App* classify = app.add_subcommand("classify", "classify a disassembly listing");
    classify->add_option("listing", listing_path, "listing file")->required();
    classify->add_option("--debug-map", debug_map_path, "ADDR file:line map");
    classify->add_option("--intrinsics", intrinsics_path, "intrinsics list (name arity per line)");
    classify->add_option("--out", c.out_path, "output json path");
    CLI::App* guess = app.add_subcommand("guess-prob", "buffer placement guess probability");
    guess->add_option("--buffer-bytes", buffer_bytes, "buffer size in bytes");
    guess->add_option("--page-bytes", page_bytes, "page size in bytes");
    guess->add_option("--address-bits", address_bits, "user address bits");
    guess->add_option("--out", c.out_path, "output json path");

    try {
        app.parse(argc, argv);
        if (run->parsed()) return cmd_run(c);
        if (verify->parsed()) return cmd_verify_cli(c);
        if (bench->parsed()) return cmd_bench_cli(c, bench_strategies, bench_threads, bench_replicas);
        if (fuzz->parsed()) return cmd_fuzz(c);
        if (attack->parsed()) return cmd_attack(c, scenario);
        if (classify->parsed())
            return cmd_classify(listing_path, debug_map_path, intrinsics_path, c.out_path);
        if (guess->parsed()) return cmd_guess_prob(buffer_bytes, page_bytes, address_bits, c.out_path);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 2;
}
