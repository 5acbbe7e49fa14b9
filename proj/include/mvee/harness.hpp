#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mvee/builtins.hpp"
#include "mvee/runtime.hpp"

namespace mvee {

// ---------------------------------------------------------------------------
// Trial running and audits.
// ---------------------------------------------------------------------------

struct TrialReport {
    std::string workload;
    Strategy strategy = Strategy::None;
    std::uint32_t replicas = 1;
    std::uint32_t threads = 1;
    std::uint64_t seed = 0;
    RunResult::Outcome outcome = RunResult::Outcome::Equivalent;
    std::string detail;
    std::optional<DivergenceReport> divergence;
    std::vector<ReplicaStats> stats;
    std::string audit_failure;  // empty when every replay invariant held
    std::uint64_t total_steps = 0;
    double wall_seconds = 0.0;

    bool equivalent() const {
        return outcome == RunResult::Outcome::Equivalent && audit_failure.empty();
    }
};

namespace detail {

inline std::string check_stream_equality(const RunResult& res) {
    for (std::size_t r = 1; r < res.streams.size(); ++r) {
        if (res.streams[r].size() != res.streams[0].size())
            return "stream length mismatch: replica " + std::to_string(r);
        for (std::size_t i = 0; i < res.streams[0].size(); ++i)
            if (!(res.streams[r][i] == res.streams[0][i]))
                return "stream mismatch at event " + std::to_string(i) + " replica " +
                       std::to_string(r);
    }
    return {};
}

inline std::vector<OpTraceEntry> project_thread(const std::vector<OpTraceEntry>& trace,
                                                ThreadId t) {
    std::vector<OpTraceEntry> out;
    for (const auto& e : trace)
        if (e.thread == t) out.push_back(e);
    return out;
}

inline std::vector<OpTraceEntry> project_var(const std::vector<OpTraceEntry>& trace, VarId v) {
    std::vector<OpTraceEntry> out;
    for (const auto& e : trace)
        if (e.var == v) out.push_back(e);
    return out;
}

// Replay-order invariants, checked against the audit traces:
//  - every strategy preserves per-thread order (and results),
//  - TO preserves the exact global order,
//  - PO and WoC preserve per-word order.
inline std::string check_order_preservation(const RunResult& res, Strategy strategy,
                                            std::uint32_t threads, std::uint32_t vars) {
    if (res.op_trace.empty()) return {};
    const auto& master = res.op_trace[0];
    for (std::size_t r = 1; r < res.op_trace.size(); ++r) {
        const auto& slave = res.op_trace[r];
        if (master.size() != slave.size())
            return "op count mismatch: replica " + std::to_string(r);
        if (strategy == Strategy::TotalOrder && !(master == slave))
            return "total order not preserved: replica " + std::to_string(r);
        for (ThreadId t = 0; t < threads; ++t)
            if (project_thread(master, t) != project_thread(slave, t))
                return "per-thread order broken: replica " + std::to_string(r) + " thread " +
                       std::to_string(t);
        for (VarId v = 0; v < vars; ++v)
            if (project_var(master, v) != project_var(slave, v))
                return "per-word order broken: replica " + std::to_string(r) + " var " +
                       std::to_string(v);
    }
    return {};
}

// For each logical clock the recorded times across all per-thread rings must
// be exactly 0,1,2,... with no gaps or duplicates.
inline std::string check_woc_times(const RunResult& res) {
    std::unordered_map<std::uint32_t, std::vector<std::uint64_t>> by_clock;
    for (const auto& ring : res.woc_rings)
        for (const WocRecord& rec : ring) by_clock[rec.clock].push_back(rec.time);
    for (auto& [clock, times] : by_clock) {
        std::sort(times.begin(), times.end());
        for (std::size_t i = 0; i < times.size(); ++i)
            if (times[i] != i)
                return "clock " + std::to_string(clock) + " times have gaps or duplicates";
    }
    return {};
}

inline std::string check_ring_consumption(const Simulation& sim, std::uint32_t replicas) {
    const RingSet& rings = sim.rings();
    if (rings.shared) {
        for (std::uint32_t r = 1; r < replicas; ++r)
            if (rings.shared->progress(r) != rings.shared->head())
                return "replica " + std::to_string(r) + " left entries unconsumed";
    }
    for (std::size_t t = 0; t < rings.per_thread.size(); ++t)
        for (std::uint32_t r = 1; r < replicas; ++r)
            if (rings.per_thread[t]->progress(r) != rings.per_thread[t]->head())
                return "replica " + std::to_string(r) + " left ring " + std::to_string(t) +
                       " unconsumed";
    return {};
}

}  // namespace detail

inline TrialReport run_trial(const Workload& w, SimOptions opt) {
    if (opt.audit && is_wall_of_clocks(opt.strategy)) opt.dump_rings = true;
    Simulation sim(w, opt);
    RunResult res = sim.run();

    TrialReport report;
    report.workload = w.name;
    report.strategy = opt.strategy;
    report.replicas = opt.replicas;
    report.threads = w.thread_count();
    report.seed = opt.seed;
    report.outcome = res.outcome;
    report.detail = res.detail;
    report.divergence = res.divergence;
    report.stats = res.stats;
    report.total_steps = res.total_steps;
    report.wall_seconds = res.wall_seconds;

    if (res.outcome == RunResult::Outcome::Equivalent && opt.audit && opt.replicas > 1 &&
        opt.strategy != Strategy::None) {
        std::string err = detail::check_stream_equality(res);
        if (err.empty())
            err = detail::check_order_preservation(res, opt.strategy, w.thread_count(),
                                                   w.var_count());
        if (err.empty() && is_wall_of_clocks(opt.strategy)) err = detail::check_woc_times(res);
        if (err.empty()) err = detail::check_ring_consumption(sim, opt.replicas);
        report.audit_failure = err;
    } else if (res.outcome == RunResult::Outcome::Equivalent && opt.audit) {
        report.audit_failure = detail::check_stream_equality(res);
    }
    return report;
}

// N seeded trials; every one must come back Equivalent with clean audits.
inline std::vector<TrialReport> cmd_verify(const Workload& w, SimOptions base,
                                           std::uint32_t trials) {
    std::vector<TrialReport> out;
    out.reserve(trials);
    for (std::uint32_t i = 0; i < trials; ++i) {
        SimOptions opt = base;
        opt.seed = base.seed + i;
        out.push_back(run_trial(w, opt));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Exhaustive small-instance oracle: enumerate every master interleaving and
// demand that replay terminates with all order invariants intact.
// ---------------------------------------------------------------------------

struct InstanceTooLarge : std::runtime_error {
    InstanceTooLarge() : std::runtime_error("instance too large for exhaustive enumeration") {}
};

struct OracleResult {
    std::uint64_t interleavings = 0;
    bool hit_cap = false;
    std::string failure;                    // empty = all interleavings passed
    std::vector<std::uint32_t> bad_script;  // the counterexample schedule

    bool passed() const { return failure.empty() && !hit_cap; }
};

inline constexpr std::uint32_t kOracleMaxThreads = 3;
inline constexpr std::uint32_t kOracleMaxSyncStatements = 8;

inline OracleResult brute_force_oracle(const Workload& w, Strategy strategy, SimOptions base,
                                       std::uint64_t cap = 200000) {
    if (w.thread_count() > kOracleMaxThreads ||
        count_sync_statements(w) > kOracleMaxSyncStatements)
        throw InstanceTooLarge{};

    OracleResult result;
    std::vector<std::uint32_t> prefix;
    for (;;) {
        std::vector<EnumDecision> log;
        SimOptions opt = base;
        opt.strategy = strategy;
        opt.mode = SchedulerMode::MasterEnum;
        opt.master_script = &prefix;
        opt.decision_log = &log;
        opt.audit = true;
        opt.max_steps = 200000;
        opt.timeout_seconds = 30.0;
        TrialReport trial = run_trial(w, opt);
        ++result.interleavings;
        if (!trial.equivalent()) {
            result.failure = trial.audit_failure.empty()
                                 ? std::string(outcome_name(trial.outcome)) +
                                       (trial.detail.empty() ? "" : ": " + trial.detail)
                                 : trial.audit_failure;
            result.bad_script = prefix;
            return result;
        }
        if (result.interleavings >= cap) {
            result.hit_cap = true;
            return result;
        }
        // deepest decision that still has an untried branch
        std::size_t i = log.size();
        while (i > 0 && log[i - 1].chosen + 1 >= log[i - 1].options) --i;
        if (i == 0) break;
        prefix.clear();
        for (std::size_t k = 0; k + 1 < i; ++k) prefix.push_back(log[k].chosen);
        prefix.push_back(log[i - 1].chosen + 1);
    }
    return result;
}

// Seeded generator for the oracle's workload family: 2-3 threads, at most 8
// sync statements over one or two lock-protected words.
inline Workload gen_small_workload(std::uint64_t seed) {
    SmallRng rng(hash_combine(seed, 0x57474542ull));
    detail::Builder b("gen-" + std::to_string(seed));
    std::uint32_t threads = 2 + static_cast<std::uint32_t>(rng.below(2));
    std::uint32_t words = 1 + static_cast<std::uint32_t>(rng.below(2));
    std::vector<VarId> m(words), d(words);
    for (std::uint32_t k = 0; k < words; ++k) {
        m[k] = b.var("m" + std::to_string(k));
        d[k] = b.var("d" + std::to_string(k));
    }
    std::uint32_t budget = kOracleMaxSyncStatements;
    auto emit_block = [&](std::vector<Statement>& out) {
        std::uint32_t k = static_cast<std::uint32_t>(rng.below(words));
        switch (rng.below(3)) {
            case 0:  // lock; unlock
                if (budget < 2) return;
                out.push_back(detail::st(StmtKind::Lock, m[k]));
                out.push_back(detail::st(StmtKind::Unlock, m[k]));
                budget -= 2;
                break;
            case 1:  // lock; store; unlock
                if (budget < 3) return;
                out.push_back(detail::st(StmtKind::Lock, m[k]));
                out.push_back(detail::st(StmtKind::Store, d[k], rng.below(100)));
                out.push_back(detail::st(StmtKind::Unlock, m[k]));
                budget -= 3;
                break;
            default:  // bare atomic store
                if (budget < 1) return;
                out.push_back(detail::st(StmtKind::Store, d[k], rng.below(100)));
                budget -= 1;
                break;
        }
    };

    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    std::vector<std::vector<Statement>> worker(threads);
    for (std::uint32_t round = 0; round < 2; ++round)
        for (std::uint32_t t = 1; t < threads; ++t)
            if (rng.below(100) < 80) emit_block(worker[t]);
    if (rng.below(100) < 40) emit_block(t0);
    for (std::uint32_t t = 1; t < threads; ++t) {
        if (worker[t].empty()) {
            worker[t].push_back(detail::st(StmtKind::Store, d[0], t));
        }
        for (Statement& s : worker[t]) b.thread(t).push_back(std::move(s));
    }
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    return b.w;
}

// ---------------------------------------------------------------------------
// Benchmarks: median-of-five wall times (first run discarded), native
// baseline = same workload, one replica, no agent.
// ---------------------------------------------------------------------------

struct BenchRow {
    std::string workload;
    Strategy strategy = Strategy::None;
    std::uint32_t threads = 0;
    std::uint32_t replicas = 0;
    double median_wall = 0.0;
    double native_wall = 0.0;
    double overhead = 0.0;
    std::uint64_t master_sync_ops = 0;
    std::uint64_t slave_stalls = 0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

namespace detail {

inline double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    return xs[xs.size() / 2];
}

}  // namespace detail

inline double bench_median_wall(const Workload& w, SimOptions opt, std::uint32_t runs,
                                ReplicaStats* master_stats = nullptr,
                                std::uint64_t* slave_stalls = nullptr) {
    std::vector<double> walls;
    for (std::uint32_t i = 0; i < runs; ++i) {
        SimOptions o = opt;
        o.seed = opt.seed + i;
        o.audit = false;
        o.dump_rings = false;
        Simulation sim(w, o);
        RunResult res = sim.run();
        if (res.outcome != RunResult::Outcome::Equivalent)
            throw std::runtime_error("bench run did not complete cleanly");
        if (i == 0) continue;  // warm-up run discarded
        walls.push_back(res.wall_seconds);
        if (master_stats) *master_stats = res.stats[0];
        if (slave_stalls && res.stats.size() > 1) *slave_stalls = res.stats[1].replay_stalls;
    }
    return detail::median_of(std::move(walls));
}

inline BenchRow bench_one(const Workload& w, Strategy strategy, std::uint32_t replicas,
                          std::uint64_t seed, std::uint32_t runs = 5) {
    BenchRow row;
    row.workload = w.name;
    row.strategy = strategy;
    row.threads = w.thread_count();
    row.replicas = replicas;

    SimOptions native;
    native.strategy = Strategy::None;
    native.replicas = 1;
    native.seed = seed;
    row.native_wall = bench_median_wall(w, native, runs);

    SimOptions repl;
    repl.strategy = strategy;
    repl.replicas = replicas;
    repl.seed = seed;
    ReplicaStats master{};
    std::uint64_t stalls = 0;
    row.median_wall = bench_median_wall(w, repl, runs, &master, &stalls);
    row.master_sync_ops = master.sync_ops;
    row.slave_stalls = stalls;
    row.overhead = row.native_wall > 0 ? row.median_wall / row.native_wall : 0.0;
    return row;
}

// ---------------------------------------------------------------------------
// Security scenarios.
// ---------------------------------------------------------------------------

enum class AttackScenario : std::uint8_t { TamperSyscallArg, TamperBufferPayload, ScanForBuffer };

inline const char* attack_name(AttackScenario s) {
    switch (s) {
        case AttackScenario::TamperSyscallArg: return "tamper-syscall-arg";
        case AttackScenario::TamperBufferPayload: return "tamper-buffer-payload";
        case AttackScenario::ScanForBuffer: return "scan-for-buffer";
    }
    return "?";
}

struct AttackReport {
    AttackScenario scenario = AttackScenario::TamperSyscallArg;
    bool detected = false;   // the expected defense triggered
    std::string detail;
    RunResult::Outcome outcome = RunResult::Outcome::Equivalent;
};

// Flip one byte of a slave's syscall payload; the lock-step comparison must
// flag exactly that event.
inline AttackReport attack_tamper_syscall(std::uint64_t seed) {
    Workload w = make_syscall_heavy(3, 6);
    SimOptions opt;
    opt.strategy = Strategy::WallOfClocks;
    opt.replicas = 2;
    opt.seed = seed;
    opt.tamper.kind = TamperSpec::Kind::SyscallArg;
    opt.tamper.replica = 1;
    opt.tamper.at = 6 + seed % 8;
    Simulation sim(w, opt);
    RunResult res = sim.run();

    AttackReport rep;
    rep.scenario = AttackScenario::TamperSyscallArg;
    rep.outcome = res.outcome;
    if (res.outcome != RunResult::Outcome::Divergence || !res.divergence) {
        rep.detail = "tampering went undetected";
        return rep;
    }
    if (!res.tampered_event) {
        rep.detail = "tamper hook never fired";
        return rep;
    }
    auto [thread, index] = *res.tampered_event;
    if (res.divergence->thread != thread || res.divergence->event_index != index) {
        rep.detail = "divergence reported at the wrong event";
        return rep;
    }
    rep.detected = true;
    return rep;
}

// The master writes a fabricated record into the replication buffer. The
// slave may stall or flag a replay mismatch; what it must never do is emit a
// different external event stream.
inline AttackReport attack_tamper_buffer(Strategy strategy, std::uint64_t seed) {
    Workload w = make_finegrain(3, 16, 32);
    SimOptions benign;
    benign.strategy = strategy;
    benign.replicas = 2;
    benign.seed = seed;
    Simulation ref_sim(w, benign);
    RunResult ref = ref_sim.run();

    SimOptions opt = benign;
    opt.tamper.kind = TamperSpec::Kind::BufferPayload;
    opt.tamper.at = 5 + seed % 16;
    opt.timeout_seconds = 5.0;
    Simulation sim(w, opt);
    RunResult res = sim.run();

    AttackReport rep;
    rep.scenario = AttackScenario::TamperBufferPayload;
    rep.outcome = res.outcome;
    if (res.outcome == RunResult::Outcome::Equivalent) {
        rep.detail = "fabricated record went unnoticed";
        return rep;
    }
    // external output must be an unaltered prefix of the benign run's
    if (res.external_output.size() > ref.external_output.size()) {
        rep.detail = "tampered run produced extra external events";
        return rep;
    }
    for (std::size_t i = 0; i < res.external_output.size(); ++i) {
        if (res.external_output[i] != ref.external_output[i]) {
            rep.detail = "tampered run altered an external event";
            return rep;
        }
    }
    rep.detected = true;
    return rep;
}

// Scan every cell of every replica's simulated memory for the ring location
// at scheduler points. The secured agent must never leak it.
inline AttackReport attack_scan_for_buffer(Strategy strategy, std::uint64_t seed,
                                           std::uint32_t min_scans = 1000) {
    Workload w = make_finegrain(3, 24, 32);
    SimOptions opt;
    opt.strategy = strategy;
    opt.replicas = 2;
    opt.seed = seed;
    std::uint64_t hits = 0;
    std::uint64_t scans = 0;
    opt.hook_every = 8;
    opt.step_hook = [&](const Simulation& sim) {
        ++scans;
        for (std::uint32_t r = 0; r < sim.replica_count(); ++r) {
            std::uint64_t location = sim.ring_location(r);
            for (std::uint64_t cell : sim.arena(r))
                if (cell == location) ++hits;
        }
    };
    Simulation sim(w, opt);
    RunResult res = sim.run();

    AttackReport rep;
    rep.scenario = AttackScenario::ScanForBuffer;
    rep.outcome = res.outcome;
    if (res.outcome != RunResult::Outcome::Equivalent) {
        rep.detail = "scan run did not complete";
        return rep;
    }
    if (scans < min_scans) {
        rep.detail = "not enough scheduler points sampled: " + std::to_string(scans);
        return rep;
    }
    if (strategy == Strategy::SecuredWallOfClocks) {
        rep.detected = hits == 0;
        if (!rep.detected) rep.detail = "ring location leaked into replica memory";
    } else {
        // the unsecured agents do keep a reachable pointer
        rep.detected = hits > 0;
        if (!rep.detected) rep.detail = "expected the unsecured agent's pointer to be visible";
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Buffer placement guess probability: (buffer pages) out of the addressable
// pages, minus the two the ABI reserves.
// ---------------------------------------------------------------------------

inline double guess_probability(std::uint64_t buffer_bytes, std::uint64_t page_bytes,
                                std::uint32_t address_bits) {
    std::uint64_t pages = buffer_bytes / page_bytes;
    std::uint32_t page_shift = static_cast<std::uint32_t>(std::countr_zero(page_bytes));
    long double total = std::pow(2.0L, static_cast<int>(address_bits - page_shift)) - 2.0L;
    return static_cast<double>(pages / total);
}

// Event streams with the single registration event removed; the remainder is
// what agents must leave untouched.
inline std::vector<NormalizedEvent> strip_register(const std::vector<NormalizedEvent>& stream) {
    std::vector<NormalizedEvent> out;
    out.reserve(stream.size());
    for (const auto& e : stream)
        if (e.call != RvpCall::AgentRegister) out.push_back(e);
    return out;
}

}  // namespace mvee
