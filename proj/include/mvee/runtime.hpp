#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mvee/agents.hpp"
#include "mvee/builtins.hpp"
#include "mvee/core.hpp"
#include "mvee/futex.hpp"
#include "mvee/lowering.hpp"
#include "mvee/monitor.hpp"
#include "mvee/ring.hpp"
#include "mvee/workload.hpp"

namespace mvee {

inline constexpr std::uint64_t kMasterPid = 4242;

inline void burn_compute_unit() {
    volatile std::uint64_t x = 0x9E3779B97F4A7C15ull;
    for (int i = 0; i < 24; ++i) x = x * 6364136223846793005ull + 1442695040888963407ull;
}

struct TamperSpec {
    enum class Kind : std::uint8_t { None, SyscallArg, BufferPayload };
    Kind kind = Kind::None;
    std::uint32_t replica = 0;  // SyscallArg: the deviating replica
    std::uint64_t at = 0;       // SyscallArg: n-th event of that replica; BufferPayload: n-th record
};

enum class SchedulerMode : std::uint8_t { Seeded, MasterEnum };

struct EnumDecision {
    std::uint32_t chosen = 0;
    std::uint32_t options = 0;
};

struct SimOptions {
    Strategy strategy = Strategy::None;
    std::uint32_t replicas = 1;
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> address_seed;  // defaults to a value derived from seed
    std::uint32_t clocks = 4096;
    std::uint32_t ring_capacity = 1u << 16;
    std::uint32_t po_window = 256;
    bool arbitrate_futex = true;
    bool audit = true;
    bool dump_rings = false;
    std::uint64_t max_steps = 20'000'000;
    double timeout_seconds = 10.0;
    TamperSpec tamper{};

    SchedulerMode mode = SchedulerMode::Seeded;
    const std::vector<std::uint32_t>* master_script = nullptr;  // MasterEnum
    std::vector<EnumDecision>* decision_log = nullptr;          // MasterEnum
    bool enum_slave_reverse = false;

    // Called every hook_every steps; the security harness uses this to scan
    // replica memory at scheduler points.
    std::function<void(const class Simulation&)> step_hook;
    std::uint32_t hook_every = 0;
};

struct ReplicaStats {
    std::uint64_t steps = 0;
    std::uint64_t sync_ops = 0;
    std::uint64_t recorded = 0;
    std::uint64_t replayed = 0;
    std::uint64_t replay_stalls = 0;
    std::uint64_t publish_stalls = 0;
    std::uint64_t futex_waits = 0;
    std::uint64_t futex_wakes = 0;
    std::uint64_t rvps = 0;
    std::uint64_t plain_ops = 0;
};

struct OpTraceEntry {
    ThreadId thread = 0;
    VarId var = 0;
    OpKind kind = OpKind::AtomicLoad;
    std::uint64_t value = 0;
    friend bool operator==(const OpTraceEntry&, const OpTraceEntry&) = default;
};

struct RunResult {
    enum class Outcome : std::uint8_t { Equivalent, Divergence, Deadlock };
    Outcome outcome = Outcome::Equivalent;
    std::string detail;
    std::optional<DivergenceReport> divergence;
    std::vector<std::vector<NormalizedEvent>> streams;   // per replica
    std::vector<ReplicaStats> stats;                     // per replica
    std::vector<std::string> external_output;
    std::vector<std::vector<OpTraceEntry>> op_trace;     // per replica (audit)
    std::vector<std::vector<WocRecord>> woc_rings;       // per master thread (dump)
    std::vector<SyncOpRecord> shared_ring;               // TO/PO (dump)
    std::optional<std::pair<ThreadId, std::uint64_t>> tampered_event;
    std::uint64_t total_steps = 0;
    double wall_seconds = 0.0;
    std::uint32_t threads = 0;
};

inline const char* outcome_name(RunResult::Outcome o) {
    switch (o) {
        case RunResult::Outcome::Equivalent: return "equivalent";
        case RunResult::Outcome::Divergence: return "divergence";
        case RunResult::Outcome::Deadlock: return "deadlock";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// One full multi-replica execution: replica 0 records, the others replay,
// the monitor keeps every virtual syscall in lock-step. Replica threads are
// simulated execution contexts driven by a seeded preemptive scheduler
// (random quantum of 1..16 primitive ops), which makes every run
// reproducible from its seed.
// ---------------------------------------------------------------------------

class Simulation {
public:
    Simulation(Workload workload, SimOptions opt)
        : wl_(std::move(workload)), opt_(opt),
          mon_(Monitor::Config{opt.replicas, opt.seed, opt.arbitrate_futex}),
          sched_rng_(hash_combine(opt.seed, 0x5343484544ull)) {
        code_ = compile_workload(wl_);
        setup_replicas();
    }

    RunResult run() {
        auto t0 = std::chrono::steady_clock::now();
        const std::uint64_t stall_threshold =
            4096 + 256ull * opt_.replicas * wl_.thread_count();
        std::uint64_t last_progress = progress_;
        std::uint64_t steps_at_progress = 0;
        while (!failed_) {
            if (all_done()) break;
            bool stepped = opt_.mode == SchedulerMode::Seeded ? dispatch_seeded() : dispatch_enum();
            if (mon_.divergence() && !failed_) {
                fail_divergence();
                break;
            }
            if (!stepped) {
                fail_deadlock("all threads blocked");
                break;
            }
            if (progress_ != last_progress) {
                last_progress = progress_;
                steps_at_progress = steps_;
            } else if (steps_ - steps_at_progress > stall_threshold) {
                fail_deadlock("replay stall cycle");
                break;
            }
            if (steps_ > opt_.max_steps) {
                fail_deadlock("step budget exceeded");
                break;
            }
            if ((steps_ & 0x3FFF) == 0) {
                std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
                if (dt.count() > opt_.timeout_seconds) {
                    fail_deadlock("rendezvous timeout");
                    break;
                }
            }
            if (opt_.step_hook && opt_.hook_every && (steps_ % opt_.hook_every) == 0)
                opt_.step_hook(*this);
        }
        std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
        return finalize(dt.count());
    }

    // introspection (tests, hooks, audits)
    std::uint32_t replica_count() const { return opt_.replicas; }
    const std::vector<std::uint64_t>& arena(std::uint32_t r) const { return reps_[r].arena; }
    const AddressMap& address_map(std::uint32_t r) const { return reps_[r].amap; }
    std::uint64_t ring_location(std::uint32_t r) const { return mon_.hidden_location(r); }
    const RingSet& rings() const { return rings_; }
    const Monitor& monitor() const { return mon_; }
    const Workload& workload() const { return wl_; }

private:
    struct ThreadCtx {
        enum class St : std::uint8_t { Unstarted, Runnable, ParkedRvp, ParkedFutex, Done };
        St st = St::Unstarted;
        std::uint32_t stmt = 0;
        std::uint32_t upc = 0;
        std::uint64_t res = 0;
        std::uint64_t saved = 0;
        std::uint64_t compute_left = 0;
        bool register_pending = false;
    };

    struct Rep {
        std::uint32_t ordinal = 0;
        AddressMap amap;
        std::vector<std::uint64_t> arena;  // one word per var plus the agent scratch cell
        VirtualFutexTable futex;
        SmallRng futex_rng;
        std::unique_ptr<Agent> agent;
        std::vector<ThreadCtx> threads;
        std::vector<NormalizedEvent> stream;
        ReplicaStats stats;
        std::vector<OpTraceEntry> trace;
        std::uint64_t submitted_events = 0;
    };

    struct PendingJoin {
        ThreadId joiner;
        std::uint32_t target;
    };

    void setup_replicas() {
        const std::uint32_t R = opt_.replicas;
        const std::uint32_t T = wl_.thread_count();
        const std::uint32_t V = wl_.var_count();
        std::uint64_t aseed = opt_.address_seed.value_or(hash_combine(opt_.seed, 0xADD2ull));

        rings_.strategy = opt_.strategy;
        if (opt_.strategy == Strategy::TotalOrder || opt_.strategy == Strategy::PartialOrder) {
            rings_.shared = std::make_shared<SyncOpRing>(opt_.ring_capacity, R);
        } else if (is_wall_of_clocks(opt_.strategy)) {
            rings_.per_thread.reserve(T);
            for (std::uint32_t t = 0; t < T; ++t)
                rings_.per_thread.push_back(std::make_shared<WocRing>(opt_.ring_capacity, R));
        }

        reps_.reserve(R);
        for (std::uint32_t r = 0; r < R; ++r) {
            Rep rep;
            rep.ordinal = r;
            rep.amap = AddressMap(V, r, aseed);
            rep.arena.assign(V + 1, 0);
            for (VarId v = 0; v < V; ++v) rep.arena[v] = wl_.vars[v].second;
            rep.futex_rng = SmallRng(hash_combine(opt_.seed, 0xF07E0ull + r));
            if (opt_.strategy != Strategy::None) {
                Agent::Config acfg;
                acfg.strategy = opt_.strategy;
                acfg.replica = r;
                acfg.threads = T;
                acfg.clock_count = opt_.clocks;
                acfg.po_window = opt_.po_window;
                acfg.max_words = V + 8;
                rep.agent = std::make_unique<Agent>(acfg, rings_);
                if (r == 0 && opt_.tamper.kind == TamperSpec::Kind::BufferPayload)
                    rep.agent->tamper_publish_at(opt_.tamper.at);
            }
            rep.threads.resize(T);
            rep.threads[0].st = ThreadCtx::St::Runnable;
            rep.threads[0].register_pending = rep.agent != nullptr;
            reps_.push_back(std::move(rep));
        }
        for (std::uint32_t r = 0; r < R; ++r) {
            mon_.attach_replica(r, &reps_[r].amap, reps_[r].agent.get());
            HiddenHandle h = mon_.allocate_hidden_buffer(r, &rings_);
            if (!reps_[r].agent) continue;
            if (opt_.strategy == Strategy::SecuredWallOfClocks) {
                reps_[r].agent->set_hidden(h, &mon_);
            } else {
                // The plain agents keep a reachable pointer to their buffer;
                // model that as the placement value sitting in replica memory.
                std::uint64_t loc = mon_.hidden_location(r);
                reps_[r].agent->set_ring_location(loc);
                reps_[r].arena[V] = loc;
            }
        }
    }

    bool all_done() const {
        for (const Rep& rep : reps_)
            for (const ThreadCtx& ctx : rep.threads)
                if (ctx.st != ThreadCtx::St::Done) return false;
        return true;
    }

    // --- scheduling ---

    bool dispatch_seeded() {
        scratch_runnable_.clear();
        for (std::uint32_t r = 0; r < reps_.size(); ++r)
            for (std::uint32_t t = 0; t < reps_[r].threads.size(); ++t)
                if (reps_[r].threads[t].st == ThreadCtx::St::Runnable)
                    scratch_runnable_.push_back((r << 16) | t);
        if (scratch_runnable_.empty()) return false;
        std::uint32_t pick =
            scratch_runnable_[sched_rng_.below(scratch_runnable_.size())];
        Rep& rep = reps_[pick >> 16];
        std::uint32_t t = pick & 0xFFFF;
        std::uint64_t quantum = 1 + sched_rng_.below(16);
        for (std::uint64_t i = 0; i < quantum && !failed_; ++i) {
            if (rep.threads[t].st != ThreadCtx::St::Runnable) break;
            std::uint64_t before = progress_;
            step_ctx(rep, t);
            if (progress_ == before) break;  // stalled: yield to someone else
        }
        return true;
    }

    // Exhaustive-enumeration mode: every master step is a scripted decision
    // among the runnable master threads; slave threads advance by one round-
    // robin sweep in between, so the master interleaving alone spans the
    // search space.
    bool dispatch_enum() {
        scratch_runnable_.clear();
        Rep& master = reps_[0];
        for (std::uint32_t t = 0; t < master.threads.size(); ++t)
            if (master.threads[t].st == ThreadCtx::St::Runnable) scratch_runnable_.push_back(t);
        bool any = false;
        if (!scratch_runnable_.empty()) {
            std::uint32_t options = static_cast<std::uint32_t>(scratch_runnable_.size());
            std::uint32_t choice = 0;
            if (opt_.master_script && enum_pos_ < opt_.master_script->size())
                choice = (*opt_.master_script)[enum_pos_];
            if (choice >= options) choice = options - 1;
            if (opt_.decision_log) opt_.decision_log->push_back({choice, options});
            ++enum_pos_;
            step_ctx(master, scratch_runnable_[choice]);
            any = true;
        }
        for (std::uint32_t r = 1; r < reps_.size() && !failed_; ++r) {
            Rep& rep = reps_[r];
            const std::uint32_t T = static_cast<std::uint32_t>(rep.threads.size());
            for (std::uint32_t i = 0; i < T && !failed_; ++i) {
                std::uint32_t t = opt_.enum_slave_reverse ? T - 1 - i : i;
                if (rep.threads[t].st == ThreadCtx::St::Runnable) {
                    step_ctx(rep, t);
                    any = true;
                }
            }
        }
        return any;
    }

    // --- execution of one primitive step ---

    void step_ctx(Rep& rep, std::uint32_t t) {
        ThreadCtx& ctx = rep.threads[t];
        ++rep.stats.steps;
        ++steps_;
        if (ctx.register_pending) {
            RvpEvent ev;
            ev.thread = t;
            ev.call = RvpCall::AgentRegister;
            submit_rvp(rep, t, std::move(ev));
            return;
        }
        const CompiledThread& ct = code_[t];
        for (;;) {
            if (ctx.stmt >= ct.programs.size()) {
                finish_thread(rep, t);
                return;
            }
            const MicroProgram& prog = ct.programs[ctx.stmt];
            if (ctx.upc >= prog.size()) {
                ++ctx.stmt;
                ctx.upc = 0;
                continue;
            }
            const MicroInst& inst = prog[ctx.upc];
            // branches and register moves fold into the next primitive step
            if (inst.op == MicroOp::Branch) {
                ctx.upc = static_cast<std::uint32_t>(inst.target);
                continue;
            }
            if (inst.op == MicroOp::BranchResEq) {
                ctx.upc = ctx.res == inst.a ? static_cast<std::uint32_t>(inst.target) : ctx.upc + 1;
                continue;
            }
            if (inst.op == MicroOp::BranchResNe) {
                ctx.upc = ctx.res != inst.a ? static_cast<std::uint32_t>(inst.target) : ctx.upc + 1;
                continue;
            }
            if (inst.op == MicroOp::SaveRes) {
                ctx.saved = ctx.res;
                ++ctx.upc;
                continue;
            }
            execute_micro(rep, t, inst);
            return;
        }
    }

    void execute_micro(Rep& rep, std::uint32_t t, const MicroInst& inst) {
        ThreadCtx& ctx = rep.threads[t];
        switch (inst.op) {
            case MicroOp::AtomicCas:
            case MicroOp::AtomicExchange:
            case MicroOp::AtomicStore:
            case MicroOp::AtomicLoad:
            case MicroOp::AtomicAdd: {
                OpKind kind = op_kind_of(inst.op);
                Address addr = rep.amap.address_of(inst.var);
                std::uint64_t* cell = &rep.arena[inst.var];
                auto perform = [&]() -> std::uint64_t {
                    std::uint64_t old = *cell;
                    switch (inst.op) {
                        case MicroOp::AtomicCas:
                            if (old == inst.a) *cell = inst.b;
                            return old;
                        case MicroOp::AtomicExchange: *cell = inst.a; return old;
                        case MicroOp::AtomicStore: *cell = inst.a; return old;
                        case MicroOp::AtomicAdd: *cell = old + inst.a; return old;
                        default: return old;  // AtomicLoad
                    }
                };
                AgentOutcome out = rep.agent
                                       ? rep.agent->try_execute(t, addr, kind, perform)
                                       : AgentOutcome::done(perform());
                if (out.status == AgentOutcome::Status::Stall) {
                    if (rep.ordinal == 0)
                        ++rep.stats.publish_stalls;
                    else
                        ++rep.stats.replay_stalls;
                    return;  // retried on the next dispatch
                }
                if (out.status == AgentOutcome::Status::Mismatch) {
                    DivergenceReport r;
                    r.replica = rep.ordinal;
                    r.thread = t;
                    r.event_index = rep.stream.size();
                    r.field = std::string("replay:") +
                              (out.mismatch == AgentOutcome::MismatchKind::OpKind
                                   ? "op-kind"
                                   : out.mismatch == AgentOutcome::MismatchKind::WordCorrespondence
                                         ? "word"
                                         : "clock");
                    r.master_value = std::to_string(out.expected);
                    r.deviant_value = std::to_string(out.actual);
                    mon_.report_divergence(std::move(r));
                    fail_divergence();
                    return;
                }
                ctx.res = out.value;
                ++ctx.upc;
                ++rep.stats.sync_ops;
                if (opt_.audit) rep.trace.push_back({t, inst.var, kind, out.value});
                ++progress_;
                break;
            }
            case MicroOp::PlainLoad:
                ctx.res = rep.arena[inst.var];
                ++ctx.upc;
                ++rep.stats.plain_ops;
                ++progress_;
                break;
            case MicroOp::PlainStore:
                rep.arena[inst.var] = inst.a;
                ++ctx.upc;
                ++rep.stats.plain_ops;
                ++progress_;
                break;
            case MicroOp::Compute:
                if (inst.a == 0) {
                    ++ctx.upc;
                    ++progress_;
                    break;
                }
                if (ctx.compute_left == 0) ctx.compute_left = inst.a;
                burn_compute_unit();
                if (--ctx.compute_left == 0) ++ctx.upc;
                ++progress_;
                break;
            case MicroOp::FutexWait: {
                RvpEvent ev;
                ev.thread = t;
                ev.call = RvpCall::FutexWait;
                ev.args.push_back(RvpArg::make_addr(rep.amap.address_of(inst.var)));
                ev.args.push_back(
                    RvpArg::make_scalar(inst.from_saved ? ctx.saved : inst.a));
                ++rep.stats.futex_waits;
                submit_rvp(rep, t, std::move(ev));
                break;
            }
            case MicroOp::FutexWake: {
                RvpEvent ev;
                ev.thread = t;
                ev.call = RvpCall::FutexWake;
                ev.args.push_back(RvpArg::make_addr(rep.amap.address_of(inst.var)));
                ev.args.push_back(RvpArg::make_scalar(inst.a));
                ++rep.stats.futex_wakes;
                submit_rvp(rep, t, std::move(ev));
                break;
            }
            case MicroOp::SyscallRvp: {
                const Statement& s = wl_.threads[t][ctx.stmt];
                RvpEvent ev;
                ev.thread = t;
                ev.call = s.sys;
                if (s.sys == RvpCall::Write) {
                    std::string payload = s.payload_is_var
                                              ? std::to_string(rep.arena[s.payload_var])
                                              : s.text;
                    ev.args.push_back(RvpArg::make_bytes(std::move(payload)));
                } else if (s.sys == RvpCall::Open || s.sys == RvpCall::Read) {
                    ev.args.push_back(RvpArg::make_bytes(s.text));
                }
                submit_rvp(rep, t, std::move(ev));
                break;
            }
            case MicroOp::SpawnRvp:
            case MicroOp::JoinRvp: {
                RvpEvent ev;
                ev.thread = t;
                ev.call = inst.op == MicroOp::SpawnRvp ? RvpCall::Spawn : RvpCall::Join;
                ev.args.push_back(RvpArg::make_scalar(inst.a));
                submit_rvp(rep, t, std::move(ev));
                break;
            }
            default: break;
        }
    }

    // --- rendezvous choreography ---

    void submit_rvp(Rep& rep, std::uint32_t t, RvpEvent ev) {
        if (opt_.tamper.kind == TamperSpec::Kind::SyscallArg &&
            rep.ordinal == opt_.tamper.replica && rep.submitted_events == opt_.tamper.at) {
            for (RvpArg& a : ev.args) {
                if (a.kind == RvpArg::Kind::Bytes && !a.bytes.empty()) {
                    a.bytes[a.bytes.size() / 2] ^= 0x1;
                    tampered_event_ = {t, mon_.next_event_index(t)};
                    break;
                }
                if (a.kind == RvpArg::Kind::Scalar) {
                    a.scalar ^= 0x1;
                    tampered_event_ = {t, mon_.next_event_index(t)};
                    break;
                }
            }
        }
        ++rep.submitted_events;
        ++rep.stats.rvps;
        rep.threads[t].st = ThreadCtx::St::ParkedRvp;
        Monitor::Batch* b = mon_.submit(rep.ordinal, t, std::move(ev));
        if (mon_.divergence()) {
            fail_divergence();
            return;
        }
        if (!b) return;
        append_streams(*b);
        dispatch_call(*b);
    }

    void append_streams(Monitor::Batch& b) {
        for (std::uint32_t r = 0; r < reps_.size(); ++r) reps_[r].stream.push_back(b.norm[r]);
    }

    void dispatch_call(Monitor::Batch& b) {
        const RvpEvent& master_ev = b.events[0];
        switch (master_ev.call) {
            case RvpCall::Write: {
                // one external effect per logical event
                external_.push_back(master_ev.args[0].bytes);
                finish_batch(b, master_ev.args[0].bytes.size());
                break;
            }
            case RvpCall::Read:
                finish_batch(b, mix64(std::hash<std::string>{}(master_ev.args[0].bytes)) & 0xFFFF);
                break;
            case RvpCall::Open: finish_batch(b, 3); break;
            case RvpCall::GetPid: finish_batch(b, kMasterPid); break;
            case RvpCall::AgentRegister: {
                for (std::uint32_t r = 0; r < reps_.size(); ++r) mon_.agent_register(r);
                finish_batch(b, 0);
                break;
            }
            case RvpCall::Spawn: {
                std::uint32_t target = static_cast<std::uint32_t>(master_ev.args[0].scalar);
                mon_.note_spawn_released();  // flags flip within the same rendezvous
                for (Rep& rep : reps_) rep.threads[target].st = ThreadCtx::St::Runnable;
                finish_batch(b, 0);
                break;
            }
            case RvpCall::Join: {
                b.open = true;
                pending_joins_.push_back(
                    {b.thread, static_cast<std::uint32_t>(master_ev.args[0].scalar)});
                try_complete_joins();
                break;
            }
            case RvpCall::FutexWait: {
                if (opt_.arbitrate_futex) {
                    // Only the master's call reaches the virtual kernel; the
                    // slaves' calls are no-ops and their threads stay parked
                    // until the master's call returns.
                    Rep& master = reps_[0];
                    Address addr{master_ev.args[0].scalar};
                    std::uint64_t val = master_ev.args[1].scalar;
                    auto v = master.amap.var_of(addr);
                    std::uint64_t cur = v ? master.arena[*v] : ~0ull;
                    auto res = master.futex.wait(addr, val, cur, b.thread);
                    if (res == VirtualFutexTable::WaitResult::WouldBlock) {
                        finish_batch(b, kFutexWouldBlock);
                    } else {
                        b.open = true;
                        master.threads[b.thread].st = ThreadCtx::St::ParkedFutex;
                    }
                } else {
                    // test-only hazard mode: every replica runs its own call
                    ThreadId t = b.thread;
                    for (std::uint32_t r = 0; r < reps_.size(); ++r) {
                        Rep& rep = reps_[r];
                        Address addr{b.events[r].args[0].scalar};
                        std::uint64_t val = b.events[r].args[1].scalar;
                        auto v = rep.amap.var_of(addr);
                        std::uint64_t cur = v ? rep.arena[*v] : ~0ull;
                        auto res = rep.futex.wait(addr, val, cur, t);
                        if (res == VirtualFutexTable::WaitResult::WouldBlock)
                            release_ctx(rep, t, kFutexWouldBlock);
                        else
                            rep.threads[t].st = ThreadCtx::St::ParkedFutex;
                    }
                    mon_.finish(t);
                    ++progress_;
                }
                break;
            }
            case RvpCall::FutexWake: {
                if (opt_.arbitrate_futex) {
                    Rep& master = reps_[0];
                    Address addr{master_ev.args[0].scalar};
                    std::uint64_t count = master_ev.args[1].scalar;
                    auto woken = master.futex.wake(addr, count, master.futex_rng);
                    for (ThreadId w : woken) {
                        Monitor::Batch* wb = mon_.open_batch(w);
                        if (wb && wb->open) finish_batch(*wb, 0);
                    }
                    finish_batch(b, woken.size());
                } else {
                    ThreadId t = b.thread;
                    for (std::uint32_t r = 0; r < reps_.size(); ++r) {
                        Rep& rep = reps_[r];
                        Address addr{b.events[r].args[0].scalar};
                        std::uint64_t count = b.events[r].args[1].scalar;
                        auto woken = rep.futex.wake(addr, count, rep.futex_rng);
                        for (ThreadId w : woken) release_ctx(rep, w, 0);
                        release_ctx(rep, t, woken.size());
                    }
                    mon_.finish(t);
                    ++progress_;
                }
                break;
            }
        }
    }

    void finish_batch(Monitor::Batch& b, std::uint64_t master_result) {
        ThreadId t = b.thread;
        mon_.finish(t);
        for (Rep& rep : reps_) release_ctx(rep, t, master_result);
        ++progress_;
    }

    void release_ctx(Rep& rep, ThreadId t, std::uint64_t result) {
        ThreadCtx& ctx = rep.threads[t];
        ctx.res = result;
        ctx.st = ThreadCtx::St::Runnable;
        if (ctx.register_pending) {
            ctx.register_pending = false;
        } else {
            ++ctx.upc;
        }
    }

    void finish_thread(Rep& rep, std::uint32_t t) {
        rep.threads[t].st = ThreadCtx::St::Done;
        ++progress_;
        try_complete_joins();
    }

    void try_complete_joins() {
        for (std::size_t i = 0; i < pending_joins_.size();) {
            const PendingJoin& pj = pending_joins_[i];
            bool all_finished = true;
            for (Rep& rep : reps_)
                all_finished &= rep.threads[pj.target].st == ThreadCtx::St::Done;
            if (!all_finished) {
                ++i;
                continue;
            }
            Monitor::Batch* b = mon_.open_batch(pj.joiner);
            mon_.note_join_released();  // may disable the agents
            if (b) finish_batch(*b, 0);
            pending_joins_.erase(pending_joins_.begin() + static_cast<std::ptrdiff_t>(i));
        }
    }

    // --- failure & teardown ---

    void fail_divergence() {
        failed_ = true;
        outcome_ = RunResult::Outcome::Divergence;
    }

    void fail_deadlock(std::string detail) {
        failed_ = true;
        outcome_ = RunResult::Outcome::Deadlock;
        fail_detail_ = std::move(detail);
    }

    RunResult finalize(double wall_seconds) {
        RunResult res;
        res.outcome = all_done() && !failed_ ? RunResult::Outcome::Equivalent : outcome_;
        if (!failed_ && !all_done()) res.outcome = RunResult::Outcome::Deadlock;
        res.detail = fail_detail_;
        if (mon_.divergence()) res.divergence = mon_.divergence();
        res.external_output = external_;
        res.total_steps = steps_;
        res.wall_seconds = wall_seconds;
        res.threads = wl_.thread_count();
        res.tampered_event = tampered_event_;
        for (Rep& rep : reps_) {
            if (rep.agent) {
                rep.stats.recorded = rep.agent->recorded_ops();
                rep.stats.replayed = rep.agent->replayed_ops();
            }
            res.streams.push_back(std::move(rep.stream));
            res.stats.push_back(rep.stats);
            res.op_trace.push_back(std::move(rep.trace));
        }
        if (opt_.dump_rings) dump_rings(res);
        return res;
    }

    void dump_rings(RunResult& res) {
        if (rings_.shared) {
            std::uint64_t head = rings_.shared->head();
            std::uint64_t from = head > rings_.shared->capacity() ? head - rings_.shared->capacity() : 0;
            for (std::uint64_t i = from; i < head; ++i) {
                SyncOpRecord rec;
                if (rings_.shared->read_slot(i, rec) == SyncOpRing::ReadStatus::Ok)
                    res.shared_ring.push_back(rec);
            }
        }
        for (const auto& ring : rings_.per_thread) {
            std::vector<WocRecord> dump;
            std::uint64_t head = ring->head();
            std::uint64_t from = head > ring->capacity() ? head - ring->capacity() : 0;
            for (std::uint64_t i = from; i < head; ++i) {
                WocRecord rec;
                if (ring->read_slot(i, rec) == WocRing::ReadStatus::Ok) dump.push_back(rec);
            }
            res.woc_rings.push_back(std::move(dump));
        }
    }

    Workload wl_;
    SimOptions opt_;
    std::vector<CompiledThread> code_;
    Monitor mon_;
    RingSet rings_;
    std::vector<Rep> reps_;
    SmallRng sched_rng_;
    std::vector<std::uint32_t> scratch_runnable_;
    std::vector<std::string> external_;
    std::vector<PendingJoin> pending_joins_;
    std::optional<std::pair<ThreadId, std::uint64_t>> tampered_event_;
    std::uint64_t progress_ = 0;
    std::uint64_t steps_ = 0;
    std::size_t enum_pos_ = 0;
    bool failed_ = false;
    RunResult::Outcome outcome_ = RunResult::Outcome::Equivalent;
    std::string fail_detail_;
};

}  // namespace mvee
