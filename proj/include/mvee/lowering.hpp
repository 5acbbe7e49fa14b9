#pragma once

#include <cstdint>
#include <vector>

#include "mvee/core.hpp"
#include "mvee/workload.hpp"

namespace mvee {

// Primitive ops a statement lowers to. Branch targets are indices into the
// statement's own micro program; falling off the end advances to the next
// statement. Branches and SaveRes are folded into the following primitive
// step, so they never become scheduling points of their own.
enum class MicroOp : std::uint8_t {
    AtomicCas,       // res = CAS(var, a -> b), returns old value
    AtomicExchange,  // res = XCHG(var, a)
    AtomicStore,     // var = a
    AtomicLoad,      // res = var
    AtomicAdd,       // res = old; var += a
    PlainLoad,
    PlainStore,
    FutexWait,       // wait until var != a (or saved value when from_saved)
    FutexWake,       // wake up to a waiters
    SyscallRvp,      // statement's syscall descriptor
    SpawnRvp,
    JoinRvp,
    Compute,         // burn a units, one per step
    BranchResEq,     // if res == a goto target
    BranchResNe,     // if res != a goto target
    Branch,
    SaveRes,         // saved = res
};

struct MicroInst {
    MicroOp op = MicroOp::Compute;
    VarId var = 0;
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::int32_t target = 0;
    bool from_saved = false;  // FutexWait compares against saved instead of a
};

using MicroProgram = std::vector<MicroInst>;

namespace detail {

inline MicroInst mi(MicroOp op, VarId v = 0, std::uint64_t a = 0, std::uint64_t b = 0) {
    MicroInst m;
    m.op = op;
    m.var = v;
    m.a = a;
    m.b = b;
    return m;
}

inline MicroInst br(MicroOp op, std::uint64_t a, std::int32_t target) {
    MicroInst m;
    m.op = op;
    m.a = a;
    m.target = target;
    return m;
}

// The three-state futex mutex (0 free, 1 locked, 2 locked with waiters),
// the shape glibc's low-level lock takes:
//   CAS(0 -> 1); on failure loop { XCHG(2); if old == 0 done; futex_wait(2) }
inline void emit_lock(MicroProgram& p, VarId m) {
    std::int32_t base = static_cast<std::int32_t>(p.size());
    std::int32_t end = base + 6;
    p.push_back(mi(MicroOp::AtomicCas, m, 0, 1));          // base+0
    p.push_back(br(MicroOp::BranchResEq, 0, end));         // base+1: fast path
    p.push_back(mi(MicroOp::AtomicExchange, m, 2));        // base+2
    p.push_back(br(MicroOp::BranchResEq, 0, end));         // base+3
    p.push_back(mi(MicroOp::FutexWait, m, 2));             // base+4
    p.push_back(br(MicroOp::Branch, 0, base + 2));         // base+5
}

// XCHG to 0; wake one waiter only when the old state said waiters exist.
inline void emit_unlock(MicroProgram& p, VarId m) {
    std::int32_t base = static_cast<std::int32_t>(p.size());
    std::int32_t end = base + 3;
    p.push_back(mi(MicroOp::AtomicExchange, m, 0));        // base+0
    p.push_back(br(MicroOp::BranchResNe, 2, end));         // base+1
    p.push_back(mi(MicroOp::FutexWake, m, 1));             // base+2
}

}  // namespace detail

// Lowers one statement to its primitive ops. Every atomic word op in the
// result goes through the active agent's record/replay wrapper when the
// simulator executes it.
inline MicroProgram lower(const Statement& s) {
    using detail::br;
    using detail::emit_lock;
    using detail::emit_unlock;
    using detail::mi;
    MicroProgram p;
    switch (s.kind) {
        case StmtKind::Lock:
            emit_lock(p, s.var);
            break;
        case StmtKind::Unlock:
            emit_unlock(p, s.var);
            break;
        case StmtKind::CasLoop:
            p.push_back(mi(MicroOp::AtomicCas, s.var, s.a, s.b));
            p.push_back(br(MicroOp::BranchResNe, s.a, 0));
            break;
        case StmtKind::Store:
            p.push_back(mi(MicroOp::AtomicStore, s.var, s.a));
            break;
        case StmtKind::Load:
            p.push_back(mi(MicroOp::AtomicLoad, s.var));
            break;
        case StmtKind::Wait: {
            // Sequence-counter condition variable: remember the counter,
            // release the mutex, sleep until the counter moves, retake the
            // mutex. A signal between the read and the futex call just makes
            // the wait return immediately.
            p.push_back(mi(MicroOp::AtomicLoad, s.var));       // read seq
            p.push_back(mi(MicroOp::SaveRes));
            emit_unlock(p, s.var2);
            MicroInst wait = mi(MicroOp::FutexWait, s.var);
            wait.from_saved = true;
            p.push_back(wait);
            emit_lock(p, s.var2);
            break;
        }
        case StmtKind::Signal:
            p.push_back(mi(MicroOp::AtomicAdd, s.var, 1));
            p.push_back(mi(MicroOp::FutexWake, s.var, 1));
            break;
        case StmtKind::Broadcast:
            p.push_back(mi(MicroOp::AtomicAdd, s.var, 1));
            p.push_back(mi(MicroOp::FutexWake, s.var, ~0ull));
            break;
        case StmtKind::Syscall:
            p.push_back(mi(MicroOp::SyscallRvp));
            break;
        case StmtKind::Compute:
            p.push_back(mi(MicroOp::Compute, 0, s.a));
            break;
        case StmtKind::Spawn:
            p.push_back(mi(MicroOp::SpawnRvp, 0, s.a));
            break;
        case StmtKind::Join:
            p.push_back(mi(MicroOp::JoinRvp, 0, s.a));
            break;
        case StmtKind::PlainStore:
            p.push_back(mi(MicroOp::PlainStore, s.var, s.a));
            break;
        case StmtKind::PlainLoad:
            p.push_back(mi(MicroOp::PlainLoad, s.var));
            break;
    }
    return p;
}

struct CompiledThread {
    std::vector<MicroProgram> programs;  // one per statement
};

inline std::vector<CompiledThread> compile_workload(const Workload& w) {
    std::vector<CompiledThread> out(w.thread_count());
    for (std::uint32_t t = 0; t < w.thread_count(); ++t) {
        out[t].programs.reserve(w.threads[t].size());
        for (const Statement& s : w.threads[t]) out[t].programs.push_back(lower(s));
    }
    return out;
}

inline OpKind op_kind_of(MicroOp op) {
    switch (op) {
        case MicroOp::AtomicCas: return OpKind::CompareAndSwap;
        case MicroOp::AtomicExchange: return OpKind::Exchange;
        case MicroOp::AtomicStore: return OpKind::AtomicStore;
        case MicroOp::AtomicLoad: return OpKind::AtomicLoad;
        case MicroOp::AtomicAdd: return OpKind::AtomicAddSub;
        case MicroOp::PlainLoad: return OpKind::UnprotectedLoad;
        case MicroOp::PlainStore: return OpKind::UnprotectedStore;
        default: return OpKind::AtomicLoad;
    }
}

// Static sync-op statement count; the exhaustive oracle gates on this.
inline std::uint32_t count_sync_statements(const Workload& w) {
    std::uint32_t n = 0;
    for (const auto& thread : w.threads)
        for (const Statement& s : thread) switch (s.kind) {
                case StmtKind::Lock:
                case StmtKind::Unlock:
                case StmtKind::CasLoop:
                case StmtKind::Store:
                case StmtKind::Load:
                case StmtKind::Wait:
                case StmtKind::Signal:
                case StmtKind::Broadcast: ++n; break;
                default: break;
            }
    return n;
}

}  // namespace mvee
