#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mvee/workload.hpp"

namespace mvee {

// The built-in workload library. Each builder mirrors one of the workload
// archetypes the benchmarks care about: embarrassingly parallel compute,
// fine-grained per-object locking with fork/join, one hot global lock plus a
// lock-free fast path, a condition-variable pipeline, syscall-dense threads,
// and a deliberately racy program for negative tests.

namespace detail {

inline Statement st(StmtKind k, VarId v = 0, std::uint64_t a = 0, std::uint64_t b = 0) {
    Statement s;
    s.kind = k;
    s.var = v;
    s.a = a;
    s.b = b;
    return s;
}

inline Statement write_lit(std::string text) {
    Statement s;
    s.kind = StmtKind::Syscall;
    s.sys = RvpCall::Write;
    s.text = std::move(text);
    return s;
}

inline Statement write_var(VarId v) {
    Statement s;
    s.kind = StmtKind::Syscall;
    s.sys = RvpCall::Write;
    s.payload_is_var = true;
    s.payload_var = v;
    return s;
}

struct Builder {
    Workload w;

    explicit Builder(std::string name) { w.name = std::move(name); }

    VarId var(const std::string& name, std::uint64_t init = 0) {
        w.vars.emplace_back(name, init);
        return static_cast<VarId>(w.vars.size() - 1);
    }

    std::vector<Statement>& thread(std::uint32_t t) {
        if (w.threads.size() <= t) w.threads.resize(t + 1);
        return w.threads[t];
    }
};

}  // namespace detail

inline Workload make_serial(std::uint32_t ops = 8) {
    detail::Builder b("serial");
    VarId m = b.var("m");
    VarId d = b.var("d");
    auto& t0 = b.thread(0);
    for (std::uint32_t i = 0; i < ops; ++i) {
        t0.push_back(detail::st(StmtKind::Lock, m));
        t0.push_back(detail::st(StmtKind::Store, d, i + 1));
        t0.push_back(detail::st(StmtKind::Unlock, m));
        t0.push_back(detail::st(StmtKind::Compute, 0, 4));
    }
    t0.push_back(detail::write_lit("serial done"));
    return b.w;
}

// blackscholes-like: heavy compute, each worker synchronizes only on its own
// private mutex, no cross-thread dependencies.
inline Workload make_independent(std::uint32_t threads = 4, std::uint32_t ops = 8) {
    detail::Builder b("independent");
    std::vector<VarId> m(threads), d(threads);
    for (std::uint32_t t = 1; t < threads; ++t) {
        m[t] = b.var("m" + std::to_string(t));
        d[t] = b.var("d" + std::to_string(t));
    }
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    t0.push_back(detail::st(StmtKind::Compute, 0, 16));
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    t0.push_back(detail::write_lit("independent done"));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t i = 0; i < ops; ++i) {
            tt.push_back(detail::st(StmtKind::Compute, 0, 24));
            tt.push_back(detail::st(StmtKind::Lock, m[t]));
            tt.push_back(detail::st(StmtKind::Store, d[t], i));
            tt.push_back(detail::st(StmtKind::Unlock, m[t]));
        }
    }
    return b.w;
}

// fluidanimate-like: fork/join workers hammering a large pool of distinct
// mutexes, so the master rarely contends but TO/PO replay must still thread
// every op through one buffer.
inline Workload make_finegrain(std::uint32_t threads = 4, std::uint32_t ops = 60,
                               std::uint32_t mutexes = 1024) {
    detail::Builder b("finegrain");
    std::vector<VarId> m(mutexes), d(mutexes);
    for (std::uint32_t k = 0; k < mutexes; ++k) {
        m[k] = b.var("m" + std::to_string(k));
        d[k] = b.var("d" + std::to_string(k));
    }
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    for (std::uint32_t i = 0; i < ops / 2; ++i) {
        std::uint32_t k = (7 + i * 13) % mutexes;
        t0.push_back(detail::st(StmtKind::Lock, m[k]));
        t0.push_back(detail::st(StmtKind::Store, d[k], i));
        t0.push_back(detail::st(StmtKind::Unlock, m[k]));
    }
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    t0.push_back(detail::write_lit("finegrain done"));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t i = 0; i < ops; ++i) {
            std::uint32_t k = (t * 31 + i * 17) % mutexes;
            tt.push_back(detail::st(StmtKind::Lock, m[k]));
            tt.push_back(detail::st(StmtKind::Store, d[k], i));
            tt.push_back(detail::st(StmtKind::Unlock, m[k]));
            if (i % 8 == 7) tt.push_back(detail::st(StmtKind::Compute, 0, 2));
        }
    }
    return b.w;
}

// swaptions/malloc-like: every worker funnels through one hot lock, plus an
// ad hoc test-and-set spinlock guarding a second word.
inline Workload make_alloc_lock(std::uint32_t threads = 4, std::uint32_t ops = 24) {
    detail::Builder b("alloc-lock");
    VarId g = b.var("g");       // the allocator lock
    VarId h = b.var("heap");
    VarId s = b.var("s");       // ad hoc spinlock
    VarId d = b.var("d");
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    t0.push_back(detail::write_lit("alloc done"));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t i = 0; i < ops; ++i) {
            tt.push_back(detail::st(StmtKind::Lock, g));
            tt.push_back(detail::st(StmtKind::Store, h, t * 1000 + i));
            tt.push_back(detail::st(StmtKind::Load, h));
            tt.push_back(detail::st(StmtKind::Unlock, g));
            if (i % 4 == 3) {
                tt.push_back(detail::st(StmtKind::CasLoop, s, 0, 1));
                tt.push_back(detail::st(StmtKind::Store, d, i));
                tt.push_back(detail::st(StmtKind::Store, s, 0));
            } else {
                tt.push_back(detail::st(StmtKind::Compute, 0, 2));
            }
        }
    }
    return b.w;
}

// dedup/ferret-like: one producer and T-1 interchangeable consumers on a
// single condition variable. Per round every consumer announces itself
// (under the mutex, before its wait begins), the producer then posts one
// item and wakes one waiter, and each woken consumer relays the wake-up to
// the next waiter before it re-announces. Wake-one with several waiters is
// the normal case here, which is exactly the situation futex arbitration
// exists for.
inline Workload make_pipeline(std::uint32_t threads = 4, std::uint32_t items = 3) {
    detail::Builder b("pipeline");
    VarId m = b.var("m");
    VarId cv = b.var("cv");
    VarId item = b.var("item");
    std::vector<VarId> flag(threads);
    for (std::uint32_t t = 1; t < threads; ++t) flag[t] = b.var("flag" + std::to_string(t));
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    for (std::uint32_t round = 1; round <= items; ++round) {
        for (std::uint32_t t = 1; t < threads; ++t)
            t0.push_back(detail::st(StmtKind::CasLoop, flag[t], round, round));
        t0.push_back(detail::st(StmtKind::Lock, m));
        t0.push_back(detail::st(StmtKind::Store, item, round));
        t0.push_back(detail::st(StmtKind::Signal, cv));
        t0.push_back(detail::st(StmtKind::Unlock, m));
    }
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    t0.push_back(detail::write_lit("pipeline done"));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t round = 1; round <= items; ++round) {
            tt.push_back(detail::st(StmtKind::Lock, m));
            tt.push_back(detail::st(StmtKind::Store, flag[t], round));
            Statement wait = detail::st(StmtKind::Wait, cv);
            wait.var2 = m;
            tt.push_back(wait);
            tt.push_back(detail::st(StmtKind::Signal, cv));
            tt.push_back(detail::st(StmtKind::Load, item));
            tt.push_back(detail::st(StmtKind::Unlock, m));
        }
        tt.push_back(detail::write_lit("consumer done"));
    }
    return b.w;
}

// dedup-like RVP density: mostly virtual syscalls with a sprinkle of
// synchronization.
inline Workload make_syscall_heavy(std::uint32_t threads = 4, std::uint32_t ops = 16) {
    detail::Builder b("syscall-heavy");
    VarId m = b.var("m");
    VarId d = b.var("d");
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    t0.push_back(detail::write_lit("header"));
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    t0.push_back(detail::write_lit("trailer"));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t i = 0; i < ops; ++i) {
            tt.push_back(detail::write_lit("tick"));
            Statement pid;
            pid.kind = StmtKind::Syscall;
            pid.sys = RvpCall::GetPid;
            tt.push_back(pid);
            if (i % 4 == 1) {
                tt.push_back(detail::st(StmtKind::Lock, m));
                tt.push_back(detail::st(StmtKind::Store, d, i));
                tt.push_back(detail::st(StmtKind::Unlock, m));
            }
        }
    }
    return b.w;
}

// Unprotected accesses feeding a syscall argument: replay cannot order plain
// ops, so replicas disagree sooner or later. Negative-test fuel.
inline Workload make_racy(std::uint32_t threads = 2, std::uint32_t ops = 12) {
    detail::Builder b("racy");
    VarId x = b.var("x");
    VarId m = b.var("m");
    VarId d = b.var("d");
    if (threads < 2) threads = 2;
    auto& t0 = b.thread(0);
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Spawn, 0, t));
    for (std::uint32_t i = 0; i < ops; ++i) {
        t0.push_back(detail::st(StmtKind::PlainStore, x, i + 1));
        t0.push_back(detail::st(StmtKind::Compute, 0, 2));
    }
    for (std::uint32_t t = 1; t < threads; ++t) t0.push_back(detail::st(StmtKind::Join, 0, t));
    for (std::uint32_t t = 1; t < threads; ++t) {
        auto& tt = b.thread(t);
        for (std::uint32_t i = 0; i < ops; ++i) {
            tt.push_back(detail::st(StmtKind::Lock, m));
            tt.push_back(detail::st(StmtKind::Store, d, i));
            tt.push_back(detail::st(StmtKind::Unlock, m));
            tt.push_back(detail::write_var(x));
        }
    }
    return b.w;
}

struct BuiltinParams {
    std::uint32_t threads = 4;
    std::optional<std::uint32_t> ops;  // workload-specific op count
};

inline std::vector<std::string> builtin_names() {
    return {"serial",   "independent", "finegrain", "alloc-lock",
            "pipeline", "syscall-heavy", "racy"};
}

inline std::optional<Workload> make_builtin(const std::string& name, const BuiltinParams& p = {}) {
    std::uint32_t threads = p.threads;
    if (name == "serial") return make_serial(p.ops.value_or(8));
    if (name == "independent") return make_independent(threads, p.ops.value_or(8));
    if (name == "finegrain") return make_finegrain(threads, p.ops.value_or(60));
    if (name == "alloc-lock") return make_alloc_lock(threads, p.ops.value_or(24));
    if (name == "pipeline") return make_pipeline(threads, p.ops.value_or(3));
    if (name == "syscall-heavy") return make_syscall_heavy(threads, p.ops.value_or(16));
    if (name == "racy") return make_racy(threads, p.ops.value_or(12));
    return std::nullopt;
}

}  // namespace mvee
