#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>

#include "mvee/clockwall.hpp"
#include "mvee/core.hpp"
#include "mvee/ring.hpp"

namespace mvee {

enum class Strategy : std::uint8_t {
    None,
    TotalOrder,
    PartialOrder,
    WallOfClocks,
    SecuredWallOfClocks,
};

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::None: return "none";
        case Strategy::TotalOrder: return "to";
        case Strategy::PartialOrder: return "po";
        case Strategy::WallOfClocks: return "woc";
        case Strategy::SecuredWallOfClocks: return "swoc";
    }
    return "?";
}

inline bool is_wall_of_clocks(Strategy s) {
    return s == Strategy::WallOfClocks || s == Strategy::SecuredWallOfClocks;
}

// Buffer entry for the total-order and partial-order agents: thread id, the
// master replica's address of the affected word, and the op's type.
struct SyncOpRecord {
    std::uint32_t thread = 0;
    std::uint64_t word = 0;
    OpKind kind = OpKind::CompareAndSwap;
};

// Buffer entry for the wall-of-clocks agents: the clock a word hashes to and
// that clock's time when the op was logged.
struct WocRecord {
    std::uint32_t clock = 0;
    std::uint64_t time = 0;
};

using SyncOpRing = ReplicationRing<SyncOpRecord>;
using WocRing = ReplicationRing<WocRecord>;

// One ring per master thread for the wall-of-clocks agents so each ring has
// one producer; a single ring shared by all threads for TO/PO.
struct RingSet {
    Strategy strategy = Strategy::None;
    std::shared_ptr<SyncOpRing> shared;            // TO/PO
    std::vector<std::shared_ptr<WocRing>> per_thread;  // WoC/SWoC
};

// Opaque capability handed out by the monitor's hidden registry. Resolving
// it yields the ring placement for one replica; the resolved location value
// must never be stored into the replica's simulated memory.
struct HiddenHandle {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;
    friend bool operator==(const HiddenHandle&, const HiddenHandle&) = default;
};

struct ResolvedRings {
    std::uint64_t location = 0;
    const RingSet* rings = nullptr;
};

class HiddenResolver {
public:
    virtual ~HiddenResolver() = default;
    virtual std::optional<ResolvedRings> resolve_hidden(const HiddenHandle&) const = 0;
};

struct InvalidCapability : std::runtime_error {
    InvalidCapability() : std::runtime_error("hidden buffer capability does not resolve") {}
};

// Fixed-capacity open-addressing map (u64 -> u64). Sized once at agent
// initialization; replay paths may then learn correspondences without
// touching the allocator.
class FlatMap64 {
public:
    explicit FlatMap64(std::size_t expected = 64) {
        std::size_t cap = 16;
        while (cap < expected * 2) cap <<= 1;
        cells_.assign(cap, Cell{});
        mask_ = cap - 1;
    }

    const std::uint64_t* find(std::uint64_t key) const {
        std::size_t i = mix64(key) & mask_;
        while (cells_[i].used) {
            if (cells_[i].key == key) return &cells_[i].value;
            i = (i + 1) & mask_;
        }
        return nullptr;
    }

    void insert(std::uint64_t key, std::uint64_t value) {
        if (size_ * 2 >= cells_.size())
            throw std::logic_error("correspondence map capacity exceeded");
        std::size_t i = mix64(key) & mask_;
        while (cells_[i].used) {
            if (cells_[i].key == key) { cells_[i].value = value; return; }
            i = (i + 1) & mask_;
        }
        cells_[i] = Cell{key, value, true};
        ++size_;
    }

    std::size_t size() const { return size_; }

private:
    struct Cell {
        std::uint64_t key = 0;
        std::uint64_t value = 0;
        bool used = false;
    };
    std::vector<Cell> cells_;
    std::size_t mask_ = 0;
    std::size_t size_ = 0;
};

// Outcome of one non-blocking record/replay attempt. Stall means "retry
// after letting someone else run" — the callers implement the spin-then-
// yield policy (or a cooperative reschedule inside the simulator).
struct AgentOutcome {
    enum class Status : std::uint8_t { Done, Stall, Mismatch };
    enum class MismatchKind : std::uint8_t {
        OpKind,
        WordCorrespondence,
        ClockCorrespondence,
    };

    Status status = Status::Done;
    std::uint64_t value = 0;
    MismatchKind mismatch = MismatchKind::OpKind;
    std::uint64_t expected = 0;
    std::uint64_t actual = 0;

    static AgentOutcome done(std::uint64_t v) { return {Status::Done, v, MismatchKind::OpKind, 0, 0}; }
    static AgentOutcome stall() { return {Status::Stall, 0, MismatchKind::OpKind, 0, 0}; }
    static AgentOutcome bad(MismatchKind k, std::uint64_t expect, std::uint64_t got) {
        return {Status::Mismatch, 0, k, expect, got};
    }
};

struct ReplayMismatchError : std::runtime_error {
    explicit ReplayMismatchError(const AgentOutcome& o)
        : std::runtime_error("replay mismatch"), outcome(o) {}
    AgentOutcome outcome;
};

struct DoubleRegistration : std::runtime_error {
    DoubleRegistration() : std::runtime_error("agent already registered") {}
};

// ---------------------------------------------------------------------------
// The replication agent. One instance lives in every replica; the monitor
// flips its role/enabled flags through agent_register. While enabled, every
// primitive sync op of the replica funnels through execute(): the master
// logs before performing, slaves stall until the recorded order admits the
// op and then perform it themselves.
// ---------------------------------------------------------------------------

class Agent {
public:
    struct Config {
        Strategy strategy = Strategy::TotalOrder;
        std::uint32_t replica = 0;
        std::uint32_t threads = 1;
        std::uint32_t clock_count = 4096;
        std::uint32_t po_window = 256;
        std::size_t max_words = 1024;  // sizes the preallocated correspondence maps
    };

    Agent(const Config& cfg, RingSet rings)
        : cfg_(cfg), rings_(std::move(rings)),
          master_to_local_(cfg.max_words), local_to_master_(cfg.max_words),
          word_clock_(cfg.max_words) {
        if (is_wall_of_clocks(cfg_.strategy)) {
            wall_ = std::make_unique<ClockWall>(cfg_.clock_count);
            local_wall_ = std::make_unique<ClockWall>(cfg_.clock_count);
            clock_locks_.reset(new SpinLock[cfg_.clock_count]);
            consume_pos_.assign(cfg_.threads, 0);
            if (rings_.per_thread.size() < cfg_.threads)
                throw std::invalid_argument("wall-of-clocks needs one ring per thread");
        }
        if ((cfg_.po_window & (cfg_.po_window - 1)) != 0)
            throw std::invalid_argument("lookahead window must be a power of two");
        po_consumed_.assign(cfg_.po_window, 0);
    }

    const Config& config() const { return cfg_; }
    Strategy strategy() const { return cfg_.strategy; }

    // --- status flags, written by the monitor ---
    bool registered() const { return registered_; }
    void mark_registered() {
        if (registered_) throw DoubleRegistration{};
        registered_ = true;
    }
    Role role() const { return role_.load(std::memory_order_acquire); }
    void set_role(Role r) { role_.store(r, std::memory_order_release); }
    bool enabled() const { return enabled_.load(std::memory_order_acquire); }
    void set_enabled(bool e) { enabled_.store(e, std::memory_order_release); }

    void set_hidden(HiddenHandle handle, const HiddenResolver* resolver) {
        hidden_handle_ = handle;
        resolver_ = resolver;
    }
    const HiddenHandle& hidden_handle() const { return hidden_handle_; }

    // Ring placement as seen by this replica. For the secured agent this
    // resolves through the monitor's registry and the value stays transient;
    // the plain agents cache it like the thread-local pointer they model.
    std::uint64_t ring_location() const { return location_; }
    void set_ring_location(std::uint64_t loc) { location_ = loc; }

    // Fault injection for the security harness: the master corrupts the
    // payload of the n-th record it publishes.
    void tamper_publish_at(std::uint64_t index) { tamper_at_ = static_cast<std::int64_t>(index); }

    // --- the hot path ---

    template <typename Perform>
    AgentOutcome try_execute(ThreadId thread, Address word, OpKind kind, Perform&& perform) {
        if (!enabled_.load(std::memory_order_acquire) || cfg_.strategy == Strategy::None)
            return AgentOutcome::done(perform());
        if (role_.load(std::memory_order_acquire) == Role::Master)
            return record(thread, word, kind, perform);
        switch (cfg_.strategy) {
            case Strategy::TotalOrder: return replay_total_order(thread, word, kind, perform);
            case Strategy::PartialOrder: return replay_partial_order(thread, word, kind, perform);
            default: return replay_wall_of_clocks(thread, word, perform);
        }
    }

    // Blocking flavor for standalone (real-thread) use.
    template <typename Perform>
    std::uint64_t execute(ThreadId thread, Address word, OpKind kind, Perform&& perform) {
        Backoff backoff;
        for (;;) {
            AgentOutcome o = try_execute(thread, word, kind, perform);
            if (o.status == AgentOutcome::Status::Done) return o.value;
            if (o.status == AgentOutcome::Status::Mismatch) throw ReplayMismatchError{o};
            backoff.pause();
        }
    }

    template <typename Perform>
    AgentOutcome record(ThreadId thread, Address word, OpKind kind, Perform&& perform) {
        if (is_wall_of_clocks(cfg_.strategy)) {
            const RingSet* rings = resolve_rings();
            if (!rings) throw InvalidCapability{};
            ClockId c = clock_of(word, cfg_.clock_count);
            std::lock_guard guard(clock_locks_[c]);
            std::uint64_t t = wall_->time(c);
            WocRecord rec{c, t};
            maybe_tamper(rec);
            if (!rings->per_thread[thread]->try_publish(rec)) return AgentOutcome::stall();
            wall_->advance(c);
            std::uint64_t v = perform();
            recorded_ops_.fetch_add(1, std::memory_order_relaxed);
            return AgentOutcome::done(v);
        }
        // TO/PO: one global logging region serializes all master sync ops.
        std::lock_guard guard(log_lock_);
        SyncOpRecord rec{thread, word.value, kind};
        maybe_tamper(rec);
        if (!rings_.shared->try_publish(rec)) return AgentOutcome::stall();
        std::uint64_t v = perform();
        recorded_ops_.fetch_add(1, std::memory_order_relaxed);
        return AgentOutcome::done(v);
    }

    template <typename Perform>
    AgentOutcome replay_total_order(ThreadId thread, Address word, OpKind kind, Perform&& perform) {
        std::lock_guard guard(replay_lock_);
        SyncOpRecord rec;
        if (rings_.shared->read_slot(to_pos_, rec) != SyncOpRing::ReadStatus::Ok)
            return AgentOutcome::stall();
        if (rec.thread != thread) return AgentOutcome::stall();
        AgentOutcome check = check_correspondence(rec, word, kind);
        if (check.status != AgentOutcome::Status::Done) return check;
        std::uint64_t v = perform();
        ++to_pos_;
        rings_.shared->advance_progress(cfg_.replica, to_pos_);
        replayed_ops_.fetch_add(1, std::memory_order_relaxed);
        return AgentOutcome::done(v);
    }

    template <typename Perform>
    AgentOutcome replay_partial_order(ThreadId thread, Address word, OpKind kind, Perform&& perform) {
        std::lock_guard guard(replay_lock_);
        // Earliest unconsumed entry of this thread, scanning a bounded
        // window from the consumed prefix.
        std::uint64_t limit = po_prefix_ + cfg_.po_window;
        std::uint64_t found = 0;
        SyncOpRecord rec{};
        bool have = false;
        for (std::uint64_t pos = po_prefix_; pos < limit; ++pos) {
            if (is_consumed(pos)) continue;
            SyncOpRecord r;
            if (rings_.shared->read_slot(pos, r) != SyncOpRing::ReadStatus::Ok) break;
            if (r.thread == thread) {
                rec = r;
                found = pos;
                have = true;
                break;
            }
        }
        if (!have) return AgentOutcome::stall();  // includes the window-exhausted case
        // Eligible only if no earlier unconsumed entry touches the same word.
        for (std::uint64_t pos = po_prefix_; pos < found; ++pos) {
            if (is_consumed(pos)) continue;
            SyncOpRecord r;
            if (rings_.shared->read_slot(pos, r) != SyncOpRing::ReadStatus::Ok)
                return AgentOutcome::stall();
            if (r.word == rec.word) return AgentOutcome::stall();
        }
        AgentOutcome check = check_correspondence(rec, word, kind);
        if (check.status != AgentOutcome::Status::Done) return check;
        std::uint64_t v = perform();
        mark_consumed(found);
        while (is_consumed(po_prefix_)) {
            clear_consumed(po_prefix_);
            ++po_prefix_;
        }
        rings_.shared->advance_progress(cfg_.replica, po_prefix_);
        replayed_ops_.fetch_add(1, std::memory_order_relaxed);
        return AgentOutcome::done(v);
    }

    template <typename Perform>
    AgentOutcome replay_wall_of_clocks(ThreadId thread, Address word, Perform&& perform) {
        const RingSet* rings = resolve_rings();
        if (!rings) throw InvalidCapability{};
        WocRing& ring = *rings->per_thread[thread];
        std::uint64_t pos = consume_pos_[thread];
        WocRecord rec;
        if (ring.read_slot(pos, rec) != WocRing::ReadStatus::Ok) return AgentOutcome::stall();
        {
            std::lock_guard guard(learn_lock_);
            const std::uint64_t* known = word_clock_.find(word.value);
            if (!known) {
                word_clock_.insert(word.value, rec.clock);
            } else if (*known != rec.clock) {
                return AgentOutcome::bad(AgentOutcome::MismatchKind::ClockCorrespondence, *known,
                                         rec.clock);
            }
        }
        if (local_wall_->time(rec.clock) != rec.time) return AgentOutcome::stall();
        std::uint64_t v = perform();
        local_wall_->advance(rec.clock);
        consume_pos_[thread] = pos + 1;
        ring.advance_progress(cfg_.replica, pos + 1);
        replayed_ops_.fetch_add(1, std::memory_order_relaxed);
        return AgentOutcome::done(v);
    }

    std::uint64_t recorded_ops() const { return recorded_ops_.load(std::memory_order_relaxed); }
    std::uint64_t replayed_ops() const { return replayed_ops_.load(std::memory_order_relaxed); }

    // Slave-side local wall, exposed for audits.
    const ClockWall* local_wall() const { return local_wall_.get(); }
    const ClockWall* master_wall() const { return wall_.get(); }

private:
    struct SpinLock {
        std::atomic_flag flag = ATOMIC_FLAG_INIT;
        void lock() {
            while (flag.test_and_set(std::memory_order_acquire)) {}
        }
        void unlock() { flag.clear(std::memory_order_release); }
    };

    const RingSet* resolve_rings() const {
        if (cfg_.strategy != Strategy::SecuredWallOfClocks) return &rings_;
        auto resolved = resolver_ ? resolver_->resolve_hidden(hidden_handle_) : std::nullopt;
        if (!resolved) return nullptr;
        return resolved->rings;
    }

    AgentOutcome check_correspondence(const SyncOpRecord& rec, Address local, OpKind kind) {
        if (rec.kind != kind)
            return AgentOutcome::bad(AgentOutcome::MismatchKind::OpKind,
                                     static_cast<std::uint64_t>(rec.kind),
                                     static_cast<std::uint64_t>(kind));
        const std::uint64_t* mapped = master_to_local_.find(rec.word);
        if (mapped) {
            if (*mapped != local.value)
                return AgentOutcome::bad(AgentOutcome::MismatchKind::WordCorrespondence, *mapped,
                                         local.value);
            return AgentOutcome::done(0);
        }
        const std::uint64_t* reverse = local_to_master_.find(local.value);
        if (reverse)
            return AgentOutcome::bad(AgentOutcome::MismatchKind::WordCorrespondence, *reverse,
                                     rec.word);
        master_to_local_.insert(rec.word, local.value);
        local_to_master_.insert(local.value, rec.word);
        return AgentOutcome::done(0);
    }

    bool is_consumed(std::uint64_t pos) const {
        return po_consumed_[pos & (cfg_.po_window - 1)] != 0;
    }
    void mark_consumed(std::uint64_t pos) { po_consumed_[pos & (cfg_.po_window - 1)] = 1; }
    void clear_consumed(std::uint64_t pos) { po_consumed_[pos & (cfg_.po_window - 1)] = 0; }

    template <typename Rec>
    void maybe_tamper(Rec& rec) {
        if (tamper_at_ < 0) return;
        if (static_cast<std::uint64_t>(tamper_at_) != recorded_ops()) return;
        if constexpr (std::is_same_v<Rec, WocRecord>) {
            rec.time += 1000;  // a future time no slave can reach
        } else {
            rec.kind = rec.kind == OpKind::Exchange ? OpKind::AtomicStore : OpKind::Exchange;
            rec.word ^= 0x40;
        }
    }

    Config cfg_;
    RingSet rings_;
    bool registered_ = false;
    std::atomic<Role> role_{Role::Master};
    std::atomic<bool> enabled_{false};

    // TO/PO master
    std::mutex log_lock_;
    // TO/PO slave
    std::mutex replay_lock_;
    std::uint64_t to_pos_ = 0;
    std::uint64_t po_prefix_ = 0;
    std::vector<std::uint8_t> po_consumed_;
    FlatMap64 master_to_local_;
    FlatMap64 local_to_master_;

    // WoC
    std::unique_ptr<ClockWall> wall_;        // master
    std::unique_ptr<ClockWall> local_wall_;  // slave
    std::unique_ptr<SpinLock[]> clock_locks_;
    std::vector<std::uint64_t> consume_pos_;
    std::mutex learn_lock_;
    FlatMap64 word_clock_;

    // SWoC
    HiddenHandle hidden_handle_{};
    const HiddenResolver* resolver_ = nullptr;
    std::uint64_t location_ = 0;

    std::int64_t tamper_at_ = -1;
    std::atomic<std::uint64_t> recorded_ops_{0};
    std::atomic<std::uint64_t> replayed_ops_{0};
};

}  // namespace mvee
