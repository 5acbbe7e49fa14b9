#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvee/agents.hpp"
#include "mvee/core.hpp"
#include "mvee/rng.hpp"

namespace mvee {

struct UnknownReplica : std::runtime_error {
    UnknownReplica() : std::runtime_error("replica has not registered") {}
};

struct UnsupportedTransition : std::runtime_error {
    UnsupportedTransition() : std::runtime_error("master/slave roles cannot migrate mid-run") {}
};

// Structured record of the first inconsistency: which replica deviated, at
// which logical event, and the two values that disagreed.
struct DivergenceReport {
    std::uint32_t replica = 0;
    ThreadId thread = 0;
    std::uint64_t event_index = 0;  // per-thread logical event index
    std::string field;
    std::string master_value;
    std::string deviant_value;
};

struct Verdict {
    bool allowed = false;
    std::uint64_t result = 0;
    std::optional<DivergenceReport> report;

    static Verdict allow(std::uint64_t result) { return {true, result, std::nullopt}; }
    static Verdict diverged(DivergenceReport r) { return {false, 0, std::move(r)}; }
};

namespace detail {

inline std::string scalar_or_bytes(const RvpArg& a) { return arg_to_string(a); }

// First differing field between the master's normalized event and another
// replica's; nullopt when equal.
inline std::optional<DivergenceReport> first_difference(const NormalizedEvent& master,
                                                        const NormalizedEvent& other,
                                                        std::uint32_t replica,
                                                        std::uint64_t event_index) {
    DivergenceReport r;
    r.replica = replica;
    r.thread = other.thread;
    r.event_index = event_index;
    if (master.call != other.call) {
        r.field = "call";
        r.master_value = rvp_call_name(master.call);
        r.deviant_value = rvp_call_name(other.call);
        return r;
    }
    std::size_t args = std::max(master.args.size(), other.args.size());
    for (std::size_t i = 0; i < args; ++i) {
        r.field = "arg" + std::to_string(i);
        if (i >= master.args.size() || i >= other.args.size()) {
            r.master_value = i < master.args.size() ? scalar_or_bytes(master.args[i]) : "<none>";
            r.deviant_value = i < other.args.size() ? scalar_or_bytes(other.args[i]) : "<none>";
            return r;
        }
        const RvpArg& ma = master.args[i];
        const RvpArg& oa = other.args[i];
        if (ma.kind != oa.kind || ma.scalar != oa.scalar) {
            r.master_value = scalar_or_bytes(ma);
            r.deviant_value = scalar_or_bytes(oa);
            return r;
        }
        if (ma.bytes != oa.bytes) {
            std::size_t byte = 0;
            std::size_t n = std::min(ma.bytes.size(), oa.bytes.size());
            while (byte < n && ma.bytes[byte] == oa.bytes[byte]) ++byte;
            r.field += "[" + std::to_string(byte) + "]";
            r.master_value = scalar_or_bytes(ma);
            r.deviant_value = scalar_or_bytes(oa);
            return r;
        }
    }
    return std::nullopt;
}

}  // namespace detail

// The lock-step comparison core: normalize one event per replica (index 0 is
// the master) and allow only if all agree. The result value is filled in by
// the caller once the master's call has actually executed.
inline Verdict lockstep_step(const std::vector<RvpEvent>& events,
                             const std::vector<const AddressMap*>& maps,
                             std::uint64_t event_index,
                             std::vector<NormalizedEvent>* normalized_out = nullptr) {
    std::vector<NormalizedEvent> norm(events.size());
    for (std::uint32_t r = 0; r < events.size(); ++r) {
        UnknownAddress fault{};
        auto n = normalize_event(events[r], *maps[r], &fault);
        if (!n) {
            DivergenceReport rep;
            rep.replica = r;
            rep.thread = events[r].thread;
            rep.event_index = event_index;
            rep.field = "address";
            rep.master_value = "<declared var>";
            rep.deviant_value = "addr:" + std::to_string(fault.addr.value);
            return Verdict::diverged(std::move(rep));
        }
        norm[r] = std::move(*n);
    }
    for (std::uint32_t r = 1; r < norm.size(); ++r) {
        auto diff = detail::first_difference(norm[0], norm[r], r, event_index);
        if (diff) return Verdict::diverged(std::move(*diff));
    }
    if (normalized_out) *normalized_out = std::move(norm);
    return Verdict::allow(0);
}

class Monitor : public HiddenResolver {
public:
    struct Config {
        std::uint32_t replicas = 2;
        std::uint64_t seed = 0;
        bool arbitrate_futex = true;
    };

    // A logical rendezvous slot: the next unprocessed event of one thread
    // ordinal across all replicas. It stays open after comparison while a
    // blocking master call (futex wait, join) is in flight.
    struct Batch {
        ThreadId thread = 0;
        std::uint64_t index = 0;  // per-thread event index
        std::uint32_t arrived = 0;
        std::vector<bool> present;
        std::vector<RvpEvent> events;
        std::vector<NormalizedEvent> norm;
        bool compared = false;
        bool open = false;
    };

    explicit Monitor(const Config& cfg) : cfg_(cfg), hidden_rng_(hash_combine(cfg.seed, 0x484241)) {
        maps_.resize(cfg.replicas, nullptr);
        agents_.resize(cfg.replicas, nullptr);
        registered_.resize(cfg.replicas, false);
    }

    const Config& config() const { return cfg_; }

    void attach_replica(std::uint32_t ordinal, const AddressMap* map, Agent* agent) {
        maps_[ordinal] = map;
        agents_[ordinal] = agent;
    }

    // The single startup RVP through which an agent hands its status flags
    // to the monitor. Configures the instance as master or slave and leaves
    // it disabled until a second thread exists.
    void agent_register(std::uint32_t ordinal) {
        if (ordinal >= cfg_.replicas || agents_[ordinal] == nullptr) throw UnknownReplica{};
        agents_[ordinal]->mark_registered();
        registered_[ordinal] = true;
        agents_[ordinal]->set_role(ordinal == 0 ? Role::Master : Role::Slave);
        agents_[ordinal]->set_enabled(false);
    }

    void set_agent_state(std::uint32_t ordinal, Role role, bool enabled) {
        if (ordinal >= cfg_.replicas || agents_[ordinal] == nullptr || !registered_[ordinal])
            throw UnknownReplica{};
        if (started_ && role != agents_[ordinal]->role()) throw UnsupportedTransition{};
        agents_[ordinal]->set_role(role);
        agents_[ordinal]->set_enabled(enabled);
    }

    void mark_started() { started_ = true; }

    // Lock-step live-thread accounting drives the enable/disable flips: the
    // agents only matter while more than one thread is running.
    void note_spawn_released() {
        ++live_threads_;
        if (live_threads_ == 2) set_all_enabled(true);
    }

    void note_join_released() {
        --live_threads_;
        if (live_threads_ == 1) set_all_enabled(false);
    }

    void set_all_enabled(bool enabled) {
        for (Agent* a : agents_)
            if (a && a->registered()) a->set_enabled(enabled);
    }

    std::uint32_t live_threads() const { return live_threads_; }

    // --- rendezvous ---

    // Returns the batch when every replica's event has arrived (comparison
    // already performed; on mismatch divergence() is set and the batch is
    // not returned). Blocks nothing itself: the runtime parks the submitting
    // thread until the batch is finished.
    Batch* submit(std::uint32_t replica, ThreadId thread, RvpEvent ev) {
        started_ = true;
        Batch& b = slot(thread);
        if (b.present[replica]) throw std::logic_error("replica submitted twice to one rendezvous");
        b.present[replica] = true;
        b.events[replica] = std::move(ev);
        ++b.arrived;
        if (b.arrived < cfg_.replicas) return nullptr;
        Verdict v = lockstep_step(b.events, maps_, b.index, &b.norm);
        b.compared = true;
        if (!v.allowed) {
            divergence_ = std::move(v.report);
            return nullptr;
        }
        return &b;
    }

    // Retires the batch and bumps the thread's logical event index.
    void finish(ThreadId thread) {
        auto it = active_.find(thread);
        if (it == active_.end()) return;
        std::uint64_t next = it->second.index + 1;
        active_.erase(it);
        next_index_[thread] = next;
    }

    Batch* open_batch(ThreadId thread) {
        auto it = active_.find(thread);
        return it == active_.end() ? nullptr : &it->second;
    }

    std::uint64_t next_event_index(ThreadId thread) const {
        auto it = active_.find(thread);
        if (it != active_.end()) return it->second.index;
        auto n = next_index_.find(thread);
        return n == next_index_.end() ? 0 : n->second;
    }

    const std::optional<DivergenceReport>& divergence() const { return divergence_; }
    void report_divergence(DivergenceReport r) {
        if (!divergence_) divergence_ = std::move(r);
    }

    // --- hidden buffer registry ---

    // Places one replica's view of the rings at a randomized, page-aligned
    // location in a 2^36-page space and hands back an unforgeable
    // capability. The location value itself never enters replica memory for
    // the secured agent.
    HiddenHandle allocate_hidden_buffer(std::uint32_t replica, const RingSet* rings) {
        HiddenHandle handle{hidden_rng_.next(), hidden_rng_.next()};
        std::uint64_t location = 0;
        for (;;) {
            location = (hidden_rng_.below((1ull << 36) - 2) + 1) << 12;
            bool clash = false;
            for (const auto& e : hidden_) clash |= e.location == location;
            if (!clash) break;
        }
        hidden_.push_back(Entry{handle, replica, location, rings});
        return handle;
    }

    std::optional<ResolvedRings> resolve_hidden(const HiddenHandle& h) const override {
        for (const Entry& e : hidden_)
            if (e.handle == h) return ResolvedRings{e.location, e.rings};
        return std::nullopt;
    }

    std::uint64_t hidden_location(std::uint32_t replica) const {
        for (const Entry& e : hidden_)
            if (e.replica == replica) return e.location;
        return 0;
    }

private:
    Batch& slot(ThreadId thread) {
        auto it = active_.find(thread);
        if (it != active_.end()) return it->second;
        Batch b;
        b.thread = thread;
        b.index = next_index_[thread];
        b.present.assign(cfg_.replicas, false);
        b.events.resize(cfg_.replicas);
        return active_.emplace(thread, std::move(b)).first->second;
    }

    struct Entry {
        HiddenHandle handle;
        std::uint32_t replica;
        std::uint64_t location;
        const RingSet* rings;
    };

    Config cfg_;
    std::vector<const AddressMap*> maps_;
    std::vector<Agent*> agents_;
    std::vector<bool> registered_;
    bool started_ = false;
    std::uint32_t live_threads_ = 1;
    std::unordered_map<ThreadId, Batch> active_;
    std::unordered_map<ThreadId, std::uint64_t> next_index_;
    std::optional<DivergenceReport> divergence_;
    SmallRng hidden_rng_;
    std::vector<Entry> hidden_;
};

}  // namespace mvee
