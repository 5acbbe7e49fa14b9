#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvee/rng.hpp"

namespace mvee {

using ThreadId = std::uint32_t;
using VarId = std::uint32_t;

enum class Role : std::uint8_t { Master, Slave };

struct ReplicaId {
    std::uint32_t ordinal = 0;
    Role role = Role::Master;
};

inline ReplicaId make_replica(std::uint32_t ordinal) {
    return ReplicaId{ordinal, ordinal == 0 ? Role::Master : Role::Slave};
}

// Synthetic word-aligned address inside a replica's (simulated) address space.
struct Address {
    std::uint64_t value = 0;
    friend bool operator==(const Address&, const Address&) = default;
    friend auto operator<=>(const Address&, const Address&) = default;
};

enum class OpKind : std::uint8_t {
    CompareAndSwap,
    Exchange,
    AtomicStore,
    AtomicLoad,
    AtomicAddSub,
    BarrierStore,
    UnprotectedLoad,
    UnprotectedStore,
};

inline const char* op_kind_name(OpKind k) {
    switch (k) {
        case OpKind::CompareAndSwap: return "cas";
        case OpKind::Exchange: return "xchg";
        case OpKind::AtomicStore: return "store";
        case OpKind::AtomicLoad: return "load";
        case OpKind::AtomicAddSub: return "addsub";
        case OpKind::BarrierStore: return "barrier_store";
        case OpKind::UnprotectedLoad: return "plain_load";
        case OpKind::UnprotectedStore: return "plain_store";
    }
    return "?";
}

inline bool is_sync_kind(OpKind k) {
    return k != OpKind::UnprotectedLoad && k != OpKind::UnprotectedStore;
}

// ---------------------------------------------------------------------------
// Diversified address synthesis.
//
// Each replica maps logical variables to private addresses: a seeded Feistel
// permutation of 2^20 slots, one 64-byte stride apart, above a fixed base.
// Distinct cache lines keep benchmark timings honest; the permutation keeps
// the map injective per replica and different between replicas.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kAddressBase = 0x7000'0000'0000ull;
inline constexpr std::uint64_t kAddressStride = 64;
inline constexpr std::uint32_t kAddressSlots = 1u << 20;

inline Address diversify_address(VarId var, std::uint32_t replica, std::uint64_t seed) {
    std::uint64_t key = hash_combine(mix64(seed), 0x5245504Cull + replica);
    std::uint32_t slot = feistel20(var & (kAddressSlots - 1), key);
    return Address{kAddressBase + static_cast<std::uint64_t>(slot) * kAddressStride};
}

// Forward map for a replica's declared variables plus the reverse lookup the
// monitor needs to normalize events.
class AddressMap {
public:
    AddressMap() = default;
    AddressMap(std::uint32_t var_count, std::uint32_t replica, std::uint64_t seed)
        : replica_(replica), seed_(seed) {
        forward_.reserve(var_count);
        reverse_.reserve(var_count * 2);
        for (VarId v = 0; v < var_count; ++v) {
            Address a = diversify_address(v, replica, seed);
            forward_.push_back(a);
            reverse_.emplace(a.value, v);
        }
    }

    Address address_of(VarId v) const { return forward_[v]; }

    std::optional<VarId> var_of(Address a) const {
        auto it = reverse_.find(a.value);
        if (it == reverse_.end()) return std::nullopt;
        return it->second;
    }

    std::uint32_t var_count() const { return static_cast<std::uint32_t>(forward_.size()); }
    std::uint32_t replica() const { return replica_; }
    std::uint64_t seed() const { return seed_; }

private:
    std::uint32_t replica_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<Address> forward_;
    std::unordered_map<std::uint64_t, VarId> reverse_;
};

// ---------------------------------------------------------------------------
// Monitor-visible events.
// ---------------------------------------------------------------------------

enum class RvpCall : std::uint8_t {
    Write,
    Read,
    Open,
    GetPid,
    FutexWait,
    FutexWake,
    Spawn,
    Join,
    AgentRegister,
};

inline const char* rvp_call_name(RvpCall c) {
    switch (c) {
        case RvpCall::Write: return "write";
        case RvpCall::Read: return "read";
        case RvpCall::Open: return "open";
        case RvpCall::GetPid: return "getpid";
        case RvpCall::FutexWait: return "futex_wait";
        case RvpCall::FutexWake: return "futex_wake";
        case RvpCall::Spawn: return "spawn";
        case RvpCall::Join: return "join";
        case RvpCall::AgentRegister: return "agent_register";
    }
    return "?";
}

struct RvpArg {
    enum class Kind : std::uint8_t { Scalar, Bytes, Addr, Var };

    Kind kind = Kind::Scalar;
    std::uint64_t scalar = 0;   // Scalar, Addr (address value) or Var (var id)
    std::string bytes;          // Bytes only

    static RvpArg make_scalar(std::uint64_t v) { return {Kind::Scalar, v, {}}; }
    static RvpArg make_bytes(std::string b) { return {Kind::Bytes, 0, std::move(b)}; }
    static RvpArg make_addr(Address a) { return {Kind::Addr, a.value, {}}; }
    static RvpArg make_var(VarId v) { return {Kind::Var, v, {}}; }

    friend bool operator==(const RvpArg&, const RvpArg&) = default;
};

struct RvpEvent {
    ThreadId thread = 0;
    RvpCall call = RvpCall::Write;
    std::vector<RvpArg> args;

    friend bool operator==(const RvpEvent&, const RvpEvent&) = default;
};

// Same shape as RvpEvent with every Addr argument rewritten to its VarId.
// For benign executions the normalized streams of all replicas are identical.
struct NormalizedEvent {
    ThreadId thread = 0;
    RvpCall call = RvpCall::Write;
    std::vector<RvpArg> args;

    friend bool operator==(const NormalizedEvent&, const NormalizedEvent&) = default;
};

// An event referenced memory outside the declared shared variables. The
// monitor treats this as divergence evidence.
struct UnknownAddress {
    Address addr;
};

inline std::optional<NormalizedEvent> normalize_event(const RvpEvent& e, const AddressMap& map,
                                                      UnknownAddress* fault = nullptr) {
    NormalizedEvent out;
    out.thread = e.thread;
    out.call = e.call;
    out.args.reserve(e.args.size());
    for (const RvpArg& a : e.args) {
        if (a.kind == RvpArg::Kind::Addr) {
            auto v = map.var_of(Address{a.scalar});
            if (!v) {
                if (fault) *fault = UnknownAddress{Address{a.scalar}};
                return std::nullopt;
            }
            out.args.push_back(RvpArg::make_var(*v));
        } else {
            out.args.push_back(a);
        }
    }
    return out;
}

inline std::string arg_to_string(const RvpArg& a) {
    switch (a.kind) {
        case RvpArg::Kind::Scalar: return std::to_string(a.scalar);
        case RvpArg::Kind::Bytes: return "\"" + a.bytes + "\"";
        case RvpArg::Kind::Addr: return "addr:" + std::to_string(a.scalar);
        case RvpArg::Kind::Var: return "var:" + std::to_string(a.scalar);
    }
    return "?";
}

inline std::string event_to_string(const NormalizedEvent& e) {
    std::string s = "t" + std::to_string(e.thread) + ":" + rvp_call_name(e.call) + "(";
    for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) s += ", ";
        s += arg_to_string(e.args[i]);
    }
    s += ")";
    return s;
}

}  // namespace mvee
