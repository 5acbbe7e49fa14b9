#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <thread>
#include <type_traits>
#include <vector>

namespace mvee {

// Spin-then-yield wait policy shared by producers (back-pressure) and the
// replay paths.
inline constexpr std::uint32_t kSpinsBeforeYield = 1024;

class Backoff {
public:
    void pause() {
        if (++spins_ >= kSpinsBeforeYield) {
            spins_ = 0;
            std::this_thread::yield();
        }
    }

private:
    std::uint32_t spins_ = 0;
};

struct RingOverwritten : std::logic_error {
    RingOverwritten() : std::logic_error("ring slot overwritten before consumption") {}
};

struct ProgressRegression : std::logic_error {
    ProgressRegression() : std::logic_error("consumption progress moved backwards") {}
};

// Bounded single-producer ring shared between the master replica (writer)
// and any number of slave replicas (readers). Publication is per-slot: the
// slot's sequence word is stored with release semantics after the payload,
// so a consumer that observes sequence == index + 1 may freely read the
// payload without looking at the head. Slots are reused only once every
// slave's consumed-prefix counter has passed them, which is what stands in
// for the read-only mapping of the real buffer: slaves only ever write
// their own progress cells.
template <typename Payload>
class ReplicationRing {
    static_assert(std::is_trivially_copyable_v<Payload>);

public:
    enum class ReadStatus : std::uint8_t { Ok, NotYetPublished };

    ReplicationRing(std::size_t capacity, std::uint32_t replica_count)
        : capacity_(capacity), mask_(capacity - 1), replica_count_(replica_count),
          slots_(new Slot[capacity]), progress_(new Cell[replica_count]) {
        if (capacity == 0 || (capacity & (capacity - 1)) != 0)
            throw std::invalid_argument("ring capacity must be a power of two");
        if (replica_count == 0) throw std::invalid_argument("ring needs at least one replica");
    }

    std::size_t capacity() const { return capacity_; }
    std::uint64_t head() const { return head_.load(std::memory_order_acquire); }

    std::uint64_t progress(std::uint32_t replica) const {
        return progress_[replica].value.load(std::memory_order_acquire);
    }

    // Smallest consumed prefix over the slave replicas; the producer may only
    // reuse slots below min + capacity. With no slaves there is no reader to
    // protect and the ring never exerts back-pressure.
    std::uint64_t min_slave_progress() const {
        if (replica_count_ <= 1) return head_.load(std::memory_order_acquire);
        std::uint64_t min = ~0ull;
        for (std::uint32_t r = 1; r < replica_count_; ++r) {
            std::uint64_t p = progress_[r].value.load(std::memory_order_acquire);
            if (p < min) min = p;
        }
        return min;
    }

    // Single producer only. Returns false when the ring is full (the caller
    // decides how to wait; publish() below is the blocking flavor).
    bool try_publish(const Payload& payload, std::uint64_t* index_out = nullptr) {
        std::uint64_t pos = head_.load(std::memory_order_relaxed);
        if (pos - min_slave_progress() >= capacity_) return false;
        Slot& slot = slots_[pos & mask_];
        slot.payload = payload;
        slot.sequence.store(pos + 1, std::memory_order_release);
        head_.store(pos + 1, std::memory_order_release);
        if (index_out) *index_out = pos;
        return true;
    }

    std::uint64_t publish(const Payload& payload) {
        std::uint64_t index = 0;
        Backoff backoff;
        while (!try_publish(payload, &index)) backoff.pause();
        return index;
    }

    // Wait-free consumer check: no head read needed. Throws RingOverwritten
    // when the requested generation is already gone, which can only mean the
    // caller's progress accounting is broken.
    ReadStatus read_slot(std::uint64_t index, Payload& out) const {
        const Slot& slot = slots_[index & mask_];
        std::uint64_t seq = slot.sequence.load(std::memory_order_acquire);
        if (seq == index + 1) {
            out = slot.payload;
            return ReadStatus::Ok;
        }
        if (seq < index + 1) return ReadStatus::NotYetPublished;
        throw RingOverwritten{};
    }

    // Progress cells are written only by threads of the owning replica.
    void advance_progress(std::uint32_t replica, std::uint64_t new_prefix) {
        Cell& cell = progress_[replica];
        std::uint64_t cur = cell.value.load(std::memory_order_relaxed);
        if (new_prefix < cur) throw ProgressRegression{};
        cell.value.store(new_prefix, std::memory_order_release);
    }

private:
    struct Slot {
        std::atomic<std::uint64_t> sequence{0};
        Payload payload{};
    };
    // Progress cells on separate cache lines: each is written by a different
    // replica and polled by the producer.
    struct alignas(64) Cell {
        std::atomic<std::uint64_t> value{0};
    };

    std::size_t capacity_;
    std::size_t mask_;
    std::uint32_t replica_count_;
    std::unique_ptr<Slot[]> slots_;
    alignas(64) std::atomic<std::uint64_t> head_{0};
    std::unique_ptr<Cell[]> progress_;
};

}  // namespace mvee
