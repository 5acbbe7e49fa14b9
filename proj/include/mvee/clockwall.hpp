#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "mvee/core.hpp"

namespace mvee {

using ClockId = std::uint32_t;

// Maps a memory word to one of C statically allocated logical clocks.
// Fibonacci (multiplicative) hash of the word index, range-reduced through
// the top bits so any C >= 1 works. Cheap on purpose; collisions just fold
// unrelated words onto one clock, which costs stalls but never correctness.
inline ClockId clock_of(Address word, std::uint32_t clock_count) {
    std::uint64_t mixed = (word.value >> 3) * 0x9E3779B97F4A7C15ull;
    return static_cast<ClockId>(
        (static_cast<unsigned __int128>(mixed) * clock_count) >> 64);
}

// Fixed array of logical clocks. The master owns one wall; every slave
// replica reconstructs the increments on a local wall of its own — the two
// are never compared directly. Each (clock, time) pair is claimed by exactly
// one operation, so slave-side advancement needs no lock: the thread that
// observed time t is the only writer of the t -> t+1 transition.
class ClockWall {
public:
    explicit ClockWall(std::uint32_t count)
        : count_(count), cells_(new std::atomic<std::uint64_t>[count]) {
        for (std::uint32_t i = 0; i < count; ++i) cells_[i].store(0, std::memory_order_relaxed);
    }

    std::uint32_t count() const { return count_; }

    std::uint64_t time(ClockId c) const { return cells_[c].load(std::memory_order_acquire); }

    void advance(ClockId c) { cells_[c].store(cells_[c].load(std::memory_order_relaxed) + 1, std::memory_order_release); }

private:
    std::uint32_t count_;
    std::unique_ptr<std::atomic<std::uint64_t>[]> cells_;
};

}  // namespace mvee
