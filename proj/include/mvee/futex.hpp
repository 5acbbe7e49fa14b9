#pragma once

#include <cassert>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mvee/core.hpp"
#include "mvee/rng.hpp"

namespace mvee {

inline constexpr std::uint64_t kFutexWouldBlock = ~0ull;  // models EWOULDBLOCK

// Per-replica waiter queues keyed by address, the moral equivalent of the
// kernel futex API: wait blocks the calling thread until the word changes,
// wake releases up to count waiters picked by the replica's seeded picker.
class VirtualFutexTable {
public:
    enum class WaitResult : std::uint8_t { Enqueued, WouldBlock };

    // The caller supplies the current word value; the table does not own
    // replica memory.
    WaitResult wait(Address word, std::uint64_t expected, std::uint64_t current, ThreadId thread) {
        if (current != expected) return WaitResult::WouldBlock;
        assert(!is_waiting(thread));
        queues_[word.value].push_back(thread);
        waiting_.insert({thread, word.value});
        return WaitResult::Enqueued;
    }

    // Returns the woken thread ids (at most count), removing them from the
    // queue. Selection order comes from the picker.
    std::vector<ThreadId> wake(Address word, std::uint64_t count, SmallRng& picker) {
        std::vector<ThreadId> woken;
        auto it = queues_.find(word.value);
        if (it == queues_.end()) return woken;
        auto& queue = it->second;
        while (!queue.empty() && woken.size() < count) {
            std::size_t pick = static_cast<std::size_t>(picker.below(queue.size()));
            ThreadId t = queue[pick];
            queue.erase(queue.begin() + static_cast<std::ptrdiff_t>(pick));
            waiting_.erase(t);
            woken.push_back(t);
        }
        if (queue.empty()) queues_.erase(it);
        return woken;
    }

    bool is_waiting(ThreadId thread) const { return waiting_.count(thread) != 0; }

    std::size_t waiter_count(Address word) const {
        auto it = queues_.find(word.value);
        return it == queues_.end() ? 0 : it->second.size();
    }

private:
    std::unordered_map<std::uint64_t, std::vector<ThreadId>> queues_;
    std::unordered_map<ThreadId, std::uint64_t> waiting_;
};

}  // namespace mvee
