#include "hynd/memory.hpp"

namespace hynd {

MemoryLedger& MemoryLedger::instance() {
    static MemoryLedger ledger;
    return ledger;
}

void MemoryLedger::on_alloc(std::size_t bytes) {
    const std::uint64_t live = live_.fetch_add(bytes, std::memory_order_relaxed) + bytes;
    allocations_.fetch_add(1, std::memory_order_relaxed);
    std::uint64_t peak = peak_.load(std::memory_order_relaxed);
    while (live > peak && !peak_.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
    }
}

void MemoryLedger::on_free(std::size_t bytes) {
    live_.fetch_sub(bytes, std::memory_order_relaxed);
}

void MemoryLedger::reset_peak() {
    peak_.store(live_.load(std::memory_order_relaxed), std::memory_order_relaxed);
}

MemoryStats MemoryLedger::stats() const {
    MemoryStats s;
    s.live_bytes = live_.load(std::memory_order_relaxed);
    s.peak_bytes = peak_.load(std::memory_order_relaxed);
    s.allocation_count = allocations_.load(std::memory_order_relaxed);
    if (s.peak_bytes < s.live_bytes) {
        s.peak_bytes = s.live_bytes;
    }
    return s;
}

MemoryStats memory_stats() { return MemoryLedger::instance().stats(); }

void reset_peak_memory() { MemoryLedger::instance().reset_peak(); }

} // namespace hynd
