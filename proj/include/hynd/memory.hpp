#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>

namespace hynd {

struct MemoryStats {
    std::uint64_t live_bytes = 0;
    std::uint64_t peak_bytes = 0;
    std::uint64_t allocation_count = 0;
};

/// Process-wide accounting of tensor payload bytes. Bookkeeping structures
/// (shapes, tape entries, scratch) are deliberately not counted.
class MemoryLedger {
public:
    static MemoryLedger& instance();

    void on_alloc(std::size_t bytes);
    void on_free(std::size_t bytes);

    // peak := live; peak stays monotone nondecreasing until the next reset.
    void reset_peak();

    MemoryStats stats() const;

private:
    MemoryLedger() = default;

    std::atomic<std::uint64_t> live_{0};
    std::atomic<std::uint64_t> peak_{0};
    std::atomic<std::uint64_t> allocations_{0};
};

MemoryStats memory_stats();
void reset_peak_memory();

} // namespace hynd
