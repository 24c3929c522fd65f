#pragma once

#include <cstdint>
#include <optional>
#include <vector>

// 31-bit packet sequence arithmetic with wraparound, and the loss-range list
// shared by sender and receiver bookkeeping.

namespace udtarmor {

inline constexpr uint32_t kSeqModulus = 1u << 31;
inline constexpr uint32_t kSeqHalfRange = 1u << 30;

inline uint32_t seq_next(uint32_t s) { return (s + 1) & (kSeqModulus - 1); }

inline uint32_t seq_add(uint32_t s, uint64_t n) {
    return static_cast<uint32_t>((s + n) % kSeqModulus);
}

// Signed modular distance from `from` to `to`, in [-2^30, 2^30).
inline int64_t seq_offset(uint32_t from, uint32_t to) {
    uint32_t d = (to - from) & (kSeqModulus - 1);
    if (d >= kSeqHalfRange) return static_cast<int64_t>(d) - kSeqModulus;
    return static_cast<int64_t>(d);
}

// a precedes b iff 0 < (b-a) mod 2^31 < 2^30
inline bool seq_precedes(uint32_t a, uint32_t b) {
    uint32_t d = (b - a) & (kSeqModulus - 1);
    return d > 0 && d < kSeqHalfRange;
}

// Ordered, disjoint ranges over unwrapped (64-bit) sequence indices. The
// engine unwraps 31-bit wire sequences against its own window before use, so
// the list itself never has to reason about wraparound.
class LossList {
public:
    struct Range {
        uint64_t first;
        uint64_t last;  // inclusive
        bool operator==(const Range&) const = default;
    };

    void insert(uint64_t first, uint64_t last);
    void insert(uint64_t seq) { insert(seq, seq); }

    // Lowest pending sequence, removed from the list.
    std::optional<uint64_t> pop_front();

    void remove(uint64_t seq);
    void remove_below(uint64_t seq);  // drop everything < seq

    bool empty() const { return ranges_.empty(); }
    uint64_t packet_count() const;
    const std::vector<Range>& ranges() const { return ranges_; }

private:
    std::vector<Range> ranges_;  // sorted, disjoint, non-adjacent
};

}  // namespace udtarmor
