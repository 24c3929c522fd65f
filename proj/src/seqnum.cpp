#include "udtarmor/seqnum.hpp"

#include <algorithm>

namespace udtarmor {

void LossList::insert(uint64_t first, uint64_t last) {
    if (first > last) std::swap(first, last);

    // find insertion point and merge with overlapping/adjacent neighbours
    auto it = std::lower_bound(ranges_.begin(), ranges_.end(), first,
                               [](const Range& r, uint64_t v) { return r.last + 1 < v; });
    Range merged{first, last};
    auto erase_begin = it;
    while (it != ranges_.end() && it->first <= merged.last + 1) {
        merged.first = std::min(merged.first, it->first);
        merged.last = std::max(merged.last, it->last);
        ++it;
    }
    it = ranges_.erase(erase_begin, it);
    ranges_.insert(it, merged);
}

std::optional<uint64_t> LossList::pop_front() {
    if (ranges_.empty()) return std::nullopt;
    uint64_t v = ranges_.front().first;
    if (ranges_.front().first == ranges_.front().last)
        ranges_.erase(ranges_.begin());
    else
        ranges_.front().first++;
    return v;
}

void LossList::remove(uint64_t seq) {
    auto it = std::lower_bound(ranges_.begin(), ranges_.end(), seq,
                               [](const Range& r, uint64_t v) { return r.last < v; });
    if (it == ranges_.end() || it->first > seq) return;
    Range r = *it;
    it = ranges_.erase(it);
    if (seq + 1 <= r.last) it = ranges_.insert(it, Range{seq + 1, r.last});
    if (seq > 0 && r.first < seq) ranges_.insert(it, Range{r.first, seq - 1});
}

void LossList::remove_below(uint64_t seq) {
    while (!ranges_.empty() && ranges_.front().last < seq)
        ranges_.erase(ranges_.begin());
    if (!ranges_.empty() && ranges_.front().first < seq)
        ranges_.front().first = seq;
}

uint64_t LossList::packet_count() const {
    uint64_t n = 0;
    for (const auto& r : ranges_) n += r.last - r.first + 1;
    return n;
}

}  // namespace udtarmor
