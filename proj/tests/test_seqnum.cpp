#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "udtarmor/seqnum.hpp"
#include "udtarmor/wire.hpp"

using namespace udtarmor;

TEST_CASE("sequence increment wraps at 2^31") {
    CHECK(seq_next(0) == 1);
    CHECK(seq_next(kSeqMask - 1) == kSeqMask);
    CHECK(seq_next(kSeqMask) == 0);  // 2^31 - 1 rolls to 0
    CHECK(seq_add(kSeqMask, 1) == 0);
    CHECK(seq_add(kSeqMask - 99, 200) == 100);
}

TEST_CASE("offset is the signed modular distance") {
    CHECK(seq_offset(0, 1) == 1);
    CHECK(seq_offset(1, 0) == -1);
    CHECK(seq_offset(kSeqMask, 0) == 1);        // wrap forward
    CHECK(seq_offset(0, kSeqMask) == -1);       // wrap backward
    CHECK(seq_offset(5, 5) == 0);
    // half-space tie: distance 2^30 maps to the negative side either way
    CHECK(seq_offset(0, 1u << 30) == -(1 << 30));
    CHECK(seq_offset(1u << 30, 0) == -(1 << 30));
}

TEST_CASE("precedes is consistent with offset on random pairs") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10000; ++i) {
        uint32_t a = static_cast<uint32_t>(rng()) & kSeqMask;
        uint32_t b = static_cast<uint32_t>(rng()) & kSeqMask;
        CHECK(seq_precedes(a, b) == (seq_offset(a, b) > 0));
    }
}

TEST_CASE("offset round trips through seq_add") {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 10000; ++i) {
        uint32_t a = static_cast<uint32_t>(rng()) & kSeqMask;
        int32_t d = static_cast<int32_t>(rng() % (1u << 20)) - (1 << 19);
        uint32_t b = d >= 0 ? seq_add(a, static_cast<uint32_t>(d))
                            : seq_add(a, static_cast<uint32_t>((1u << 31) + d));
        CHECK(seq_offset(a, b) == d);
    }
}

namespace {

// brute-force oracle: a plain set of sequence numbers
struct SetOracle {
    std::set<uint64_t> seqs;

    void insert(uint64_t first, uint64_t last) {
        for (uint64_t s = first; s <= last; ++s) seqs.insert(s);
    }
    void remove(uint64_t s) { seqs.erase(s); }
    void remove_below(uint64_t s) { seqs.erase(seqs.begin(), seqs.lower_bound(s)); }
    std::vector<LossList::Range> ranges() const {
        std::vector<LossList::Range> out;
        for (uint64_t s : seqs) {
            if (!out.empty() && out.back().last + 1 == s) out.back().last = s;
            else out.push_back({s, s});
        }
        return out;
    }
};

}  // namespace

TEST_CASE("loss list merges overlapping inserts") {
    LossList ll;
    ll.insert(10, 12);
    ll.insert(11, 14);
    auto r = ll.ranges();
    REQUIRE(r.size() == 1);
    CHECK(r[0] == LossList::Range{10, 14});
    CHECK(ll.packet_count() == 5);

    ll.insert(16, 16);
    CHECK(ll.ranges().size() == 2);
    ll.insert(15, 15);  // bridges 10..14 and 16..16
    r = ll.ranges();
    REQUIRE(r.size() == 1);
    CHECK(r[0] == LossList::Range{10, 16});
}

TEST_CASE("loss list matches a brute-force set under random operations") {
    std::mt19937_64 rng(0x10C);
    for (int trial = 0; trial < 50; ++trial) {
        LossList ll;
        SetOracle oracle;
        for (int op = 0; op < 400; ++op) {
            uint64_t a = rng() % 300;
            switch (rng() % 3) {
                case 0: {
                    uint64_t b = a + rng() % 8;
                    ll.insert(a, b);
                    oracle.insert(a, b);
                    break;
                }
                case 1:
                    ll.remove(a);
                    oracle.remove(a);
                    break;
                case 2:
                    ll.remove_below(a);
                    oracle.remove_below(a);
                    break;
            }
            REQUIRE(ll.ranges() == oracle.ranges());
            REQUIRE(ll.packet_count() == oracle.seqs.size());
        }
    }
}

TEST_CASE("pop_front yields sequences in order") {
    LossList ll;
    ll.insert(5, 7);
    ll.insert(20, 20);
    CHECK(ll.pop_front() == 5);
    CHECK(ll.pop_front() == 6);
    CHECK(ll.pop_front() == 7);
    CHECK(ll.pop_front() == 20);
    CHECK_FALSE(ll.pop_front().has_value());
}
