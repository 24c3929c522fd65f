#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "udtarmor/checksum.hpp"

using namespace udtarmor;

namespace {

// Independent oracle: sum 16-bit big-endian words with explicit end-around
// carry folding, written differently from the library's accumulation loop.
uint16_t oracle_checksum(std::vector<uint8_t> bytes) {
    if (bytes.size() % 2) bytes.push_back(0);
    uint64_t sum = 0;
    for (std::size_t i = 0; i < bytes.size(); i += 2)
        sum += (uint64_t{bytes[i]} << 8) | bytes[i + 1];
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<uint16_t>(~sum & 0xFFFF);
}

}  // namespace

TEST_CASE("checksum matches the independent oracle on random buffers") {
    std::mt19937_64 rng(0xC0DE);
    for (int i = 0; i < 1000; ++i) {
        std::vector<uint8_t> buf(rng() % 200);
        for (auto& b : buf) b = static_cast<uint8_t>(rng());
        CHECK(internet_checksum(buf) == oracle_checksum(buf));
    }
}

TEST_CASE("odd-length buffers checksum as if zero-padded") {
    std::mt19937_64 rng(0x0DD);
    for (int i = 0; i < 200; ++i) {
        std::vector<uint8_t> odd(2 * (rng() % 40) + 1);
        for (auto& b : odd) b = static_cast<uint8_t>(rng());
        auto padded = odd;
        padded.push_back(0);
        CHECK(internet_checksum(odd) == internet_checksum(padded));
    }
}

TEST_CASE("checksum is invariant under 16-bit word shuffles") {
    // one's-complement addition commutes, so any word permutation agrees
    std::mt19937_64 rng(0x5F);
    std::vector<uint8_t> buf(64);
    for (auto& b : buf) b = static_cast<uint8_t>(rng());
    uint16_t base = internet_checksum(buf);
    for (int i = 0; i < 50; ++i) {
        std::vector<std::pair<uint8_t, uint8_t>> words;
        for (std::size_t j = 0; j < buf.size(); j += 2)
            words.emplace_back(buf[j], buf[j + 1]);
        std::shuffle(words.begin(), words.end(), rng);
        std::vector<uint8_t> shuffled;
        for (auto [a, b] : words) {
            shuffled.push_back(a);
            shuffled.push_back(b);
        }
        CHECK(internet_checksum(shuffled) == base);
    }
}

TEST_CASE("every single byte change alters the checksum of a random datagram") {
    std::mt19937_64 rng(0xF00D);
    std::vector<uint8_t> buf(32);
    for (auto& b : buf) b = static_cast<uint8_t>(rng());
    uint16_t base = internet_checksum(buf);
    for (std::size_t i = 0; i < buf.size(); ++i) {
        for (int delta = 1; delta < 256; ++delta) {
            auto mutated = buf;
            mutated[i] = static_cast<uint8_t>(mutated[i] + delta);
            // one's-complement arithmetic: 0x00 and 0xFF words can alias, so
            // only demand a change when the mutation isn't a ±0 alias
            if (internet_checksum(mutated) == base)
                CHECK(oracle_checksum(mutated) == base);
        }
    }
}

TEST_CASE("pseudo-header serializes to the documented 12 bytes") {
    PseudoHeader ph = build_pseudo_header(Ipv4::parse("192.168.0.1"),
                                          Ipv4::parse("10.0.0.2"), 0x1234);
    auto bytes = ph.serialize();
    std::array<uint8_t, 12> want = {192, 168, 0, 1, 10, 0, 0, 2, 0, 17, 0x12, 0x34};
    CHECK(bytes == want);
}

TEST_CASE("pseudo-header length overflow is rejected") {
    CHECK_THROWS_AS(
        build_pseudo_header(Ipv4::parse("1.2.3.4"), Ipv4::parse("5.6.7.8"), 65536),
        RangeError);
}

TEST_CASE("ipv4 parse round trips and rejects junk") {
    CHECK(Ipv4::parse("127.0.0.1").to_string() == "127.0.0.1");
    CHECK(Ipv4::parse("255.255.255.255").octets == std::array<uint8_t, 4>{255, 255, 255, 255});
    CHECK_THROWS_AS(Ipv4::parse("256.0.0.1"), RangeError);
    CHECK_THROWS_AS(Ipv4::parse("1.2.3"), RangeError);
    CHECK_THROWS_AS(Ipv4::parse("a.b.c.d"), RangeError);
}

TEST_CASE("udp datagram checksum verify detects corruption") {
    std::mt19937_64 rng(0xBEEF);
    PseudoHeader ph = build_pseudo_header(Ipv4::parse("10.0.0.1"),
                                          Ipv4::parse("10.0.0.2"), 8 + 24);
    std::vector<uint8_t> header(8, 0);
    header[4] = static_cast<uint8_t>((8 + 24) >> 8);
    header[5] = static_cast<uint8_t>(8 + 24);
    std::vector<uint8_t> data(24);
    for (auto& b : data) b = static_cast<uint8_t>(rng());

    // compute over pseudo ++ header(zero checksum) ++ data, store at bytes 6..7
    uint16_t sum = ones_complement_checksum(ph, header, data);
    std::vector<uint8_t> datagram = header;
    datagram.insert(datagram.end(), data.begin(), data.end());
    datagram[6] = static_cast<uint8_t>(sum >> 8);
    datagram[7] = static_cast<uint8_t>(sum);
    CHECK(verify_udp_checksum(ph, datagram));

    auto bad = datagram;
    bad[13] ^= 0x40;
    CHECK_FALSE(verify_udp_checksum(ph, bad));
    CHECK_THROWS_AS(verify_udp_checksum(ph, std::vector<uint8_t>(5, 0)), TruncatedDatagram);
}
