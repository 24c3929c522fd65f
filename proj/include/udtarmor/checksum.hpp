#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "udtarmor/errors.hpp"

// UDP pseudo-header and one's-complement internet checksum. The 12-byte
// pseudo-header (src, dst, 2-byte protocol, 2-byte length) is used both for
// datagram integrity and as the first item of the AO digest input; it is
// never transmitted.

namespace udtarmor {

struct Ipv4 {
    std::array<uint8_t, 4> octets{};

    static Ipv4 parse(const std::string& dotted);  // throws RangeError
    std::string to_string() const;

    auto operator<=>(const Ipv4&) const = default;
};

inline constexpr uint16_t kProtocolUdp = 17;
inline constexpr std::size_t kPseudoHeaderSize = 12;
inline constexpr std::size_t kUdpHeaderSize = 8;

struct PseudoHeader {
    Ipv4 src;
    Ipv4 dst;
    uint16_t protocol = kProtocolUdp;
    uint16_t udp_length = 0;

    std::array<uint8_t, kPseudoHeaderSize> serialize() const;

    bool operator==(const PseudoHeader&) const = default;
};

// throws RangeError when udp_length > 65535
PseudoHeader build_pseudo_header(Ipv4 src, Ipv4 dst, std::size_t udp_length);

// RFC 1071 style sum over one buffer, big-endian 16-bit words, odd length
// padded with a zero octet. Returns the complemented 16-bit sum.
uint16_t internet_checksum(std::span<const uint8_t> bytes);

// Checksum over pseudo ++ udp_header ++ data. The caller supplies the 8-byte
// UDP header with its checksum field already zeroed.
uint16_t ones_complement_checksum(const PseudoHeader& pseudo,
                                  std::span<const uint8_t> udp_header,
                                  std::span<const uint8_t> data);

// True iff the checksum stored at bytes 6..7 of the UDP header matches a
// recomputation. Throws TruncatedDatagram when the datagram is < 8 bytes.
bool verify_udp_checksum(const PseudoHeader& pseudo,
                         std::span<const uint8_t> udp_datagram);

}  // namespace udtarmor
