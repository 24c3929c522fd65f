#include "udtarmor/checksum.hpp"

#include <cstdio>

namespace udtarmor {

Ipv4 Ipv4::parse(const std::string& dotted) {
    unsigned a, b, c, d;
    char tail;
    if (std::sscanf(dotted.c_str(), "%u.%u.%u.%u%c", &a, &b, &c, &d, &tail) != 4 ||
        a > 255 || b > 255 || c > 255 || d > 255)
        throw RangeError("bad IPv4 address: " + dotted);
    return Ipv4{{static_cast<uint8_t>(a), static_cast<uint8_t>(b),
                 static_cast<uint8_t>(c), static_cast<uint8_t>(d)}};
}

std::string Ipv4::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", octets[0], octets[1], octets[2],
                  octets[3]);
    return buf;
}

std::array<uint8_t, kPseudoHeaderSize> PseudoHeader::serialize() const {
    std::array<uint8_t, kPseudoHeaderSize> out{};
    std::copy(src.octets.begin(), src.octets.end(), out.begin());
    std::copy(dst.octets.begin(), dst.octets.end(), out.begin() + 4);
    out[8] = static_cast<uint8_t>(protocol >> 8);
    out[9] = static_cast<uint8_t>(protocol & 0xFF);
    out[10] = static_cast<uint8_t>(udp_length >> 8);
    out[11] = static_cast<uint8_t>(udp_length & 0xFF);
    return out;
}

PseudoHeader build_pseudo_header(Ipv4 src, Ipv4 dst, std::size_t udp_length) {
    if (udp_length > 0xFFFF) throw RangeError("udp_length exceeds 65535");
    PseudoHeader p;
    p.src = src;
    p.dst = dst;
    p.udp_length = static_cast<uint16_t>(udp_length);
    return p;
}

namespace {

// end-around-carry accumulation; pads odd lengths with a zero octet
uint32_t accumulate16(std::span<const uint8_t> bytes, uint32_t sum) {
    std::size_t i = 0;
    for (; i + 1 < bytes.size(); i += 2)
        sum += (static_cast<uint32_t>(bytes[i]) << 8) | bytes[i + 1];
    if (i < bytes.size()) sum += static_cast<uint32_t>(bytes[i]) << 8;
    return sum;
}

uint16_t fold_and_complement(uint32_t sum) {
    while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
    return static_cast<uint16_t>(~sum & 0xFFFF);
}

}  // namespace

uint16_t internet_checksum(std::span<const uint8_t> bytes) {
    return fold_and_complement(accumulate16(bytes, 0));
}

uint16_t ones_complement_checksum(const PseudoHeader& pseudo,
                                  std::span<const uint8_t> udp_header,
                                  std::span<const uint8_t> data) {
    auto ph = pseudo.serialize();
    uint32_t sum = accumulate16(ph, 0);
    sum = accumulate16(udp_header, sum);
    sum = accumulate16(data, sum);
    return fold_and_complement(sum);
}

bool verify_udp_checksum(const PseudoHeader& pseudo,
                         std::span<const uint8_t> udp_datagram) {
    if (udp_datagram.size() < kUdpHeaderSize)
        throw TruncatedDatagram("UDP datagram shorter than 8 bytes");

    uint16_t stored_checksum =
        static_cast<uint16_t>((udp_datagram[6] << 8) | udp_datagram[7]);

    std::array<uint8_t, kUdpHeaderSize> header{};
    std::copy(udp_datagram.begin(), udp_datagram.begin() + kUdpHeaderSize,
              header.begin());
    header[6] = 0;
    header[7] = 0;
    uint16_t computed = ones_complement_checksum(
        pseudo, header, udp_datagram.subspan(kUdpHeaderSize));
    return computed == stored_checksum;
}

}  // namespace udtarmor
