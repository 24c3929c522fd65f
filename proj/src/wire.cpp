#include "udtarmor/wire.hpp"

#include <algorithm>

namespace udtarmor {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v & 0xFF));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<uint8_t>(v & 0xFF));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v >> 32));
    put_u32(out, static_cast<uint32_t>(v & 0xFFFFFFFFu));
}

uint16_t get_u16(std::span<const uint8_t> in, std::size_t off) {
    return static_cast<uint16_t>((in[off] << 8) | in[off + 1]);
}

uint32_t get_u32(std::span<const uint8_t> in, std::size_t off) {
    return (static_cast<uint32_t>(in[off]) << 24) |
           (static_cast<uint32_t>(in[off + 1]) << 16) |
           (static_cast<uint32_t>(in[off + 2]) << 8) |
           static_cast<uint32_t>(in[off + 3]);
}

uint64_t get_u64(std::span<const uint8_t> in, std::size_t off) {
    return (static_cast<uint64_t>(get_u32(in, off)) << 32) | get_u32(in, off + 4);
}

bool control_type_known(uint16_t ctype) {
    switch (static_cast<ControlType>(ctype)) {
        case ControlType::Handshake:
        case ControlType::KeepAlive:
        case ControlType::Ack:
        case ControlType::Nak:
        case ControlType::Shutdown:
        case ControlType::Ack2:
        case ControlType::UserDefined:
            return true;
        default:
            return false;
    }
}

std::vector<uint8_t> encode_packet(const DataPacket& pkt) {
    const auto& h = pkt.header;
    if (h.sequence > kSeqMask) throw RangeError("sequence exceeds 31 bits");
    if (h.message_number > kMsgMask) throw RangeError("message number exceeds 29 bits");

    std::vector<uint8_t> out;
    out.reserve(kHeaderSize + pkt.payload.size());
    put_u32(out, h.sequence);  // top bit 0 by the range check above
    uint32_t word1 = (static_cast<uint32_t>(h.boundary) << 30) |
                     (h.in_order ? (1u << 29) : 0u) | h.message_number;
    put_u32(out, word1);
    put_u32(out, h.timestamp_us);
    put_u32(out, h.dest_socket_id);
    out.insert(out.end(), pkt.payload.begin(), pkt.payload.end());
    return out;
}

std::vector<uint8_t> encode_packet(const ControlPacket& pkt) {
    if (pkt.ctype > kCtypeMask) throw RangeError("control type exceeds 15 bits");
    if (pkt.control_info.size() > kMaxControlInfo)
        throw RangeError("control_info exceeds 1400 bytes");

    std::vector<uint8_t> out;
    out.reserve(kHeaderSize + pkt.control_info.size());
    uint32_t word0 = 0x80000000u | (static_cast<uint32_t>(pkt.ctype) << 16) |
                     pkt.extended_type;
    put_u32(out, word0);
    put_u32(out, pkt.additional_info);
    put_u32(out, pkt.timestamp_us);
    put_u32(out, pkt.dest_socket_id);
    out.insert(out.end(), pkt.control_info.begin(), pkt.control_info.end());
    return out;
}

std::vector<uint8_t> encode_packet(const Packet& pkt) {
    return std::visit([](const auto& p) { return encode_packet(p); }, pkt);
}

Packet decode_packet(std::span<const uint8_t> datagram) {
    if (datagram.size() < kHeaderSize)
        throw TruncatedPacket("datagram shorter than 16-byte header");

    uint32_t word0 = get_u32(datagram, 0);
    if ((word0 & 0x80000000u) == 0) {
        DataPacket pkt;
        uint32_t word1 = get_u32(datagram, 4);
        pkt.header.sequence = word0;
        pkt.header.boundary = static_cast<Boundary>(word1 >> 30);
        pkt.header.in_order = (word1 >> 29) & 1u;
        pkt.header.message_number = word1 & kMsgMask;
        pkt.header.timestamp_us = get_u32(datagram, 8);
        pkt.header.dest_socket_id = get_u32(datagram, 12);
        pkt.payload.assign(datagram.begin() + kHeaderSize, datagram.end());
        return pkt;
    }

    ControlPacket pkt;
    pkt.ctype = static_cast<uint16_t>((word0 >> 16) & kCtypeMask);
    pkt.extended_type = static_cast<uint16_t>(word0 & 0xFFFF);
    if (!control_type_known(pkt.ctype)) throw UnknownControlType(pkt.ctype);
    pkt.additional_info = get_u32(datagram, 4);
    pkt.timestamp_us = get_u32(datagram, 8);
    pkt.dest_socket_id = get_u32(datagram, 12);
    pkt.control_info.assign(datagram.begin() + kHeaderSize, datagram.end());
    return pkt;
}

std::size_t digest_length(HashAlg alg) {
    switch (alg) {
        case HashAlg::Md5: return 16;
        case HashAlg::Sha1: return 20;
        case HashAlg::Sha256: return 32;
    }
    return 0;
}

std::optional<HashAlg> hash_alg_from_id(uint8_t id) {
    if (id >= 1 && id <= 3) return static_cast<HashAlg>(id);
    return std::nullopt;
}

std::optional<HashAlg> hash_alg_from_name(const std::string& name) {
    if (name == "md5") return HashAlg::Md5;
    if (name == "sha1") return HashAlg::Sha1;
    if (name == "sha256") return HashAlg::Sha256;
    return std::nullopt;
}

const char* hash_alg_name(HashAlg alg) {
    switch (alg) {
        case HashAlg::Md5: return "md5";
        case HashAlg::Sha1: return "sha1";
        case HashAlg::Sha256: return "sha256";
    }
    return "?";
}

std::vector<uint8_t> append_ao_trailer(std::span<const uint8_t> datagram,
                                       const AoTrailer& trailer) {
    if (trailer.digest.size() != digest_length(trailer.algorithm))
        throw MalformedTrailer("digest length does not match algorithm");

    std::vector<uint8_t> out(datagram.begin(), datagram.end());
    out.push_back(static_cast<uint8_t>(trailer.algorithm));
    out.push_back(static_cast<uint8_t>(trailer.digest.size()));
    out.insert(out.end(), trailer.digest.begin(), trailer.digest.end());
    return out;
}

namespace {

std::optional<std::pair<std::vector<uint8_t>, AoTrailer>>
try_split_trailer(std::span<const uint8_t> datagram, std::size_t dlen) {
    if (datagram.size() < 2 + dlen) return std::nullopt;
    std::size_t base = datagram.size() - dlen - 2;
    auto alg = hash_alg_from_id(datagram[base]);
    if (!alg || digest_length(*alg) != dlen) return std::nullopt;
    if (datagram[base + 1] != dlen) return std::nullopt;
    AoTrailer trailer;
    trailer.algorithm = *alg;
    trailer.digest.assign(datagram.begin() + base + 2, datagram.end());
    return std::make_pair(
        std::vector<uint8_t>(datagram.begin(), datagram.begin() + base),
        std::move(trailer));
}

}  // namespace

std::pair<std::vector<uint8_t>, AoTrailer>
strip_ao_trailer(std::span<const uint8_t> datagram, HashAlg expected) {
    // The receiver's algorithm is site policy, so the trailer position is
    // known exactly; a trailer carrying a different (valid) algorithm still
    // parses and then fails digest comparison downstream.
    auto split = try_split_trailer(datagram, digest_length(expected));
    if (split) return std::move(*split);
    for (std::size_t dlen : {16u, 20u, 32u}) {
        if (dlen == digest_length(expected)) continue;
        if ((split = try_split_trailer(datagram, dlen))) return std::move(*split);
    }
    throw MalformedTrailer("no structurally valid trailer at end of datagram");
}

std::pair<std::vector<uint8_t>, AoTrailer>
strip_ao_trailer(std::span<const uint8_t> datagram) {
    for (std::size_t dlen : {16u, 20u, 32u}) {
        auto split = try_split_trailer(datagram, dlen);
        if (split) return std::move(*split);
    }
    throw MalformedTrailer("no structurally valid trailer at end of datagram");
}

}  // namespace udtarmor
