#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "udtarmor/errors.hpp"

// Bit-exact serialization of UDT data/control packets and the AO trailer.
// All multi-byte fields are big-endian. Word 0's top bit discriminates the
// packet kind: 0 = data, 1 = control.

namespace udtarmor {

inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kMaxControlInfo = 1400;
inline constexpr uint32_t kSeqMask = 0x7FFFFFFFu;   // 31-bit sequence space
inline constexpr uint32_t kMsgMask = 0x1FFFFFFFu;   // 29-bit message space
inline constexpr uint16_t kCtypeMask = 0x7FFF;      // 15-bit control type

// Message boundary flags, word 1 bits 31..30 of a data packet.
enum class Boundary : uint8_t {
    Middle = 0b00,
    Last   = 0b01,
    First  = 0b10,
    Solo   = 0b11,
};

enum class ControlType : uint16_t {
    Handshake   = 0x0000,
    KeepAlive   = 0x0001,
    Ack         = 0x0002,
    Nak         = 0x0003,
    Shutdown    = 0x0005,
    Ack2        = 0x0006,
    UserDefined = 0x7FFF,
};

// extended_type value for the first-packet identity blob under UserDefined.
inline constexpr uint16_t kExtIdentity = 0x0001;

bool control_type_known(uint16_t ctype);

struct DataPacketHeader {
    uint32_t sequence = 0;        // 31-bit
    Boundary boundary = Boundary::Solo;
    bool in_order = false;
    uint32_t message_number = 0;  // 29-bit
    uint32_t timestamp_us = 0;
    uint32_t dest_socket_id = 0;

    bool operator==(const DataPacketHeader&) const = default;
};

struct DataPacket {
    DataPacketHeader header;
    std::vector<uint8_t> payload;

    bool operator==(const DataPacket&) const = default;
};

struct ControlPacket {
    uint16_t ctype = 0;           // 15-bit
    uint16_t extended_type = 0;   // nonzero only for UserDefined
    uint32_t additional_info = 0; // ACK sub-sequence for ACK/ACK2
    uint32_t timestamp_us = 0;
    uint32_t dest_socket_id = 0;
    std::vector<uint8_t> control_info;

    bool operator==(const ControlPacket&) const = default;
};

using Packet = std::variant<DataPacket, ControlPacket>;

std::vector<uint8_t> encode_packet(const DataPacket& pkt);
std::vector<uint8_t> encode_packet(const ControlPacket& pkt);
std::vector<uint8_t> encode_packet(const Packet& pkt);

// Throws TruncatedPacket (< 16 bytes) or UnknownControlType.
Packet decode_packet(std::span<const uint8_t> datagram);

// -------------------------------------------------------------------------
// AO trailer: [algorithm_id, digest_len] ++ digest appended after the packet.

enum class HashAlg : uint8_t {
    Md5    = 1,
    Sha1   = 2,
    Sha256 = 3,
};

std::size_t digest_length(HashAlg alg);
std::optional<HashAlg> hash_alg_from_id(uint8_t id);
std::optional<HashAlg> hash_alg_from_name(const std::string& name);
const char* hash_alg_name(HashAlg alg);

struct AoTrailer {
    HashAlg algorithm = HashAlg::Sha256;
    std::vector<uint8_t> digest;  // length must equal digest_length(algorithm)

    bool operator==(const AoTrailer&) const = default;
};

inline std::size_t trailer_size(HashAlg alg) { return 2 + digest_length(alg); }

std::vector<uint8_t> append_ao_trailer(std::span<const uint8_t> datagram,
                                       const AoTrailer& trailer);

// Splits the trailer back off; throws MalformedTrailer on bad algorithm id,
// digest length mismatch, or a datagram too short to hold the trailer.
std::pair<std::vector<uint8_t>, AoTrailer>
strip_ao_trailer(std::span<const uint8_t> datagram);

// Same, but checks the position implied by the site-configured algorithm
// first, which makes the split unambiguous on the normal path.
std::pair<std::vector<uint8_t>, AoTrailer>
strip_ao_trailer(std::span<const uint8_t> datagram, HashAlg expected);

// Big-endian field helpers shared by the codec, identity blob, and engine.
void put_u16(std::vector<uint8_t>& out, uint16_t v);
void put_u32(std::vector<uint8_t>& out, uint32_t v);
void put_u64(std::vector<uint8_t>& out, uint64_t v);
uint16_t get_u16(std::span<const uint8_t> in, std::size_t off);
uint32_t get_u32(std::span<const uint8_t> in, std::size_t off);
uint64_t get_u64(std::span<const uint8_t> in, std::size_t off);

}  // namespace udtarmor
