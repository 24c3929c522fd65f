#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "udtarmor/checksum.hpp"
#include "udtarmor/wire.hpp"

// Authentication Option: a keyed digest over the pseudo-header, a UDP header
// image with zero checksum, the full UDT packet bytes, the shared password,
// and the per-connection cookie pair. A failed verification is a silent drop;
// the verify path never throws so the drop path cannot leak.

namespace udtarmor {

inline constexpr std::size_t kConnectionKeySize = 16;
inline constexpr std::size_t kCookieSize = 8;
inline constexpr std::size_t kMaxPasswordLen = 128;

// Printable ASCII (0x20..0x7E), 1..=128 bytes.
bool password_valid(std::string_view password);

struct KeyMaterial {
    std::string password;
    // initiator cookie first, responder cookie second
    std::array<uint8_t, kConnectionKeySize> connection_key{};
};

// Reads the first line of the key file, strips one trailing newline, and
// validates it. Throws KeyFileError.
std::string load_key(const std::filesystem::path& path);

enum class VerifyReason : uint8_t {
    Ok,
    DigestMismatch,
    MalformedTrailer,
    MissingTrailer,
};

struct VerifyOutcome {
    bool accept = false;
    VerifyReason reason = VerifyReason::DigestMismatch;

    static VerifyOutcome ok() { return {true, VerifyReason::Ok}; }
    static VerifyOutcome drop(VerifyReason r) { return {false, r}; }
};

// The five digest input items, concatenated in order: pseudo-header, UDP
// header image (checksum zero) ++ packet bytes, password, connection key.
// The pseudo-header's udp_length must already cover header + packet + trailer.
std::vector<uint8_t> digest_input_bytes(const PseudoHeader& pseudo,
                                        std::span<const uint8_t> udt_packet_bytes,
                                        const KeyMaterial& key);

std::vector<uint8_t> compute_ao_digest(HashAlg alg, std::span<const uint8_t> input);

AoTrailer sign_segment(HashAlg alg, const PseudoHeader& pseudo,
                       std::span<const uint8_t> udt_packet_bytes,
                       const KeyMaterial& key);

// Constant-time digest comparison; Accept iff recomputation matches.
VerifyOutcome verify_segment(HashAlg alg, const PseudoHeader& pseudo,
                             std::span<const uint8_t> udt_packet_bytes,
                             const AoTrailer& trailer, const KeyMaterial& key);

// Convenience for the engine: sign a packet and return packet ++ trailer.
// Builds the pseudo-header from the sender's view of the addresses.
std::vector<uint8_t> seal_datagram(HashAlg alg, Ipv4 src, Ipv4 dst,
                                   std::span<const uint8_t> udt_packet_bytes,
                                   const KeyMaterial& key);

// Inverse: strip the trailer from a received wire datagram and verify it.
// On Accept, *inner receives the bare packet bytes. src/dst are the sender's
// view, i.e. src = remote peer, dst = local address.
VerifyOutcome open_datagram(HashAlg alg, Ipv4 src, Ipv4 dst,
                            std::span<const uint8_t> wire_datagram,
                            const KeyMaterial& key,
                            std::vector<uint8_t>* inner);

}  // namespace udtarmor
