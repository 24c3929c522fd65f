#include "udtarmor/auth.hpp"

#include <fstream>

#include <openssl/crypto.h>
#include <openssl/evp.h>

namespace udtarmor {

bool password_valid(std::string_view password) {
    if (password.empty() || password.size() > kMaxPasswordLen) return false;
    for (unsigned char c : password)
        if (c < 0x20 || c > 0x7E) return false;
    return true;
}

std::string load_key(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw KeyFileError("cannot open key file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw KeyFileError("key file is empty: " + path.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw KeyFileError("key file holds an empty key");
    if (line.size() > kMaxPasswordLen)
        throw KeyFileError("key exceeds 128 bytes");
    if (!password_valid(line))
        throw KeyFileError("key contains non-printable bytes");
    return line;
}

std::vector<uint8_t> digest_input_bytes(const PseudoHeader& pseudo,
                                        std::span<const uint8_t> udt_packet_bytes,
                                        const KeyMaterial& key) {
    std::vector<uint8_t> out;
    out.reserve(kPseudoHeaderSize + kUdpHeaderSize + udt_packet_bytes.size() +
                key.password.size() + key.connection_key.size());

    auto ph = pseudo.serialize();
    out.insert(out.end(), ph.begin(), ph.end());

    // UDP header image: zero ports, the pseudo-header's length, zero checksum.
    out.insert(out.end(), 4, 0);
    out.push_back(static_cast<uint8_t>(pseudo.udp_length >> 8));
    out.push_back(static_cast<uint8_t>(pseudo.udp_length & 0xFF));
    out.insert(out.end(), 2, 0);

    out.insert(out.end(), udt_packet_bytes.begin(), udt_packet_bytes.end());
    out.insert(out.end(), key.password.begin(), key.password.end());
    out.insert(out.end(), key.connection_key.begin(), key.connection_key.end());
    return out;
}

std::vector<uint8_t> compute_ao_digest(HashAlg alg, std::span<const uint8_t> input) {
    const EVP_MD* md = nullptr;
    switch (alg) {
        case HashAlg::Md5: md = EVP_md5(); break;
        case HashAlg::Sha1: md = EVP_sha1(); break;
        case HashAlg::Sha256: md = EVP_sha256(); break;
    }

    std::vector<uint8_t> digest(EVP_MAX_MD_SIZE);
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, md, nullptr);
    EVP_DigestUpdate(ctx, input.data(), input.size());
    EVP_DigestFinal_ex(ctx, digest.data(), &len);
    EVP_MD_CTX_free(ctx);
    digest.resize(len);
    return digest;
}

AoTrailer sign_segment(HashAlg alg, const PseudoHeader& pseudo,
                       std::span<const uint8_t> udt_packet_bytes,
                       const KeyMaterial& key) {
    AoTrailer trailer;
    trailer.algorithm = alg;
    trailer.digest = compute_ao_digest(alg, digest_input_bytes(pseudo, udt_packet_bytes, key));
    return trailer;
}

VerifyOutcome verify_segment(HashAlg alg, const PseudoHeader& pseudo,
                             std::span<const uint8_t> udt_packet_bytes,
                             const AoTrailer& trailer, const KeyMaterial& key) {
    auto expected =
        compute_ao_digest(alg, digest_input_bytes(pseudo, udt_packet_bytes, key));
    if (trailer.digest.size() != expected.size())
        return VerifyOutcome::drop(VerifyReason::DigestMismatch);
    if (CRYPTO_memcmp(trailer.digest.data(), expected.data(), expected.size()) != 0)
        return VerifyOutcome::drop(VerifyReason::DigestMismatch);
    return VerifyOutcome::ok();
}

std::vector<uint8_t> seal_datagram(HashAlg alg, Ipv4 src, Ipv4 dst,
                                   std::span<const uint8_t> udt_packet_bytes,
                                   const KeyMaterial& key) {
    // udp_length covers UDP header + packet + trailer
    std::size_t udp_length =
        kUdpHeaderSize + udt_packet_bytes.size() + trailer_size(alg);
    auto pseudo = build_pseudo_header(src, dst, udp_length);
    auto trailer = sign_segment(alg, pseudo, udt_packet_bytes, key);
    return append_ao_trailer(udt_packet_bytes, trailer);
}

VerifyOutcome open_datagram(HashAlg alg, Ipv4 src, Ipv4 dst,
                            std::span<const uint8_t> wire_datagram,
                            const KeyMaterial& key,
                            std::vector<uint8_t>* inner) {
    std::vector<uint8_t> packet;
    AoTrailer trailer;
    try {
        auto split = strip_ao_trailer(wire_datagram, alg);
        packet = std::move(split.first);
        trailer = std::move(split.second);
    } catch (const MalformedTrailer&) {
        return VerifyOutcome::drop(VerifyReason::MalformedTrailer);
    }

    auto pseudo = build_pseudo_header(src, dst, kUdpHeaderSize + wire_datagram.size());
    auto outcome = verify_segment(alg, pseudo, packet, trailer, key);
    if (outcome.accept && inner) *inner = std::move(packet);
    return outcome;
}

}  // namespace udtarmor
