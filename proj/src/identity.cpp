#include "udtarmor/identity.hpp"

#include <fstream>

namespace udtarmor {

std::vector<uint8_t> identity_signing_bytes(const IdentityRecord& record) {
    std::vector<uint8_t> out;
    out.push_back(record.version);
    out.push_back(static_cast<uint8_t>(record.principal.size()));
    out.insert(out.end(), record.principal.begin(), record.principal.end());
    put_u64(out, record.issued_at_ms);
    out.insert(out.end(), record.nonce.begin(), record.nonce.end());
    out.push_back(static_cast<uint8_t>(record.algorithm));
    return out;
}

std::vector<uint8_t> serialize_identity(const IdentityRecord& record) {
    auto out = identity_signing_bytes(record);
    out.insert(out.end(), record.signature.begin(), record.signature.end());
    return out;
}

IdentityRecord parse_identity(std::span<const uint8_t> blob) {
    // version(1) plen(1) principal issued_at(8) nonce(16) alg(1) signature
    if (blob.size() < 2) throw MalformedIdentity("identity blob too short");
    IdentityRecord record;
    record.version = blob[0];
    if (record.version != kIdentityVersion)
        throw MalformedIdentity("unsupported identity version");
    std::size_t plen = blob[1];
    if (plen == 0) throw MalformedIdentity("empty principal");
    std::size_t fixed = 2 + plen + 8 + kNonceSize + 1;
    if (blob.size() < fixed) throw MalformedIdentity("truncated identity record");
    record.principal.assign(blob.begin() + 2, blob.begin() + 2 + plen);
    std::size_t off = 2 + plen;
    record.issued_at_ms = get_u64(blob, off);
    off += 8;
    std::copy(blob.begin() + off, blob.begin() + off + kNonceSize,
              record.nonce.begin());
    off += kNonceSize;
    auto alg = hash_alg_from_id(blob[off]);
    if (!alg) throw MalformedIdentity("unknown identity signature algorithm");
    record.algorithm = *alg;
    off += 1;
    if (blob.size() - off != digest_length(*alg))
        throw MalformedIdentity("signature length mismatch");
    record.signature.assign(blob.begin() + off, blob.end());
    return record;
}

ControlPacket build_identity_packet(IdentityRecord record, const std::string& password,
                                    uint32_t timestamp_us, uint32_t dest_socket_id) {
    if (record.principal.empty() || record.principal.size() > 255)
        throw RangeError("principal must be 1..=255 bytes");

    auto input = identity_signing_bytes(record);
    input.insert(input.end(), password.begin(), password.end());
    record.signature = compute_ao_digest(record.algorithm, input);

    ControlPacket pkt;
    pkt.ctype = static_cast<uint16_t>(ControlType::UserDefined);
    pkt.extended_type = kExtIdentity;
    pkt.timestamp_us = timestamp_us;
    pkt.dest_socket_id = dest_socket_id;
    pkt.control_info = serialize_identity(record);
    return pkt;
}

bool is_identity_packet(const ControlPacket& pkt) {
    return pkt.ctype == static_cast<uint16_t>(ControlType::UserDefined) &&
           pkt.extended_type == kExtIdentity;
}

IdentityRecord parse_identity_packet(const ControlPacket& pkt) {
    if (!is_identity_packet(pkt))
        throw MalformedIdentity("not an identity control packet");
    return parse_identity(pkt.control_info);
}

bool NonceCache::insert(const std::array<uint8_t, kNonceSize>& nonce) {
    std::string key(nonce.begin(), nonce.end());
    if (seen_.count(key)) return false;
    if (order_.size() >= capacity_) {
        seen_.erase(order_.front());
        order_.pop_front();
    }
    order_.push_back(key);
    seen_.insert(std::move(key));
    return true;
}

bool NonceCache::contains(const std::array<uint8_t, kNonceSize>& nonce) const {
    return seen_.count(std::string(nonce.begin(), nonce.end())) > 0;
}

std::set<std::string> load_allowlist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open allowlist: " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        std::size_t start = line.find_first_not_of(" \t");
        if (start == std::string::npos) continue;
        out.insert(line.substr(start));
    }
    return out;
}

const char* guard_reason_name(GuardReason r) {
    switch (r) {
        case GuardReason::Ok: return "ok";
        case GuardReason::BadSignature: return "bad-signature";
        case GuardReason::UnknownPrincipal: return "unknown-principal";
        case GuardReason::StaleTimestamp: return "stale-timestamp";
        case GuardReason::ReplayedNonce: return "replayed-nonce";
        case GuardReason::Malformed: return "malformed";
    }
    return "?";
}

GuardDecision guard_decide(const IdentityRecord& record, GuardPolicy& policy,
                           const std::string& password, uint64_t now_ms) {
    // Signature first: a bad signer learns nothing about the allowlist.
    auto input = identity_signing_bytes(record);
    input.insert(input.end(), password.begin(), password.end());
    auto expected = compute_ao_digest(record.algorithm, input);
    if (record.signature.size() != expected.size() ||
        !std::equal(expected.begin(), expected.end(), record.signature.begin()))
        return GuardDecision::reject(GuardReason::BadSignature);

    uint64_t skew = record.issued_at_ms > now_ms ? record.issued_at_ms - now_ms
                                                 : now_ms - record.issued_at_ms;
    if (skew > policy.max_clock_skew_ms)
        return GuardDecision::reject(GuardReason::StaleTimestamp);

    if (!policy.seen_nonces.insert(record.nonce))
        return GuardDecision::reject(GuardReason::ReplayedNonce);

    if (policy.mode == GuardMode::Allowlist && !policy.allowlist.count(record.principal))
        return GuardDecision::reject(GuardReason::UnknownPrincipal);

    return GuardDecision::ok();
}

}  // namespace udtarmor
