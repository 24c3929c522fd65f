#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "udtarmor/auth.hpp"
#include "udtarmor/wire.hpp"

// First-packet identity: a signed blob carried in the very first packet of an
// association, evaluated by an O(1) guard before any connection state exists.

namespace udtarmor {

inline constexpr uint8_t kIdentityVersion = 1;
inline constexpr std::size_t kNonceSize = 16;

struct IdentityRecord {
    uint8_t version = kIdentityVersion;
    std::string principal;                  // UTF-8, 1..=255 bytes
    uint64_t issued_at_ms = 0;
    std::array<uint8_t, kNonceSize> nonce{};
    HashAlg algorithm = HashAlg::Sha256;
    std::vector<uint8_t> signature;         // digest over fields ++ password

    bool operator==(const IdentityRecord&) const = default;
};

// Serialized fields without the signature; the signing input is this ++ password.
std::vector<uint8_t> identity_signing_bytes(const IdentityRecord& record);

std::vector<uint8_t> serialize_identity(const IdentityRecord& record);
IdentityRecord parse_identity(std::span<const uint8_t> blob);  // MalformedIdentity

// Fills in the signature and wraps the record in a UserDefined control packet.
ControlPacket build_identity_packet(IdentityRecord record, const std::string& password,
                                    uint32_t timestamp_us, uint32_t dest_socket_id);
IdentityRecord parse_identity_packet(const ControlPacket& pkt);

bool is_identity_packet(const ControlPacket& pkt);

// Bounded FIFO set of nonces for replay rejection.
class NonceCache {
public:
    explicit NonceCache(std::size_t capacity = 65536) : capacity_(capacity) {}

    // Returns true if the nonce was unseen (and records it).
    bool insert(const std::array<uint8_t, kNonceSize>& nonce);
    bool contains(const std::array<uint8_t, kNonceSize>& nonce) const;
    std::size_t size() const { return order_.size(); }
    std::size_t capacity() const { return capacity_; }

private:
    std::size_t capacity_;
    std::unordered_set<std::string> seen_;
    std::deque<std::string> order_;
};

enum class GuardMode : uint8_t { AllowAll, Allowlist };

struct GuardPolicy {
    GuardMode mode = GuardMode::AllowAll;
    std::set<std::string> allowlist;
    uint64_t max_clock_skew_ms = 30000;
    NonceCache seen_nonces{65536};
};

// One principal per line, UTF-8, '#' comments and blank lines skipped.
std::set<std::string> load_allowlist(const std::filesystem::path& path);

enum class GuardReason : uint8_t {
    Ok,
    BadSignature,
    UnknownPrincipal,
    StaleTimestamp,
    ReplayedNonce,
    Malformed,
};

struct GuardDecision {
    bool accept = false;
    GuardReason reason = GuardReason::Malformed;

    static GuardDecision ok() { return {true, GuardReason::Ok}; }
    static GuardDecision reject(GuardReason r) { return {false, r}; }
};

const char* guard_reason_name(GuardReason r);

// Checks in order: signature, timestamp skew, nonce replay (recording the
// nonce), principal policy. Signature-first so the allowlist cannot be probed
// without the key. Mutates policy.seen_nonces; callers serialize per listener.
GuardDecision guard_decide(const IdentityRecord& record, GuardPolicy& policy,
                           const std::string& password, uint64_t now_ms);

}  // namespace udtarmor
