#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "udtarmor/engine.hpp"

// Real-network adapter: nonblocking UDP/IPv4 endpoints whose datagrams feed
// the same engine event interface as netsim.

namespace udtarmor {

inline constexpr std::size_t kMaxUdpDatagram = 65507;

PeerKey parse_peer_key(const std::string& host_port);  // "a.b.c.d:port"

class Endpoint {
public:
    // Throws BindError (address in use, permission, bad address).
    static Endpoint bind(const std::string& addr, uint16_t port);

    Endpoint(Endpoint&& other) noexcept;
    Endpoint& operator=(Endpoint&& other) noexcept;
    Endpoint(const Endpoint&) = delete;
    Endpoint& operator=(const Endpoint&) = delete;
    ~Endpoint();

    PeerKey local_address() const;

    // Throws OversizeDatagram (> 65507 bytes) or IoError.
    std::size_t send(const PeerKey& peer, std::span<const uint8_t> bytes);

    // Next datagram, or nullopt once timeout_ms elapses with nothing pending.
    std::optional<std::pair<PeerKey, std::vector<uint8_t>>> poll(int timeout_ms);

private:
    explicit Endpoint(int fd) : fd_(fd) {}
    int fd_ = -1;
};

}  // namespace udtarmor
