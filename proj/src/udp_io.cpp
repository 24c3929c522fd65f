#include "udtarmor/udp_io.hpp"

#include <cerrno>
#include <cstring>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

namespace udtarmor {

namespace {

sockaddr_in to_sockaddr(const PeerKey& peer) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(peer.port);
    std::memcpy(&sa.sin_addr, peer.addr.octets.data(), 4);
    return sa;
}

PeerKey from_sockaddr(const sockaddr_in& sa) {
    PeerKey peer;
    std::memcpy(peer.addr.octets.data(), &sa.sin_addr, 4);
    peer.port = ntohs(sa.sin_port);
    return peer;
}

}  // namespace

PeerKey parse_peer_key(const std::string& host_port) {
    auto colon = host_port.rfind(':');
    if (colon == std::string::npos)
        throw RangeError("expected address:port, got " + host_port);
    PeerKey peer;
    peer.addr = Ipv4::parse(host_port.substr(0, colon));
    unsigned long port = std::stoul(host_port.substr(colon + 1));
    if (port > 65535) throw RangeError("port out of range");
    peer.port = static_cast<uint16_t>(port);
    return peer;
}

Endpoint Endpoint::bind(const std::string& addr, uint16_t port) {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw BindError(std::string("socket: ") + std::strerror(errno));

    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (inet_pton(AF_INET, addr.c_str(), &sa.sin_addr) != 1) {
        ::close(fd);
        throw BindError("bad bind address: " + addr);
    }
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        int err = errno;
        ::close(fd);
        throw BindError("bind " + addr + ":" + std::to_string(port) + ": " +
                        std::strerror(err));
    }
    return Endpoint(fd);
}

Endpoint::Endpoint(Endpoint&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Endpoint& Endpoint::operator=(Endpoint&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

Endpoint::~Endpoint() {
    if (fd_ >= 0) ::close(fd_);
}

PeerKey Endpoint::local_address() const {
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    if (getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len) != 0)
        throw IoError(std::string("getsockname: ") + std::strerror(errno));
    return from_sockaddr(sa);
}

std::size_t Endpoint::send(const PeerKey& peer, std::span<const uint8_t> bytes) {
    if (bytes.size() > kMaxUdpDatagram)
        throw OversizeDatagram("datagram exceeds 65507 bytes");
    sockaddr_in sa = to_sockaddr(peer);
    ssize_t n = ::sendto(fd_, bytes.data(), bytes.size(), 0,
                         reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    if (n < 0) throw IoError(std::string("sendto: ") + std::strerror(errno));
    return static_cast<std::size_t>(n);
}

std::optional<std::pair<PeerKey, std::vector<uint8_t>>> Endpoint::poll(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc < 0) {
        if (errno == EINTR) return std::nullopt;
        throw IoError(std::string("poll: ") + std::strerror(errno));
    }
    if (rc == 0) return std::nullopt;

    std::vector<uint8_t> buf(kMaxUdpDatagram);
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), 0,
                           reinterpret_cast<sockaddr*>(&sa), &len);
    if (n < 0) throw IoError(std::string("recvfrom: ") + std::strerror(errno));
    buf.resize(static_cast<std::size_t>(n));
    return std::make_pair(from_sockaddr(sa), std::move(buf));
}

}  // namespace udtarmor
