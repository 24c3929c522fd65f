#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "udtarmor/auth.hpp"
#include "udtarmor/identity.hpp"
#include "udtarmor/seqnum.hpp"
#include "udtarmor/wire.hpp"

// Per-connection UDT state machine: identity-first handshake, packet-based
// sequencing with wraparound, ACK/NAK/ACK2, loss lists, window flow control,
// paced sending, and AO signing/verification on every segment.
//
// Each connection is a single-threaded event machine: callers deliver one
// event at a time (datagram, tick, send, close) and collect the datagrams to
// transmit from the return value. The engine never blocks.

namespace udtarmor {

inline constexpr std::size_t kMaxChunkPayload = 1368;
inline constexpr uint64_t kRateEpochUs = 10000;       // rate-control epoch
inline constexpr uint64_t kAckIntervalUs = 10000;     // receiver ACK timer
inline constexpr uint64_t kKeepaliveIntervalUs = 1000000;
inline constexpr uint64_t kHandshakeRetryUs = 100000;
inline constexpr uint64_t kExpTimeoutUs = 200000;     // unacked-data rescue timer
inline constexpr uint64_t kMinSendPeriodUs = 100;
inline constexpr uint64_t kMaxSendPeriodUs = 100000;

struct AoConfig {
    bool enabled = true;
    HashAlg algorithm = HashAlg::Sha256;
    std::string password;
};

struct ConnectionConfig {
    AoConfig ao;
    uint32_t flow_window = 256;       // advertised to the peer
    std::size_t chunk_payload = kMaxChunkPayload;
    double initial_send_period_us = 1000.0;
    uint64_t rng_seed = 0;            // 0 = nondeterministic
    std::optional<uint32_t> initial_sequence;  // default: uniform random
    Ipv4 local_addr;                  // pseudo-header inputs
    Ipv4 peer_addr;
};

enum class Phase : uint8_t { Idle, IdentitySent, Established, Closed };

struct ConnStats {
    uint64_t accepted = 0;          // packets past the AO gate and dispatched
    uint64_t dropped_auth = 0;
    uint64_t dropped_malformed = 0;
    uint64_t retransmitted = 0;
    uint64_t duplicates = 0;
    uint64_t nak_ignored = 0;
    uint64_t sent_data = 0;
    uint64_t delivered_messages = 0;
    uint64_t delivered_bytes = 0;
};

struct Message {
    std::vector<uint8_t> bytes;
    uint32_t message_number = 0;
    bool in_order = false;
};

// Handshake control_info body (21 bytes on the wire).
struct HandshakeInfo {
    uint8_t hs_type = 0;  // 1 = request, 2 = response
    std::array<uint8_t, kCookieSize> cookie{};
    uint32_t socket_id = 0;
    uint32_t initial_sequence = 0;
    uint32_t flow_window = 0;
};
std::vector<uint8_t> encode_handshake_info(const HandshakeInfo& info);
std::optional<HandshakeInfo> decode_handshake_info(std::span<const uint8_t> body);

// NAK body: a bare 31-bit value is a single sequence; a value with its top
// bit set starts a (first, last) pair.
std::vector<uint8_t> encode_nak_ranges(const std::vector<std::pair<uint32_t, uint32_t>>& ranges);
std::optional<std::vector<std::pair<uint32_t, uint32_t>>>
decode_nak_ranges(std::span<const uint8_t> body);

class Connection {
public:
    // Initiator: emits the signed identity packet followed by the handshake
    // request as the opening burst. Throws ConfigError when AO is enabled
    // without a password.
    static std::unique_ptr<Connection> open(const ConnectionConfig& cfg,
                                            const std::string& principal,
                                            uint64_t now_us,
                                            std::vector<std::vector<uint8_t>>& out);

    // Responder side, created by the Listener once the guard admitted the
    // peer and a handshake request verified.
    static std::unique_ptr<Connection> accept(const ConnectionConfig& cfg,
                                              const HandshakeInfo& peer_hs,
                                              uint64_t now_us);

    Connection(const Connection&) = delete;
    Connection& operator=(const Connection&) = delete;

    // Event entry points; returned vectors are datagrams to transmit.
    std::vector<std::vector<uint8_t>> on_datagram(std::span<const uint8_t> dgram,
                                                  uint64_t now_us);
    std::vector<std::vector<uint8_t>> tick(uint64_t now_us);

    void send_message(std::vector<uint8_t> payload, bool in_order);  // ConnectionClosed
    std::vector<std::vector<uint8_t>> close(uint64_t now_us);

    std::vector<Message> take_delivered();

    Phase phase() const { return phase_; }
    const ConnStats& stats() const { return stats_; }
    uint32_t local_socket_id() const { return local_socket_id_; }
    uint32_t peer_socket_id() const { return peer_socket_id_; }
    uint32_t flow_window() const { return flow_window_; }
    uint64_t inflight() const { return snd_next_unwrapped_ - snd_una_unwrapped_; }
    double send_period_us() const { return send_period_us_; }
    bool all_sent_and_acked() const;
    bool shutdown_received() const { return shutdown_received_; }
    uint32_t rcv_expected() const;  // 31-bit next expected sequence
    const std::array<uint8_t, kCookieSize>& local_cookie() const { return local_cookie_; }
    uint32_t initial_sequence() const { return snd_isn_; }
    const LossList& sender_loss_list() const { return sender_loss_; }
    const LossList& receiver_loss_list() const { return receiver_loss_; }

    // Handshake response the responder re-emits on duplicate requests.
    std::vector<uint8_t> handshake_response_datagram(uint64_t now_us);

private:
    Connection(const ConnectionConfig& cfg, uint64_t now_us);

    struct StoredPacket {
        Boundary boundary;
        bool in_order;
        uint32_t message_number;
        std::vector<uint8_t> payload;
    };

    KeyMaterial current_key() const;
    std::vector<uint8_t> seal(std::span<const uint8_t> packet_bytes) const;
    std::vector<uint8_t> make_control(ControlType type, uint16_t ext, uint32_t add_info,
                                      std::vector<uint8_t> body, uint64_t now_us) const;
    uint32_t wire_timestamp(uint64_t now_us) const;

    std::vector<uint8_t> identity_datagram(uint64_t now_us);
    std::vector<uint8_t> handshake_request_datagram(uint64_t now_us);
    std::vector<uint8_t> emit_data(uint64_t unwrapped, const StoredPacket& sp,
                                   uint64_t now_us);

    void handle_data(const DataPacket& pkt, uint64_t now_us,
                     std::vector<std::vector<uint8_t>>& out);
    void handle_control(const ControlPacket& pkt, uint64_t now_us,
                        std::vector<std::vector<uint8_t>>& out);
    void handle_ack(const ControlPacket& pkt, uint64_t now_us,
                    std::vector<std::vector<uint8_t>>& out);
    void handle_nak(const ControlPacket& pkt);
    void deliver_ready();
    std::optional<std::vector<uint8_t>> next_due_send(uint64_t now_us);

    ConnectionConfig cfg_;
    std::mt19937_64 rng_;
    Phase phase_ = Phase::Idle;
    ConnStats stats_;
    uint64_t start_us_ = 0;

    uint32_t local_socket_id_ = 0;
    uint32_t peer_socket_id_ = 0;
    std::array<uint8_t, kCookieSize> local_cookie_{};
    std::array<uint8_t, kCookieSize> peer_cookie_{};
    bool initiator_ = false;
    std::string principal_;

    // sender state
    uint32_t snd_isn_ = 0;
    uint64_t snd_next_unwrapped_ = 0;  // count of data packets ever assigned
    uint64_t snd_una_unwrapped_ = 0;   // lowest unacknowledged
    std::deque<StoredPacket> snd_pending_;           // chunked, not yet sent
    std::map<uint64_t, StoredPacket> snd_buffer_;    // sent, unacked
    LossList sender_loss_;
    uint32_t next_message_number_ = 1;
    uint32_t flow_window_ = 16;        // peer-advertised; updated on ACK
    double send_period_us_ = 1000.0;
    double next_send_us_ = 0.0;
    uint64_t epoch_start_us_ = 0;
    bool loss_in_epoch_ = false;
    uint32_t last_ack_subseq_seen_ = 0;
    uint64_t last_progress_us_ = 0;    // last forward movement of snd_una
    uint64_t last_hs_send_us_ = 0;
    uint64_t last_send_us_ = 0;

    // receiver state
    uint32_t rcv_isn_ = 0;
    uint64_t rcv_deliver_unwrapped_ = 0;   // next contiguous index to deliver
    uint64_t rcv_highest_unwrapped_ = 0;   // one past highest received
    std::map<uint64_t, DataPacket> rcv_buffer_;
    LossList receiver_loss_;
    std::vector<Message> delivered_;
    uint32_t ack_subseq_next_ = 1;
    uint32_t ack2_last_echoed_ = 0;
    uint64_t last_ack_emit_us_ = 0;
    uint64_t last_nak_us_ = 0;
    bool shutdown_received_ = false;
    bool shutdown_sent_ = false;

    uint32_t seq31_of(uint64_t unwrapped) const { return seq_add(snd_isn_, unwrapped); }
};

// -------------------------------------------------------------------------
// Listener: demultiplexes datagrams by dest_socket_id, runs the identity
// guard on the pre-state path, and owns responder-side connections.

struct PeerKey {
    Ipv4 addr;
    uint16_t port = 0;

    auto operator<=>(const PeerKey&) const = default;
    std::string to_string() const;
};

struct ListenerStats {
    uint64_t guard_rejected = 0;
    uint64_t guard_accepted = 0;
    uint64_t unknown_socket_drops = 0;
    uint64_t malformed_drops = 0;
    uint64_t auth_drops = 0;        // pre-state AO failures
    uint64_t connections_created = 0;
};

class Listener {
public:
    Listener(ConnectionConfig base, GuardPolicy policy, bool require_identity);

    // One datagram in, zero or more response datagrams (to the same peer) out.
    std::vector<std::vector<uint8_t>> on_datagram(const PeerKey& peer,
                                                  std::span<const uint8_t> dgram,
                                                  uint64_t now_us);
    std::vector<std::pair<PeerKey, std::vector<uint8_t>>> tick(uint64_t now_us);

    const ListenerStats& stats() const { return stats_; }
    std::size_t connection_count() const { return connections_.size(); }
    Connection* connection(uint32_t local_socket_id);
    Connection* sole_connection();  // convenience for single-transfer tools
    GuardPolicy& guard_policy() { return policy_; }

private:
    struct Pending {
        std::string principal;
        uint64_t accepted_at_us;
    };

    ConnectionConfig base_;
    GuardPolicy policy_;
    bool require_identity_;
    ListenerStats stats_;
    std::map<uint32_t, std::unique_ptr<Connection>> connections_;
    std::map<PeerKey, uint32_t> peer_to_socket_;
    std::map<PeerKey, Pending> pending_identity_;  // bounded
    static constexpr std::size_t kMaxPending = 1024;
};

}  // namespace udtarmor
