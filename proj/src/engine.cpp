#include "udtarmor/engine.hpp"

#include <algorithm>
#include <cmath>

namespace udtarmor {

namespace {

constexpr uint64_t kNakIntervalUs = 20000;

// NAK control_info holds at most this many encoded words.
constexpr std::size_t kMaxNakWords = kMaxControlInfo / 4;

uint64_t mix_seed(uint64_t base, uint64_t salt) {
    uint64_t x = base ^ (salt + 0x9E3779B97F4A7C15ull);
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    return x;
}

}  // namespace

std::vector<uint8_t> encode_handshake_info(const HandshakeInfo& info) {
    std::vector<uint8_t> out;
    out.reserve(21);
    out.push_back(info.hs_type);
    out.insert(out.end(), info.cookie.begin(), info.cookie.end());
    put_u32(out, info.socket_id);
    put_u32(out, info.initial_sequence);
    put_u32(out, info.flow_window);
    return out;
}

std::optional<HandshakeInfo> decode_handshake_info(std::span<const uint8_t> body) {
    if (body.size() != 21) return std::nullopt;
    HandshakeInfo info;
    info.hs_type = body[0];
    if (info.hs_type != 1 && info.hs_type != 2) return std::nullopt;
    std::copy(body.begin() + 1, body.begin() + 1 + kCookieSize, info.cookie.begin());
    info.socket_id = get_u32(body, 9);
    info.initial_sequence = get_u32(body, 13) & kSeqMask;
    info.flow_window = get_u32(body, 17);
    return info;
}

std::vector<uint8_t> encode_nak_ranges(
    const std::vector<std::pair<uint32_t, uint32_t>>& ranges) {
    std::vector<uint8_t> out;
    for (const auto& [first, last] : ranges) {
        if (first == last) {
            put_u32(out, first & kSeqMask);
        } else {
            put_u32(out, (first & kSeqMask) | 0x80000000u);
            put_u32(out, last & kSeqMask);
        }
    }
    return out;
}

std::optional<std::vector<std::pair<uint32_t, uint32_t>>>
decode_nak_ranges(std::span<const uint8_t> body) {
    if (body.size() % 4 != 0) return std::nullopt;
    std::vector<std::pair<uint32_t, uint32_t>> out;
    for (std::size_t i = 0; i < body.size(); i += 4) {
        uint32_t word = get_u32(body, i);
        if (word & 0x80000000u) {
            if (i + 4 >= body.size()) return std::nullopt;
            i += 4;
            uint32_t last = get_u32(body, i);
            if (last & 0x80000000u) return std::nullopt;
            out.emplace_back(word & kSeqMask, last);
        } else {
            out.emplace_back(word, word);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

Connection::Connection(const ConnectionConfig& cfg, uint64_t now_us)
    : cfg_(cfg),
      rng_(cfg.rng_seed ? cfg.rng_seed : std::random_device{}()),
      start_us_(now_us) {
    if (cfg_.ao.enabled && cfg_.ao.password.empty())
        throw ConfigError("AO enabled but no key configured");
    if (cfg_.ao.enabled && !password_valid(cfg_.ao.password))
        throw ConfigError("AO password must be printable ASCII, 1..=128 bytes");
    if (cfg_.chunk_payload == 0 || cfg_.chunk_payload > kMaxChunkPayload)
        cfg_.chunk_payload = kMaxChunkPayload;

    while (local_socket_id_ == 0)
        local_socket_id_ = static_cast<uint32_t>(rng_());
    for (auto& b : local_cookie_) b = static_cast<uint8_t>(rng_());
    snd_isn_ = cfg_.initial_sequence
                   ? (*cfg_.initial_sequence & kSeqMask)
                   : static_cast<uint32_t>(rng_() & kSeqMask);

    send_period_us_ = cfg_.initial_send_period_us;
    next_send_us_ = static_cast<double>(now_us);
    epoch_start_us_ = now_us;
    last_progress_us_ = now_us;
    last_ack_emit_us_ = now_us;
    last_nak_us_ = now_us;
    last_send_us_ = now_us;
}

std::unique_ptr<Connection> Connection::open(const ConnectionConfig& cfg,
                                             const std::string& principal,
                                             uint64_t now_us,
                                             std::vector<std::vector<uint8_t>>& out) {
    std::unique_ptr<Connection> conn(new Connection(cfg, now_us));
    conn->initiator_ = true;
    conn->principal_ = principal;
    conn->phase_ = Phase::IdentitySent;
    out.push_back(conn->identity_datagram(now_us));
    out.push_back(conn->handshake_request_datagram(now_us));
    conn->last_hs_send_us_ = now_us;
    return conn;
}

std::unique_ptr<Connection> Connection::accept(const ConnectionConfig& cfg,
                                               const HandshakeInfo& peer_hs,
                                               uint64_t now_us) {
    std::unique_ptr<Connection> conn(new Connection(cfg, now_us));
    conn->initiator_ = false;
    conn->peer_cookie_ = peer_hs.cookie;
    conn->peer_socket_id_ = peer_hs.socket_id;
    conn->rcv_isn_ = peer_hs.initial_sequence;
    conn->flow_window_ = peer_hs.flow_window;
    conn->phase_ = Phase::Established;
    return conn;
}

KeyMaterial Connection::current_key() const {
    KeyMaterial key;
    key.password = cfg_.ao.password;
    if (phase_ == Phase::Established || !initiator_) {
        // full cookie pair, initiator cookie first
        const auto& init = initiator_ ? local_cookie_ : peer_cookie_;
        const auto& resp = initiator_ ? peer_cookie_ : local_cookie_;
        std::copy(init.begin(), init.end(), key.connection_key.begin());
        std::copy(resp.begin(), resp.end(), key.connection_key.begin() + kCookieSize);
    } else {
        // peer cookie unknown before the handshake response
        std::copy(local_cookie_.begin(), local_cookie_.end(),
                  key.connection_key.begin());
    }
    return key;
}

std::vector<uint8_t> Connection::seal(std::span<const uint8_t> packet_bytes) const {
    if (!cfg_.ao.enabled)
        return std::vector<uint8_t>(packet_bytes.begin(), packet_bytes.end());
    return seal_datagram(cfg_.ao.algorithm, cfg_.local_addr, cfg_.peer_addr,
                         packet_bytes, current_key());
}

uint32_t Connection::wire_timestamp(uint64_t now_us) const {
    return static_cast<uint32_t>(now_us - start_us_);
}

std::vector<uint8_t> Connection::make_control(ControlType type, uint16_t ext,
                                              uint32_t add_info,
                                              std::vector<uint8_t> body,
                                              uint64_t now_us) const {
    ControlPacket pkt;
    pkt.ctype = static_cast<uint16_t>(type);
    pkt.extended_type = ext;
    pkt.additional_info = add_info;
    pkt.timestamp_us = wire_timestamp(now_us);
    pkt.dest_socket_id = peer_socket_id_;
    pkt.control_info = std::move(body);
    return seal(encode_packet(pkt));
}

std::vector<uint8_t> Connection::identity_datagram(uint64_t now_us) {
    IdentityRecord record;
    record.principal = principal_;
    record.issued_at_ms = now_us / 1000;
    for (auto& b : record.nonce) b = static_cast<uint8_t>(rng_());
    record.algorithm = cfg_.ao.algorithm;
    auto pkt = build_identity_packet(std::move(record), cfg_.ao.password,
                                     wire_timestamp(now_us), 0);
    return seal(encode_packet(pkt));
}

std::vector<uint8_t> Connection::handshake_request_datagram(uint64_t now_us) {
    HandshakeInfo info{1, local_cookie_, local_socket_id_, snd_isn_, cfg_.flow_window};
    ControlPacket pkt;
    pkt.ctype = static_cast<uint16_t>(ControlType::Handshake);
    pkt.timestamp_us = wire_timestamp(now_us);
    pkt.dest_socket_id = 0;
    pkt.control_info = encode_handshake_info(info);
    return seal(encode_packet(pkt));
}

std::vector<uint8_t> Connection::handshake_response_datagram(uint64_t now_us) {
    HandshakeInfo info{2, local_cookie_, local_socket_id_, snd_isn_, cfg_.flow_window};
    return make_control(ControlType::Handshake, 0, 0, encode_handshake_info(info),
                        now_us);
}

uint32_t Connection::rcv_expected() const {
    uint64_t cum = receiver_loss_.empty()
                       ? rcv_highest_unwrapped_
                       : std::min(receiver_loss_.ranges().front().first,
                                  rcv_highest_unwrapped_);
    return seq_add(rcv_isn_, cum);
}

bool Connection::all_sent_and_acked() const {
    return snd_pending_.empty() && snd_buffer_.empty() &&
           snd_next_unwrapped_ == snd_una_unwrapped_;
}

void Connection::send_message(std::vector<uint8_t> payload, bool in_order) {
    if (phase_ == Phase::Closed) throw ConnectionClosed("send on closed connection");

    uint32_t msg = next_message_number_;
    next_message_number_ = (next_message_number_ + 1) & kMsgMask;

    std::size_t chunk = cfg_.chunk_payload;
    std::size_t n = payload.size() <= chunk ? 1 : (payload.size() + chunk - 1) / chunk;
    for (std::size_t i = 0; i < n; ++i) {
        StoredPacket sp;
        sp.in_order = in_order;
        sp.message_number = msg;
        if (n == 1)
            sp.boundary = Boundary::Solo;
        else if (i == 0)
            sp.boundary = Boundary::First;
        else if (i == n - 1)
            sp.boundary = Boundary::Last;
        else
            sp.boundary = Boundary::Middle;
        std::size_t off = i * chunk;
        std::size_t len = std::min(chunk, payload.size() - off);
        sp.payload.assign(payload.begin() + off, payload.begin() + off + len);
        snd_pending_.push_back(std::move(sp));
    }
}

std::vector<uint8_t> Connection::emit_data(uint64_t unwrapped, const StoredPacket& sp,
                                           uint64_t now_us) {
    DataPacket pkt;
    pkt.header.sequence = seq31_of(unwrapped);
    pkt.header.boundary = sp.boundary;
    pkt.header.in_order = sp.in_order;
    pkt.header.message_number = sp.message_number;
    pkt.header.timestamp_us = wire_timestamp(now_us);
    pkt.header.dest_socket_id = peer_socket_id_;
    pkt.payload = sp.payload;
    last_send_us_ = now_us;
    return seal(encode_packet(pkt));
}

std::optional<std::vector<uint8_t>> Connection::next_due_send(uint64_t now_us) {
    // loss-list retransmissions take priority over new data
    while (auto u = sender_loss_.pop_front()) {
        auto it = snd_buffer_.find(*u);
        if (it == snd_buffer_.end()) continue;  // acked meanwhile
        stats_.retransmitted++;
        return emit_data(*u, it->second, now_us);
    }
    if (!snd_pending_.empty() && flow_window_ > 0 && inflight() < flow_window_) {
        if (inflight() == 0) last_progress_us_ = now_us;
        uint64_t u = snd_next_unwrapped_++;
        auto [it, ok] = snd_buffer_.emplace(u, std::move(snd_pending_.front()));
        snd_pending_.pop_front();
        stats_.sent_data++;
        return emit_data(u, it->second, now_us);
    }
    return std::nullopt;
}

std::vector<std::vector<uint8_t>> Connection::on_datagram(
    std::span<const uint8_t> dgram, uint64_t now_us) {
    std::vector<std::vector<uint8_t>> out;
    if (phase_ == Phase::Closed || phase_ == Phase::Idle) return out;

    std::vector<uint8_t> inner;
    if (cfg_.ao.enabled) {
        if (initiator_ && phase_ == Phase::IdentitySent) {
            // Pre-established: the only packet we can verify is the handshake
            // response; its claimed cookie is covered by the digest, so a
            // forged cookie cannot pass.
            std::vector<uint8_t> packet;
            AoTrailer trailer;
            try {
                auto split = strip_ao_trailer(dgram, cfg_.ao.algorithm);
                packet = std::move(split.first);
                trailer = std::move(split.second);
                auto decoded = decode_packet(packet);
                auto* ctrl = std::get_if<ControlPacket>(&decoded);
                if (!ctrl) { stats_.dropped_auth++; return out; }
                auto hs = decode_handshake_info(ctrl->control_info);
                if (!hs || hs->hs_type != 2) { stats_.dropped_auth++; return out; }
                KeyMaterial key;
                key.password = cfg_.ao.password;
                std::copy(local_cookie_.begin(), local_cookie_.end(),
                          key.connection_key.begin());
                std::copy(hs->cookie.begin(), hs->cookie.end(),
                          key.connection_key.begin() + kCookieSize);
                auto pseudo = build_pseudo_header(cfg_.peer_addr, cfg_.local_addr,
                                                  kUdpHeaderSize + dgram.size());
                auto outcome = verify_segment(cfg_.ao.algorithm, pseudo, packet,
                                              trailer, key);
                if (!outcome.accept) { stats_.dropped_auth++; return out; }
                inner = std::move(packet);
            } catch (const std::runtime_error&) {
                stats_.dropped_auth++;
                return out;
            }
        } else {
            auto outcome = open_datagram(cfg_.ao.algorithm, cfg_.peer_addr,
                                         cfg_.local_addr, dgram, current_key(), &inner);
            if (!outcome.accept) {
                stats_.dropped_auth++;
                return out;  // silent drop: no response of any kind
            }
        }
    } else {
        inner.assign(dgram.begin(), dgram.end());
    }

    Packet decoded;
    try {
        decoded = decode_packet(inner);
    } catch (const std::runtime_error&) {
        stats_.dropped_malformed++;
        return out;
    }
    stats_.accepted++;

    if (auto* data = std::get_if<DataPacket>(&decoded))
        handle_data(*data, now_us, out);
    else
        handle_control(std::get<ControlPacket>(decoded), now_us, out);
    return out;
}

void Connection::handle_data(const DataPacket& pkt, uint64_t now_us,
                             std::vector<std::vector<uint8_t>>& out) {
    if (phase_ != Phase::Established) return;

    uint32_t ref31 = seq_add(rcv_isn_, rcv_highest_unwrapped_);
    int64_t rel = seq_offset(ref31, pkt.header.sequence);
    int64_t u_signed = static_cast<int64_t>(rcv_highest_unwrapped_) + rel;
    if (u_signed < 0) {
        stats_.duplicates++;
        return;
    }
    uint64_t u = static_cast<uint64_t>(u_signed);

    if (u < rcv_highest_unwrapped_) {
        // retransmission fill or duplicate
        bool missing = u >= rcv_deliver_unwrapped_ && !rcv_buffer_.count(u);
        if (!missing) {
            stats_.duplicates++;
            return;
        }
        receiver_loss_.remove(u);
        rcv_buffer_.emplace(u, pkt);
    } else {
        if (u > rcv_highest_unwrapped_) {
            receiver_loss_.insert(rcv_highest_unwrapped_, u - 1);
            std::vector<std::pair<uint32_t, uint32_t>> ranges{
                {seq_add(rcv_isn_, rcv_highest_unwrapped_), seq_add(rcv_isn_, u - 1)}};
            out.push_back(make_control(ControlType::Nak, 0, 0,
                                       encode_nak_ranges(ranges), now_us));
            last_nak_us_ = now_us;
        }
        rcv_buffer_.emplace(u, pkt);
        rcv_highest_unwrapped_ = u + 1;
    }
    deliver_ready();
}

void Connection::deliver_ready() {
    for (;;) {
        auto it = rcv_buffer_.find(rcv_deliver_unwrapped_);
        if (it == rcv_buffer_.end()) return;

        const DataPacket& head = it->second;
        if (head.header.boundary == Boundary::Solo) {
            delivered_.push_back(Message{head.payload, head.header.message_number,
                                         head.header.in_order});
            stats_.delivered_messages++;
            stats_.delivered_bytes += head.payload.size();
            rcv_buffer_.erase(it);
            rcv_deliver_unwrapped_++;
            continue;
        }
        if (head.header.boundary != Boundary::First) {
            // fragment with no start; surface it rather than wedging the stream
            delivered_.push_back(Message{head.payload, head.header.message_number,
                                         head.header.in_order});
            stats_.delivered_messages++;
            stats_.delivered_bytes += head.payload.size();
            rcv_buffer_.erase(it);
            rcv_deliver_unwrapped_++;
            continue;
        }

        // assemble First..Middle..Last
        uint64_t end = rcv_deliver_unwrapped_;
        bool complete = false;
        for (;;) {
            auto jt = rcv_buffer_.find(end);
            if (jt == rcv_buffer_.end()) break;
            if (jt->second.header.message_number != head.header.message_number) break;
            if (jt->second.header.boundary == Boundary::Last) {
                complete = true;
                break;
            }
            ++end;
        }
        if (!complete) return;

        Message msg;
        msg.message_number = head.header.message_number;
        msg.in_order = head.header.in_order;
        for (uint64_t u = rcv_deliver_unwrapped_; u <= end; ++u) {
            auto jt = rcv_buffer_.find(u);
            msg.bytes.insert(msg.bytes.end(), jt->second.payload.begin(),
                             jt->second.payload.end());
            rcv_buffer_.erase(jt);
        }
        stats_.delivered_messages++;
        stats_.delivered_bytes += msg.bytes.size();
        delivered_.push_back(std::move(msg));
        rcv_deliver_unwrapped_ = end + 1;
    }
}

void Connection::handle_control(const ControlPacket& pkt, uint64_t now_us,
                                std::vector<std::vector<uint8_t>>& out) {
    switch (static_cast<ControlType>(pkt.ctype)) {
        case ControlType::Handshake: {
            auto hs = decode_handshake_info(pkt.control_info);
            if (!hs) {
                stats_.dropped_malformed++;
                return;
            }
            if (initiator_ && phase_ == Phase::IdentitySent && hs->hs_type == 2) {
                peer_cookie_ = hs->cookie;
                peer_socket_id_ = hs->socket_id;
                rcv_isn_ = hs->initial_sequence;
                flow_window_ = hs->flow_window;
                phase_ = Phase::Established;
            } else if (!initiator_ && hs->hs_type == 1 && hs->cookie == peer_cookie_) {
                // retransmitted request: response was lost, resend it
                out.push_back(handshake_response_datagram(now_us));
            }
            return;
        }
        case ControlType::Ack:
            handle_ack(pkt, now_us, out);
            return;
        case ControlType::Ack2:
            ack2_last_echoed_ = pkt.additional_info;
            return;
        case ControlType::Nak:
            handle_nak(pkt);
            return;
        case ControlType::Shutdown:
            shutdown_received_ = true;
            phase_ = Phase::Closed;
            return;
        case ControlType::KeepAlive:
        case ControlType::UserDefined:
            return;
    }
}

void Connection::handle_ack(const ControlPacket& pkt, uint64_t now_us,
                            std::vector<std::vector<uint8_t>>& out) {
    if (phase_ != Phase::Established) return;
    if (pkt.control_info.size() != 8) {
        stats_.dropped_malformed++;
        return;
    }
    uint32_t subseq = pkt.additional_info;
    if (subseq <= last_ack_subseq_seen_) return;  // stale or replayed
    last_ack_subseq_seen_ = subseq;

    uint32_t next31 = get_u32(pkt.control_info, 0) & kSeqMask;
    uint32_t window = get_u32(pkt.control_info, 4);

    int64_t rel = seq_offset(seq31_of(snd_una_unwrapped_), next31);
    int64_t new_una = static_cast<int64_t>(snd_una_unwrapped_) + rel;
    if (rel >= 0 && new_una <= static_cast<int64_t>(snd_next_unwrapped_)) {
        if (new_una > static_cast<int64_t>(snd_una_unwrapped_)) {
            snd_buffer_.erase(snd_buffer_.begin(),
                              snd_buffer_.lower_bound(static_cast<uint64_t>(new_una)));
            sender_loss_.remove_below(static_cast<uint64_t>(new_una));
            snd_una_unwrapped_ = static_cast<uint64_t>(new_una);
            last_progress_us_ = now_us;
        }
    }
    flow_window_ = window;
    out.push_back(make_control(ControlType::Ack2, 0, subseq, {}, now_us));
}

void Connection::handle_nak(const ControlPacket& pkt) {
    auto ranges = decode_nak_ranges(pkt.control_info);
    if (!ranges) {
        stats_.dropped_malformed++;
        return;
    }
    for (const auto& [f31, l31] : *ranges) {
        uint32_t base31 = seq31_of(snd_una_unwrapped_);
        int64_t f = static_cast<int64_t>(snd_una_unwrapped_) + seq_offset(base31, f31);
        int64_t l = static_cast<int64_t>(snd_una_unwrapped_) + seq_offset(base31, l31);
        // clip to the sent-and-unacked window; anything else was never sent
        int64_t lo = std::max<int64_t>(f, static_cast<int64_t>(snd_una_unwrapped_));
        int64_t hi = std::min<int64_t>(l, static_cast<int64_t>(snd_next_unwrapped_) - 1);
        if (lo > hi) {
            stats_.nak_ignored++;
            continue;
        }
        sender_loss_.insert(static_cast<uint64_t>(lo), static_cast<uint64_t>(hi));
        loss_in_epoch_ = true;
    }
}

std::vector<std::vector<uint8_t>> Connection::tick(uint64_t now_us) {
    std::vector<std::vector<uint8_t>> out;
    if (phase_ == Phase::Closed || phase_ == Phase::Idle) return out;

    if (initiator_ && phase_ == Phase::IdentitySent &&
        now_us - last_hs_send_us_ >= kHandshakeRetryUs) {
        out.push_back(identity_datagram(now_us));
        out.push_back(handshake_request_datagram(now_us));
        last_hs_send_us_ = now_us;
    }

    if (phase_ != Phase::Established) return out;

    // rate-control epochs: multiplicative decrease of the period when an
    // epoch was loss-free, increase by a quarter otherwise
    while (now_us - epoch_start_us_ >= kRateEpochUs) {
        epoch_start_us_ += kRateEpochUs;
        if (loss_in_epoch_)
            send_period_us_ = send_period_us_ * 1.25;
        else
            send_period_us_ = send_period_us_ * 7.0 / 8.0;
        send_period_us_ = std::clamp(send_period_us_,
                                     static_cast<double>(kMinSendPeriodUs),
                                     static_cast<double>(kMaxSendPeriodUs));
        loss_in_epoch_ = false;
    }

    // rescue timer: no cumulative progress while data is in flight means the
    // tail (or every ACK) was lost; requeue everything unacknowledged
    if (inflight() > 0 && now_us - last_progress_us_ >= kExpTimeoutUs) {
        sender_loss_.insert(snd_una_unwrapped_, snd_next_unwrapped_ - 1);
        loss_in_epoch_ = true;
        last_progress_us_ = now_us;
    }

    // receiver-side ACK timer
    if (rcv_highest_unwrapped_ > 0 && now_us - last_ack_emit_us_ >= kAckIntervalUs) {
        std::vector<uint8_t> body;
        put_u32(body, rcv_expected());
        put_u32(body, cfg_.flow_window);
        out.push_back(make_control(ControlType::Ack, 0, ack_subseq_next_++,
                                   std::move(body), now_us));
        last_ack_emit_us_ = now_us;
    }

    // re-advertise missing ranges in case an earlier NAK was lost
    if (!receiver_loss_.empty() && now_us - last_nak_us_ >= kNakIntervalUs) {
        std::vector<std::pair<uint32_t, uint32_t>> ranges;
        for (const auto& r : receiver_loss_.ranges()) {
            ranges.emplace_back(seq_add(rcv_isn_, r.first), seq_add(rcv_isn_, r.last));
            if (ranges.size() * 2 >= kMaxNakWords) break;
        }
        out.push_back(make_control(ControlType::Nak, 0, 0, encode_nak_ranges(ranges),
                                   now_us));
        last_nak_us_ = now_us;
    }

    // paced sending, one packet per elapsed period; cap idle catch-up
    double now_d = static_cast<double>(now_us);
    if (next_send_us_ + send_period_us_ < now_d) next_send_us_ = now_d;
    while (next_send_us_ <= now_d) {
        auto dgram = next_due_send(now_us);
        if (!dgram) {
            next_send_us_ = now_d;
            break;
        }
        out.push_back(std::move(*dgram));
        next_send_us_ += send_period_us_;
    }

    if (now_us - last_send_us_ >= kKeepaliveIntervalUs) {
        out.push_back(make_control(ControlType::KeepAlive, 0, 0, {}, now_us));
        last_send_us_ = now_us;
    }
    return out;
}

std::vector<std::vector<uint8_t>> Connection::close(uint64_t now_us) {
    std::vector<std::vector<uint8_t>> out;
    if (phase_ == Phase::Closed) return out;
    out.push_back(make_control(ControlType::Shutdown, 0, 0, {}, now_us));
    shutdown_sent_ = true;
    phase_ = Phase::Closed;
    return out;
}

std::vector<Message> Connection::take_delivered() {
    std::vector<Message> out;
    out.swap(delivered_);
    return out;
}

// ---------------------------------------------------------------------------

std::string PeerKey::to_string() const {
    return addr.to_string() + ":" + std::to_string(port);
}

Listener::Listener(ConnectionConfig base, GuardPolicy policy, bool require_identity)
    : base_(std::move(base)), policy_(std::move(policy)),
      require_identity_(require_identity) {}

Connection* Listener::connection(uint32_t local_socket_id) {
    auto it = connections_.find(local_socket_id);
    return it == connections_.end() ? nullptr : it->second.get();
}

Connection* Listener::sole_connection() {
    return connections_.size() == 1 ? connections_.begin()->second.get() : nullptr;
}

std::vector<std::vector<uint8_t>> Listener::on_datagram(const PeerKey& peer,
                                                        std::span<const uint8_t> dgram,
                                                        uint64_t now_us) {
    std::vector<std::vector<uint8_t>> out;
    if (dgram.size() < kHeaderSize) {
        stats_.malformed_drops++;
        return out;
    }

    uint32_t word0 = get_u32(dgram, 0);
    uint32_t dest = get_u32(dgram, 12);
    bool is_control = (word0 & 0x80000000u) != 0;
    uint16_t ctype = static_cast<uint16_t>((word0 >> 16) & kCtypeMask);
    uint16_t ext = static_cast<uint16_t>(word0 & 0xFFFF);

    // identity packets: the pre-state guard path, no state, no response
    if (is_control && ctype == static_cast<uint16_t>(ControlType::UserDefined) &&
        ext == kExtIdentity && dest == 0) {
        std::span<const uint8_t> packet = dgram;
        std::vector<uint8_t> stripped;
        if (base_.ao.enabled) {
            try {
                auto split = strip_ao_trailer(dgram, base_.ao.algorithm);
                stripped = std::move(split.first);
                packet = stripped;
            } catch (const MalformedTrailer&) {
                stats_.malformed_drops++;
                return out;
            }
        }
        IdentityRecord record;
        try {
            auto decoded = decode_packet(packet);
            record = parse_identity_packet(std::get<ControlPacket>(decoded));
        } catch (const std::exception&) {
            stats_.guard_rejected++;
            return out;
        }
        auto decision = guard_decide(record, policy_, base_.ao.password, now_us / 1000);
        if (decision.accept) {
            stats_.guard_accepted++;
            if (pending_identity_.size() >= kMaxPending && !pending_identity_.count(peer))
                pending_identity_.erase(pending_identity_.begin());
            pending_identity_[peer] = Pending{record.principal, now_us};
        } else {
            stats_.guard_rejected++;
        }
        return out;
    }

    // handshake requests aimed at the listener itself
    if (is_control && ctype == static_cast<uint16_t>(ControlType::Handshake) &&
        dest == 0) {
        auto known = peer_to_socket_.find(peer);

        if (known == peer_to_socket_.end() && require_identity_ &&
            !pending_identity_.count(peer)) {
            stats_.guard_rejected++;  // no identity, no state, no response
            return out;
        }

        std::vector<uint8_t> packet;
        if (base_.ao.enabled) {
            try {
                auto split = strip_ao_trailer(dgram, base_.ao.algorithm);
                packet = std::move(split.first);
            } catch (const MalformedTrailer&) {
                stats_.malformed_drops++;
                return out;
            }
        } else {
            packet.assign(dgram.begin(), dgram.end());
        }

        std::optional<HandshakeInfo> hs;
        try {
            auto decoded = decode_packet(packet);
            hs = decode_handshake_info(std::get<ControlPacket>(decoded).control_info);
        } catch (const std::exception&) {
            stats_.malformed_drops++;
            return out;
        }
        if (!hs || hs->hs_type != 1) {
            stats_.malformed_drops++;
            return out;
        }

        if (base_.ao.enabled) {
            // request is signed with (initiator cookie ++ zeros); the claimed
            // cookie is inside the signed bytes, so it cannot be forged
            KeyMaterial key;
            key.password = base_.ao.password;
            std::copy(hs->cookie.begin(), hs->cookie.end(), key.connection_key.begin());
            auto pseudo =
                build_pseudo_header(peer.addr, base_.local_addr,
                                    kUdpHeaderSize + dgram.size());
            auto split = strip_ao_trailer(dgram, base_.ao.algorithm);
            auto outcome = verify_segment(base_.ao.algorithm, pseudo, split.first,
                                          split.second, key);
            if (!outcome.accept) {
                stats_.auth_drops++;
                return out;
            }
        }

        if (known != peer_to_socket_.end()) {
            // retransmitted request: the response must have been lost
            if (auto* conn = connection(known->second))
                out.push_back(conn->handshake_response_datagram(now_us));
            return out;
        }

        ConnectionConfig cfg = base_;
        cfg.peer_addr = peer.addr;
        if (base_.rng_seed)
            cfg.rng_seed = mix_seed(base_.rng_seed, connections_.size() + 1);
        cfg.initial_sequence.reset();
        auto conn = Connection::accept(cfg, *hs, now_us);
        uint32_t id = conn->local_socket_id();
        out.push_back(conn->handshake_response_datagram(now_us));
        connections_[id] = std::move(conn);
        peer_to_socket_[peer] = id;
        pending_identity_.erase(peer);
        stats_.connections_created++;
        return out;
    }

    // everything else routes by destination socket id
    auto it = connections_.find(dest);
    if (it == connections_.end()) {
        stats_.unknown_socket_drops++;
        return out;
    }
    return it->second->on_datagram(dgram, now_us);
}

std::vector<std::pair<PeerKey, std::vector<uint8_t>>> Listener::tick(uint64_t now_us) {
    std::vector<std::pair<PeerKey, std::vector<uint8_t>>> out;
    for (auto& [peer, id] : peer_to_socket_) {
        auto* conn = connection(id);
        if (!conn) continue;
        for (auto& dgram : conn->tick(now_us)) out.emplace_back(peer, std::move(dgram));
    }
    return out;
}

}  // namespace udtarmor
