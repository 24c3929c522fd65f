#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "udtarmor/engine.hpp"

using namespace udtarmor;

namespace {

const Ipv4 kSenderAddr = Ipv4::parse("10.0.0.1");
const Ipv4 kReceiverAddr = Ipv4::parse("10.0.0.2");
const PeerKey kSenderPeer{kSenderAddr, 40001};

ConnectionConfig sender_config(bool ao) {
    ConnectionConfig cfg;
    cfg.ao.enabled = ao;
    cfg.ao.password = "engine-test-key";
    cfg.local_addr = kSenderAddr;
    cfg.peer_addr = kReceiverAddr;
    cfg.rng_seed = 101;
    return cfg;
}

ConnectionConfig receiver_config(bool ao) {
    ConnectionConfig cfg;
    cfg.ao.enabled = ao;
    cfg.ao.password = "engine-test-key";
    cfg.local_addr = kReceiverAddr;
    cfg.peer_addr = kSenderAddr;
    cfg.rng_seed = 202;
    return cfg;
}

// wires one initiator to one listener with no loss and no delay
struct Pair {
    std::unique_ptr<Connection> sender;
    Listener listener;
    uint64_t t = 0;

    explicit Pair(bool ao, GuardPolicy policy = {}, bool require_identity = false,
                  std::optional<uint32_t> isn = std::nullopt)
        : listener(receiver_config(ao), std::move(policy), require_identity) {
        ConnectionConfig cfg = sender_config(ao);
        cfg.initial_sequence = isn;
        std::vector<std::vector<uint8_t>> burst;
        sender = Connection::open(cfg, "alice", t, burst);
        for (auto& d : burst) deliver_to_receiver(d);
    }

    void deliver_to_receiver(const std::vector<uint8_t>& d) {
        for (auto& resp : listener.on_datagram(kSenderPeer, d, t))
            deliver_to_sender(resp);
    }
    void deliver_to_sender(const std::vector<uint8_t>& d) {
        for (auto& resp : sender->on_datagram(d, t))
            deliver_to_receiver(resp);
    }
    void step(uint64_t dt = 100) {
        t += dt;
        for (auto& d : sender->tick(t)) deliver_to_receiver(d);
        for (auto& [peer, d] : listener.tick(t)) {
            (void)peer;
            deliver_to_sender(d);
        }
    }
    Connection* receiver() { return listener.sole_connection(); }
};

std::vector<uint8_t> collect(Pair& p, std::size_t want_bytes, uint64_t max_steps) {
    std::vector<uint8_t> got;
    for (uint64_t i = 0; i < max_steps && got.size() < want_bytes; ++i) {
        p.step();
        if (auto* r = p.receiver())
            for (auto& m : r->take_delivered())
                got.insert(got.end(), m.bytes.begin(), m.bytes.end());
    }
    return got;
}

}  // namespace

TEST_CASE("handshake: opening burst is identity then request, both AO-sealed") {
    ConnectionConfig cfg = sender_config(true);
    std::vector<std::vector<uint8_t>> burst;
    auto conn = Connection::open(cfg, "alice", 0, burst);
    REQUIRE(burst.size() == 2);
    CHECK(conn->phase() == Phase::IdentitySent);

    // both datagrams carry a trailer sized for the configured algorithm
    for (auto& d : burst) {
        auto [packet, trailer] = strip_ao_trailer(d, HashAlg::Sha256);
        CHECK(trailer.digest.size() == 32);
        auto decoded = decode_packet(packet);
        REQUIRE(std::holds_alternative<ControlPacket>(decoded));
    }
    auto first = std::get<ControlPacket>(
        decode_packet(strip_ao_trailer(burst[0], HashAlg::Sha256).first));
    CHECK(is_identity_packet(first));
    auto second = std::get<ControlPacket>(
        decode_packet(strip_ao_trailer(burst[1], HashAlg::Sha256).first));
    CHECK(second.ctype == static_cast<uint16_t>(ControlType::Handshake));
}

TEST_CASE("handshake: full exchange establishes both sides") {
    Pair p(true);
    CHECK(p.sender->phase() == Phase::Established);
    REQUIRE(p.receiver() != nullptr);
    CHECK(p.receiver()->phase() == Phase::Established);
    CHECK(p.listener.stats().guard_accepted == 1);
    CHECK(p.listener.stats().connections_created == 1);
    // each side knows the other's socket id
    CHECK(p.sender->peer_socket_id() == p.receiver()->local_socket_id());
    CHECK(p.receiver()->peer_socket_id() == p.sender->local_socket_id());
}

TEST_CASE("handshake retry: a lost response is re-answered") {
    ConnectionConfig cfg = sender_config(true);
    std::vector<std::vector<uint8_t>> burst;
    auto conn = Connection::open(cfg, "alice", 0, burst);

    Listener listener(receiver_config(true), {}, false);
    // deliver the burst but drop the listener's response on the floor
    for (auto& d : burst) listener.on_datagram(kSenderPeer, d, 0);
    CHECK(conn->phase() == Phase::IdentitySent);

    // initiator retries after kHandshakeRetryUs
    auto retry = conn->tick(kHandshakeRetryUs);
    REQUIRE(retry.size() == 2);
    std::vector<std::vector<uint8_t>> responses;
    for (auto& d : retry)
        for (auto& r : listener.on_datagram(kSenderPeer, d, kHandshakeRetryUs))
            responses.push_back(r);
    REQUIRE(responses.size() == 1);  // duplicate request answered, no new conn
    CHECK(listener.stats().connections_created == 1);
    for (auto& r : responses) conn->on_datagram(r, kHandshakeRetryUs);
    CHECK(conn->phase() == Phase::Established);
}

TEST_CASE("require-identity: a bare handshake gets silence and no state") {
    Listener listener(receiver_config(true), {}, true);
    ConnectionConfig cfg = sender_config(true);
    std::vector<std::vector<uint8_t>> burst;
    auto conn = Connection::open(cfg, "alice", 0, burst);

    // only the handshake request, identity withheld
    auto responses = listener.on_datagram(kSenderPeer, burst[1], 0);
    CHECK(responses.empty());
    CHECK(listener.connection_count() == 0);
    CHECK(listener.stats().guard_rejected == 1);
}

TEST_CASE("allowlist: unknown principal never completes the handshake") {
    GuardPolicy policy;
    policy.mode = GuardMode::Allowlist;
    policy.allowlist = {"bob"};
    Pair p(true, std::move(policy), true);
    CHECK(p.sender->phase() == Phase::IdentitySent);
    CHECK(p.listener.connection_count() == 0);
    CHECK(p.listener.stats().guard_rejected >= 1);
}

TEST_CASE("wrong key: handshake dies at the AO gate, silently") {
    ConnectionConfig cfg = sender_config(true);
    cfg.ao.password = "not-the-receivers-key";
    std::vector<std::vector<uint8_t>> burst;
    auto conn = Connection::open(cfg, "alice", 0, burst);

    Listener listener(receiver_config(true), {}, false);
    std::size_t responses = 0;
    for (auto& d : burst) responses += listener.on_datagram(kSenderPeer, d, 0).size();
    CHECK(responses == 0);
    CHECK(listener.connection_count() == 0);
    // identity dies at the guard, the request at the segment AO check
    CHECK(listener.stats().guard_rejected == 1);
    CHECK(listener.stats().auth_drops == 1);
}

TEST_CASE("message chunking: small message is one solo packet") {
    Pair p(true);
    p.sender->send_message(std::vector<uint8_t>(1000, 0x5A), true);
    auto got = collect(p, 1000, 100);
    CHECK(got == std::vector<uint8_t>(1000, 0x5A));
    CHECK(p.receiver()->stats().delivered_messages == 1);
    CHECK(p.sender->stats().sent_data == 1);
}

TEST_CASE("message chunking: 3000 bytes becomes first/middle/last") {
    Pair p(true);
    std::vector<uint8_t> payload(3000);
    for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<uint8_t>(i * 7);
    p.sender->send_message(payload, true);
    auto got = collect(p, payload.size(), 200);
    CHECK(got == payload);
    CHECK(p.sender->stats().sent_data == 3);  // 1368 + 1368 + 264
    CHECK(p.receiver()->stats().delivered_messages == 1);
}

TEST_CASE("gap triggers an immediate NAK and a retransmission heals it") {
    Pair p(false, {}, false, 100);  // AO off so packets are easy to forge/drop
    auto* rcv = p.receiver();
    REQUIRE(rcv);

    auto data = [&](uint32_t seq, uint8_t fill) {
        DataPacket pkt;
        pkt.header.sequence = seq;
        pkt.header.boundary = Boundary::Solo;
        pkt.header.in_order = true;
        pkt.header.message_number = 1;
        pkt.header.dest_socket_id = rcv->local_socket_id();
        pkt.payload.assign(10, fill);
        return encode_packet(pkt);
    };

    // receiver expects 100 (the initiator ISN); deliver 100 then skip to 103
    CHECK(rcv->rcv_expected() == 100);
    auto out = rcv->on_datagram(data(100, 1), 0);
    CHECK(out.empty());  // no gap yet
    out = rcv->on_datagram(data(103, 4), 0);
    REQUIRE(out.size() == 1);  // immediate NAK for 101..102
    auto nak = std::get<ControlPacket>(decode_packet(out[0]));
    CHECK(nak.ctype == static_cast<uint16_t>(ControlType::Nak));
    auto ranges = decode_nak_ranges(nak.control_info);
    REQUIRE(ranges.has_value());
    REQUIRE(ranges->size() == 1);
    CHECK((*ranges)[0] == std::pair<uint32_t, uint32_t>{101, 102});
    CHECK(rcv->rcv_expected() == 101);

    // fill the hole; delivery resumes in sequence order
    rcv->on_datagram(data(101, 2), 0);
    rcv->on_datagram(data(102, 3), 0);
    CHECK(rcv->rcv_expected() == 104);
    auto msgs = rcv->take_delivered();
    REQUIRE(msgs.size() == 4);
    CHECK(msgs[0].bytes[0] == 1);
    CHECK(msgs[1].bytes[0] == 2);
    CHECK(msgs[2].bytes[0] == 3);
    CHECK(msgs[3].bytes[0] == 4);
}

TEST_CASE("duplicate data packets are counted and not redelivered") {
    Pair p(false, {}, false, 500);
    auto* rcv = p.receiver();
    DataPacket pkt;
    pkt.header.sequence = 500;
    pkt.header.boundary = Boundary::Solo;
    pkt.header.message_number = 1;
    pkt.header.dest_socket_id = rcv->local_socket_id();
    pkt.payload.assign(8, 0xEE);
    auto wire = encode_packet(pkt);
    rcv->on_datagram(wire, 0);
    rcv->on_datagram(wire, 0);
    rcv->on_datagram(wire, 0);
    CHECK(rcv->stats().duplicates == 2);
    CHECK(rcv->take_delivered().size() == 1);
}

TEST_CASE("ack advances snd_una and is answered with ack2") {
    Pair p(false, {}, false, 0);
    p.sender->send_message(std::vector<uint8_t>(100, 1), true);
    p.step();  // emits the data packet; receiver buffers it
    CHECK(p.sender->inflight() == 1);

    // receiver's ACK timer runs at 10ms
    std::vector<std::vector<uint8_t>> acks;
    for (auto& [peer, d] : p.listener.tick(p.t + kAckIntervalUs)) {
        (void)peer;
        acks.push_back(d);
    }
    REQUIRE(acks.size() == 1);
    auto ack = std::get<ControlPacket>(decode_packet(acks[0]));
    CHECK(ack.ctype == static_cast<uint16_t>(ControlType::Ack));
    CHECK((get_u32(ack.control_info, 0) & kSeqMask) == 1);  // next expected

    auto replies = p.sender->on_datagram(acks[0], p.t + kAckIntervalUs);
    CHECK(p.sender->inflight() == 0);
    CHECK(p.sender->all_sent_and_acked());
    REQUIRE(replies.size() == 1);
    auto ack2 = std::get<ControlPacket>(decode_packet(replies[0]));
    CHECK(ack2.ctype == static_cast<uint16_t>(ControlType::Ack2));
    CHECK(ack2.additional_info == ack.additional_info);

    // replaying the same ACK is ignored (stale sub-sequence)
    auto replay = p.sender->on_datagram(acks[0], p.t + 2 * kAckIntervalUs);
    CHECK(replay.empty());
}

TEST_CASE("a zero advertised window pauses new data") {
    Pair p(false, {}, false, 0);
    auto* rcv = p.receiver();
    p.sender->send_message(std::vector<uint8_t>(100, 1), true);
    p.sender->send_message(std::vector<uint8_t>(100, 2), true);

    ControlPacket ack;
    ack.ctype = static_cast<uint16_t>(ControlType::Ack);
    ack.additional_info = 1;  // sub-sequence
    ack.dest_socket_id = p.sender->local_socket_id();
    put_u32(ack.control_info, 0);  // still expecting the ISN
    put_u32(ack.control_info, 0);  // window 0
    (void)rcv;
    p.sender->on_datagram(encode_packet(ack), 0);
    CHECK(p.sender->flow_window() == 0);

    for (int i = 0; i < 100; ++i) p.step();
    CHECK(p.sender->stats().sent_data == 0);  // nothing moved

    ControlPacket open_ack = ack;
    open_ack.additional_info = 2;
    open_ack.control_info.clear();
    put_u32(open_ack.control_info, 0);
    put_u32(open_ack.control_info, 16);  // window reopens
    p.sender->on_datagram(encode_packet(open_ack), p.t);
    for (int i = 0; i < 100; ++i) p.step();
    CHECK(p.sender->stats().sent_data == 2);
}

TEST_CASE("rate control: five loss-free epochs shrink the period to 1000*(7/8)^5") {
    Pair p(true);
    CHECK(p.sender->send_period_us() == 1000.0);
    // epochs elapse inside tick regardless of traffic
    p.sender->tick(5 * kRateEpochUs);
    double want = 1000.0;
    for (int i = 0; i < 5; ++i) want = want * 7.0 / 8.0;
    CHECK(p.sender->send_period_us() == want);  // exact: same arithmetic
    CHECK(std::abs(p.sender->send_period_us() - 512.908935546875) < 1e-9);
}

TEST_CASE("rate control: an epoch with loss multiplies the period by 1.25") {
    Pair p(false, {}, false, 0);
    p.sender->send_message(std::vector<uint8_t>(10, 1), true);
    p.step();  // seq 0 goes out

    ControlPacket nak;
    nak.ctype = static_cast<uint16_t>(ControlType::Nak);
    nak.dest_socket_id = p.sender->local_socket_id();
    nak.control_info = encode_nak_ranges({{0, 0}});
    p.sender->on_datagram(encode_packet(nak), p.t);

    double before = p.sender->send_period_us();
    p.sender->tick(p.t + kRateEpochUs);
    CHECK(p.sender->send_period_us() == before * 1.25);
    CHECK(p.sender->stats().retransmitted >= 1);
}

TEST_CASE("rate control: the period stays within [100, 100000]") {
    Pair p(true);
    p.sender->tick(1000 * kRateEpochUs);  // many loss-free epochs
    CHECK(p.sender->send_period_us() == 100.0);
}

TEST_CASE("nak for sequences never sent is ignored") {
    Pair p(false, {}, false, 0);
    ControlPacket nak;
    nak.ctype = static_cast<uint16_t>(ControlType::Nak);
    nak.dest_socket_id = p.sender->local_socket_id();
    nak.control_info = encode_nak_ranges({{50, 60}});
    p.sender->on_datagram(encode_packet(nak), 0);
    CHECK(p.sender->stats().nak_ignored == 1);
    CHECK(p.sender->sender_loss_list().empty());
}

TEST_CASE("keepalive after one quiet second") {
    Pair p(true);
    auto out = p.sender->tick(kKeepaliveIntervalUs);
    REQUIRE(out.size() == 1);
    auto pkt = std::get<ControlPacket>(
        decode_packet(strip_ao_trailer(out[0], HashAlg::Sha256).first));
    CHECK(pkt.ctype == static_cast<uint16_t>(ControlType::KeepAlive));
    // and not again immediately
    CHECK(p.sender->tick(kKeepaliveIntervalUs + 100).empty());
}

TEST_CASE("rescue timer requeues unacked data when acks stop") {
    Pair p(false, {}, false, 0);
    p.sender->send_message(std::vector<uint8_t>(10, 1), true);
    p.step();
    CHECK(p.sender->inflight() == 1);
    // silence from the receiver for kExpTimeoutUs: packet must be requeued
    auto out = p.sender->tick(p.t + kExpTimeoutUs);
    bool saw_data = false;
    for (auto& d : out) {
        auto decoded = decode_packet(d);
        if (std::holds_alternative<DataPacket>(decoded)) saw_data = true;
    }
    CHECK(saw_data);
    CHECK(p.sender->stats().retransmitted == 1);
}

TEST_CASE("close is idempotent and further sends throw") {
    Pair p(true);
    auto out = p.sender->close(100);
    REQUIRE(out.size() == 1);
    CHECK(p.sender->phase() == Phase::Closed);
    CHECK(p.sender->close(200).empty());
    CHECK_THROWS_AS(p.sender->send_message({1, 2, 3}, true), ConnectionClosed);
    CHECK(p.sender->tick(300).empty());

    // the receiver learns of the shutdown
    p.deliver_to_receiver(out[0]);
    CHECK(p.receiver()->shutdown_received());
    CHECK(p.receiver()->phase() == Phase::Closed);
}

TEST_CASE("ao misconfiguration is rejected at construction") {
    ConnectionConfig cfg = sender_config(true);
    cfg.ao.password.clear();
    std::vector<std::vector<uint8_t>> burst;
    CHECK_THROWS_AS(Connection::open(cfg, "alice", 0, burst), ConfigError);

    cfg.ao.password = std::string(129, 'x');
    CHECK_THROWS_AS(Connection::open(cfg, "alice", 0, burst), ConfigError);

    cfg.ao.password = "bad\x01key";
    CHECK_THROWS_AS(Connection::open(cfg, "alice", 0, burst), ConfigError);
}

TEST_CASE("sequence wraparound: transfer spanning 2^31 stays correct") {
    Pair p(true, {}, false, (1u << 31) - 100);
    CHECK(p.sender->initial_sequence() == (1u << 31) - 100);
    std::vector<uint8_t> payload(300 * 1000);  // ~220 packets, crosses the wrap
    for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = static_cast<uint8_t>(i ^ (i >> 9));
    for (std::size_t off = 0; off < payload.size(); off += 32768) {
        std::size_t len = std::min<std::size_t>(32768, payload.size() - off);
        p.sender->send_message(
            std::vector<uint8_t>(payload.begin() + off, payload.begin() + off + len), true);
    }
    auto got = collect(p, payload.size(), 20000);
    CHECK(got == payload);
    CHECK(p.receiver()->rcv_expected() ==
          seq_add((1u << 31) - 100, p.sender->stats().sent_data));
}

TEST_CASE("tampered datagrams are auth-dropped without any response") {
    Pair p(true);
    p.sender->send_message(std::vector<uint8_t>(64, 0x21), true);
    p.t += 100;
    auto out = p.sender->tick(p.t);
    REQUIRE(out.size() == 1);
    auto bad = out[0];
    bad[20] ^= 0x01;  // flip a payload bit under the digest
    auto responses = p.listener.on_datagram(kSenderPeer, bad, p.t);
    CHECK(responses.empty());
    CHECK(p.receiver()->stats().dropped_auth == 1);
    CHECK(p.receiver()->stats().accepted == 0);
}
