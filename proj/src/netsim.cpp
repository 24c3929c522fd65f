#include "udtarmor/netsim.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace udtarmor {

namespace {

constexpr uint64_t kStepUs = 100;
constexpr std::size_t kMessageBytes = 32768;

uint64_t mix(uint64_t base, uint64_t salt) {
    uint64_t x = base ^ (salt * 0x9E3779B97F4A7C15ull + 0xD1B54A32D192ED03ull);
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDull;
    x ^= x >> 33;
    return x | 1;  // keep seeds nonzero so engines stay deterministic
}

}  // namespace

Channel::Channel(const ChannelPolicy& policy) : policy_(policy), rng_(policy.seed) {}

void Channel::submit(std::vector<uint8_t> datagram, uint64_t now_us) {
    submitted_++;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng_) < policy_.loss_prob) {
        dropped_++;
        return;
    }
    auto delay_of = [&]() {
        uint64_t d = policy_.base_delay_us;
        if (policy_.reorder_window > 0) {
            std::uniform_int_distribution<uint64_t> disp(0, policy_.reorder_window);
            d += disp(rng_) * kStepUs;
        }
        return d;
    };
    uint64_t delay = delay_of();
    bool dup = coin(rng_) < policy_.dup_prob;
    queue_.push(Entry{now_us + delay, next_order_++, datagram});
    if (dup) queue_.push(Entry{now_us + delay_of(), next_order_++, std::move(datagram)});
}

std::vector<std::vector<uint8_t>> Channel::due(uint64_t now_us) {
    std::vector<std::vector<uint8_t>> out;
    while (!queue_.empty() && queue_.top().deliver_at_us <= now_us) {
        out.push_back(std::move(const_cast<Entry&>(queue_.top()).datagram));
        queue_.pop();
    }
    return out;
}

std::vector<uint8_t> synthetic_payload(uint64_t bytes, uint64_t seed) {
    std::vector<uint8_t> out(bytes);
    std::mt19937_64 rng(mix(seed, 0x5EED));
    uint64_t word = 0;
    for (uint64_t i = 0; i < bytes; ++i) {
        if (i % 8 == 0) word = rng();
        out[i] = static_cast<uint8_t>(word >> ((i % 8) * 8));
    }
    return out;
}

std::string sha256_hex(std::span<const uint8_t> bytes) {
    auto digest = compute_ao_digest(HashAlg::Sha256, bytes);
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(digest.size() * 2);
    for (uint8_t b : digest) {
        out.push_back(hexd[b >> 4]);
        out.push_back(hexd[b & 0xF]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Scenario Scenario::parse(const std::string& text) {
    Scenario s;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool channel_seed_set = false;
    while (std::getline(in, line)) {
        lineno++;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ScenarioError("line " + std::to_string(lineno) + ": expected key=value");
        auto strip = [](std::string v) {
            auto b = v.find_first_not_of(" \t");
            auto e = v.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : v.substr(b, e - b + 1);
        };
        std::string key = strip(line.substr(0, eq));
        std::string value = strip(line.substr(eq + 1));

        auto as_u64 = [&]() -> uint64_t {
            try {
                return std::stoull(value);
            } catch (...) {
                throw ScenarioError(key + ": not an integer: " + value);
            }
        };
        auto as_f64 = [&]() -> double {
            try {
                return std::stod(value);
            } catch (...) {
                throw ScenarioError(key + ": not a number: " + value);
            }
        };
        auto as_bool = [&]() -> bool {
            if (value == "on" || value == "true" || value == "1") return true;
            if (value == "off" || value == "false" || value == "0") return false;
            throw ScenarioError(key + ": not a boolean: " + value);
        };

        if (key == "name") s.name = value;
        else if (key == "seed") s.seed = as_u64();
        else if (key == "payload_bytes") s.payload_bytes = as_u64();
        else if (key == "timeout_virtual_us") s.timeout_virtual_us = as_u64();
        else if (key == "ao") s.ao_enabled = as_bool();
        else if (key == "algo") {
            auto alg = hash_alg_from_name(value);
            if (!alg) throw ScenarioError("algo: unknown algorithm: " + value);
            s.algorithm = *alg;
        }
        else if (key == "password") s.password = value;
        else if (key == "identity") s.identity = value;
        else if (key == "require_identity") s.require_identity = as_bool();
        else if (key == "allowlist") {
            std::istringstream items(value);
            std::string item;
            while (std::getline(items, item, ','))
                if (auto v = strip(item); !v.empty()) s.allowlist.push_back(v);
        }
        else if (key == "loss_prob") s.channel.loss_prob = as_f64();
        else if (key == "dup_prob") s.channel.dup_prob = as_f64();
        else if (key == "reorder_window") s.channel.reorder_window = static_cast<uint32_t>(as_u64());
        else if (key == "base_delay_us") s.channel.base_delay_us = as_u64();
        else if (key == "channel_seed") { s.channel.seed = as_u64(); channel_seed_set = true; }
        else if (key == "inject_count") s.spoof.count = as_u64();
        else if (key == "inject_knows_sequence") s.spoof.knows_sequence = as_bool();
        else if (key == "inject_rate_per_sec") s.spoof.rate_per_sec = static_cast<uint32_t>(as_u64());
        else if (key == "flood_count") s.flood_count = as_u64();
        else if (key == "expect_transfer_ok") s.expect_transfer_ok = as_bool();
        else if (key == "expect_accepted_max") s.expect_accepted_max = as_u64();
        else if (key == "expect_accepted_min") s.expect_accepted_min = as_u64();
        else if (key == "expect_responses_max") s.expect_responses_max = as_u64();
        else if (key == "expect_connections_max") s.expect_connections_max = as_u64();
        else if (key == "expect_guard_rejected_min") s.expect_guard_rejected_min = as_u64();
        else throw ScenarioError("unknown scenario key: " + key);
    }
    if (!channel_seed_set) s.channel.seed = s.seed;
    s.validate();
    return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

void Scenario::validate() const {
    if (channel.loss_prob < 0.0 || channel.loss_prob > 1.0)
        throw ScenarioError("loss_prob must be in [0,1]");
    if (channel.dup_prob < 0.0 || channel.dup_prob > 1.0)
        throw ScenarioError("dup_prob must be in [0,1]");
    if (ao_enabled && !password_valid(password))
        throw ScenarioError("password must be printable ASCII, 1..=128 bytes");
    if (spoof.count > 0 && spoof.rate_per_sec == 0)
        throw ScenarioError("inject_rate_per_sec must be positive");
}

std::string TrialReport::to_json() const {
    nlohmann::json j;
    j["schema"] = 1;
    j["injected"] = injected;
    j["accepted_by_receiver"] = accepted_by_receiver;
    j["auth_drops"] = auth_drops;
    j["malformed_drops"] = malformed_drops;
    j["other_drops"] = other_drops;
    j["responses_observed_by_attacker"] = responses_observed_by_attacker;
    j["transfer_ok"] = transfer_ok;
    j["elapsed_us"] = elapsed_us;
    j["flood_attempts"] = flood_attempts;
    j["guard_rejected"] = guard_rejected;
    j["connections_created"] = connections_created;
    j["channel_lost"] = channel_lost;
    j["received_sha256"] = received_sha256;
    j["receiver"] = {
        {"accepted", receiver_stats.accepted},
        {"dropped_auth", receiver_stats.dropped_auth},
        {"dropped_malformed", receiver_stats.dropped_malformed},
        {"retransmitted", receiver_stats.retransmitted},
        {"duplicates", receiver_stats.duplicates},
        {"delivered_messages", receiver_stats.delivered_messages},
        {"delivered_bytes", receiver_stats.delivered_bytes},
    };
    return j.dump(2);
}

bool check_expectations(const Scenario& s, const TrialReport& r, std::string* failure) {
    auto fail = [&](const std::string& msg) {
        if (failure) *failure = msg;
        return false;
    };
    if (s.expect_transfer_ok && r.transfer_ok != *s.expect_transfer_ok)
        return fail("transfer_ok != expected");
    if (s.expect_accepted_max && r.accepted_by_receiver > *s.expect_accepted_max)
        return fail("accepted_by_receiver above maximum");
    if (s.expect_accepted_min && r.accepted_by_receiver < *s.expect_accepted_min)
        return fail("accepted_by_receiver below minimum");
    if (s.expect_responses_max &&
        r.responses_observed_by_attacker > *s.expect_responses_max)
        return fail("attacker observed more responses than allowed");
    if (s.expect_connections_max && r.connections_created > *s.expect_connections_max)
        return fail("connections_created above maximum");
    if (s.expect_guard_rejected_min && r.guard_rejected < *s.expect_guard_rejected_min)
        return fail("guard_rejected below minimum");
    return true;
}

// ---------------------------------------------------------------------------

namespace {

struct InjectOutcome {
    uint64_t responses = 0;
};

// Delivers one attacker datagram and attributes the result to a report
// category from the receiver-side counter deltas.
void deliver_injected(Listener& listener, Connection* conn, const PeerKey& from,
                      const std::vector<uint8_t>& dgram, uint64_t now_us,
                      TrialReport& report) {
    ListenerStats lbefore = listener.stats();
    ConnStats cbefore = conn ? conn->stats() : ConnStats{};
    auto responses = listener.on_datagram(from, dgram, now_us);
    ListenerStats lafter = listener.stats();
    ConnStats cafter = conn ? conn->stats() : ConnStats{};

    report.injected++;
    report.responses_observed_by_attacker += responses.size();
    if (cafter.dropped_auth > cbefore.dropped_auth ||
        lafter.auth_drops > lbefore.auth_drops)
        report.auth_drops++;
    else if (cafter.dropped_malformed > cbefore.dropped_malformed ||
             lafter.malformed_drops > lbefore.malformed_drops)
        report.malformed_drops++;
    else if (cafter.accepted > cbefore.accepted)
        report.accepted_by_receiver++;
    else
        report.other_drops++;
}

}  // namespace

TrialReport run_trial(const Scenario& scenario) {
    TrialReport report;

    const Ipv4 sender_addr = Ipv4::parse("10.0.0.1");
    const Ipv4 receiver_addr = Ipv4::parse("10.0.0.2");
    const PeerKey sender_peer{sender_addr, 40001};

    ConnectionConfig rcfg;
    rcfg.ao.enabled = scenario.ao_enabled;
    rcfg.ao.algorithm = scenario.algorithm;
    rcfg.ao.password = scenario.password;
    rcfg.local_addr = receiver_addr;
    rcfg.rng_seed = mix(scenario.seed, 2);

    GuardPolicy policy;
    if (!scenario.allowlist.empty()) {
        policy.mode = GuardMode::Allowlist;
        policy.allowlist.insert(scenario.allowlist.begin(), scenario.allowlist.end());
    }
    Listener listener(rcfg, std::move(policy), scenario.require_identity);

    std::unique_ptr<Connection> sender;
    Channel to_receiver(ChannelPolicy{scenario.channel.loss_prob,
                                      scenario.channel.dup_prob,
                                      scenario.channel.reorder_window,
                                      scenario.channel.base_delay_us,
                                      mix(scenario.channel.seed, 11)});
    Channel to_sender(ChannelPolicy{scenario.channel.loss_prob,
                                    scenario.channel.dup_prob,
                                    scenario.channel.reorder_window,
                                    scenario.channel.base_delay_us,
                                    mix(scenario.channel.seed, 12)});

    std::vector<uint8_t> payload = synthetic_payload(scenario.payload_bytes, scenario.seed);
    bool run_transfer = scenario.payload_bytes > 0;

    std::vector<std::vector<uint8_t>> first_burst;
    if (run_transfer) {
        ConnectionConfig scfg;
        scfg.ao = rcfg.ao;
        scfg.local_addr = sender_addr;
        scfg.peer_addr = receiver_addr;
        scfg.rng_seed = mix(scenario.seed, 1);
        sender = Connection::open(scfg, scenario.identity, 0, first_burst);
        for (std::size_t off = 0; off < payload.size(); off += kMessageBytes) {
            std::size_t len = std::min(kMessageBytes, payload.size() - off);
            sender->send_message(
                std::vector<uint8_t>(payload.begin() + off, payload.begin() + off + len),
                true);
        }
    }

    std::mt19937_64 attacker_rng(mix(scenario.seed, 3));
    uint64_t inject_interval_us =
        scenario.spoof.rate_per_sec ? 1000000ull / scenario.spoof.rate_per_sec : 0;
    uint64_t next_inject_us = 0;
    uint64_t injected_so_far = 0;
    uint64_t flood_so_far = 0;

    std::vector<uint8_t> received;
    bool sender_closed = !run_transfer;

    auto pump = [&](uint64_t t) {
        // cascade until both directions are quiescent at this instant
        for (int guard = 0; guard < 64; ++guard) {
            auto d1 = to_receiver.due(t);
            auto d2 = to_sender.due(t);
            if (d1.empty() && d2.empty()) break;
            for (auto& dgram : d1) {
                for (auto& resp : listener.on_datagram(sender_peer, dgram, t))
                    to_sender.submit(std::move(resp), t);
            }
            for (auto& dgram : d2) {
                if (!sender) continue;
                for (auto& resp : sender->on_datagram(dgram, t))
                    to_receiver.submit(std::move(resp), t);
            }
        }
    };

    for (auto& dgram : first_burst) to_receiver.submit(std::move(dgram), 0);

    uint64_t t = 0;
    bool done = false;
    for (; t <= scenario.timeout_virtual_us; t += kStepUs) {
        if (sender)
            for (auto& dgram : sender->tick(t)) to_receiver.submit(std::move(dgram), t);
        for (auto& [peer, dgram] : listener.tick(t)) {
            (void)peer;  // single legit peer in a trial
            to_sender.submit(std::move(dgram), t);
        }
        pump(t);

        Connection* rconn = listener.sole_connection();

        // spoof injector: knows addresses, socket id, and (optionally) the
        // exact expected sequence; never the key
        while (scenario.spoof.count > injected_so_far && rconn &&
               rconn->phase() == Phase::Established && t >= next_inject_us) {
            DataPacket pkt;
            pkt.header.sequence = scenario.spoof.knows_sequence
                                      ? rconn->rcv_expected()
                                      : static_cast<uint32_t>(attacker_rng() & kSeqMask);
            pkt.header.boundary = Boundary::Solo;
            pkt.header.message_number = 0x1BAD;
            pkt.header.timestamp_us = static_cast<uint32_t>(t);
            pkt.header.dest_socket_id = rconn->local_socket_id();
            pkt.payload = scenario.spoof.payload;
            auto dgram = encode_packet(pkt);
            if (scenario.ao_enabled) {
                AoTrailer trailer;
                trailer.algorithm = scenario.algorithm;
                trailer.digest.resize(digest_length(scenario.algorithm));
                for (auto& b : trailer.digest) b = static_cast<uint8_t>(attacker_rng());
                dgram = append_ao_trailer(dgram, trailer);
            }
            deliver_injected(listener, rconn, sender_peer, dgram, t, report);
            injected_so_far++;
            next_inject_us += inject_interval_us;
            if (inject_interval_us == 0) break;
        }

        // flood injector: connection attempts with no valid identity
        if (scenario.flood_count > flood_so_far) {
            IdentityRecord record;
            record.principal = "flood-" + std::to_string(flood_so_far);
            record.issued_at_ms = t / 1000;
            for (auto& b : record.nonce) b = static_cast<uint8_t>(attacker_rng());
            record.algorithm = scenario.algorithm;
            record.signature.resize(digest_length(scenario.algorithm));
            for (auto& b : record.signature) b = static_cast<uint8_t>(attacker_rng());
            ControlPacket pkt;
            pkt.ctype = static_cast<uint16_t>(ControlType::UserDefined);
            pkt.extended_type = kExtIdentity;
            pkt.control_info = serialize_identity(record);
            auto dgram = encode_packet(pkt);
            if (scenario.ao_enabled) {
                AoTrailer trailer;
                trailer.algorithm = scenario.algorithm;
                trailer.digest.resize(digest_length(scenario.algorithm));
                for (auto& b : trailer.digest) b = static_cast<uint8_t>(attacker_rng());
                dgram = append_ao_trailer(dgram, trailer);
            }
            PeerKey flood_peer{Ipv4::parse("10.9.9.9"),
                               static_cast<uint16_t>(1024 + (flood_so_far & 0x7FFF))};
            uint64_t before_resp = report.responses_observed_by_attacker;
            deliver_injected(listener, rconn, flood_peer, dgram, t, report);
            (void)before_resp;
            flood_so_far++;
            report.flood_attempts++;
        }

        if (rconn)
            for (auto& msg : rconn->take_delivered())
                received.insert(received.end(), msg.bytes.begin(), msg.bytes.end());

        // hold the association open until the injector is spent, so every
        // spoofed segment faces a live connection
        if (run_transfer && !sender_closed && sender->phase() == Phase::Established &&
            sender->all_sent_and_acked() && injected_so_far >= scenario.spoof.count) {
            for (auto& dgram : sender->close(t)) to_receiver.submit(std::move(dgram), t);
            sender_closed = true;
        }
        pump(t);

        if (rconn)
            for (auto& msg : rconn->take_delivered())
                received.insert(received.end(), msg.bytes.begin(), msg.bytes.end());

        bool transfer_done = !run_transfer ||
                             (sender_closed && rconn && rconn->shutdown_received());
        bool attackers_done = injected_so_far >= scenario.spoof.count &&
                              flood_so_far >= scenario.flood_count;
        if (transfer_done && attackers_done && to_receiver.empty() && to_sender.empty()) {
            done = true;
            break;
        }
    }

    report.elapsed_us = t;
    report.transfer_ok = done && run_transfer && received == payload;
    if (!run_transfer) report.transfer_ok = done;
    report.guard_rejected = listener.stats().guard_rejected;
    report.connections_created = listener.stats().connections_created;
    report.channel_lost = to_receiver.dropped() + to_sender.dropped();
    if (auto* rconn = listener.sole_connection()) report.receiver_stats = rconn->stats();
    report.received_sha256 = sha256_hex(received);
    return report;
}

}  // namespace udtarmor
