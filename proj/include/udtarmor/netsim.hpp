#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "udtarmor/engine.hpp"

// Deterministic adversarial channel connecting two engine instances
// in-process: seeded loss, duplication, reordering, delay, plus a spoof
// injector modeling an attacker who sees the wire but never the key.
// A virtual clock drives the whole simulation.

namespace udtarmor {

struct ChannelPolicy {
    double loss_prob = 0.0;
    double dup_prob = 0.0;
    uint32_t reorder_window = 0;   // max displacement, in packets
    uint64_t base_delay_us = 0;
    uint64_t seed = 1;
};

class Channel {
public:
    explicit Channel(const ChannelPolicy& policy);

    void submit(std::vector<uint8_t> datagram, uint64_t now_us);
    std::vector<std::vector<uint8_t>> due(uint64_t now_us);

    uint64_t submitted() const { return submitted_; }
    uint64_t dropped() const { return dropped_; }
    bool empty() const { return queue_.empty(); }

private:
    struct Entry {
        uint64_t deliver_at_us;
        uint64_t order;  // tiebreaker, preserves determinism
        std::vector<uint8_t> datagram;
        bool operator>(const Entry& o) const {
            return std::tie(deliver_at_us, order) > std::tie(o.deliver_at_us, o.order);
        }
    };

    ChannelPolicy policy_;
    std::mt19937_64 rng_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
    uint64_t next_order_ = 0;
    uint64_t submitted_ = 0;
    uint64_t dropped_ = 0;
};

struct SpoofProfile {
    bool knows_sequence = true;
    uint32_t rate_per_sec = 10000;
    uint64_t count = 0;            // total segments to inject; 0 = no injector
    std::vector<uint8_t> payload = {0xDE, 0xAD, 0xBE, 0xEF};
};

struct TrialReport {
    uint64_t injected = 0;
    uint64_t accepted_by_receiver = 0;
    uint64_t auth_drops = 0;
    uint64_t malformed_drops = 0;
    uint64_t other_drops = 0;      // duplicates, unknown socket, ignored
    uint64_t responses_observed_by_attacker = 0;
    bool transfer_ok = false;
    uint64_t elapsed_us = 0;       // virtual time

    // flood-path counters
    uint64_t flood_attempts = 0;
    uint64_t guard_rejected = 0;
    uint64_t connections_created = 0;

    // receiver-side snapshot for parity checks
    ConnStats receiver_stats;
    std::string received_sha256;
    uint64_t channel_lost = 0;

    std::string to_json() const;
};

struct Scenario {
    std::string name = "scenario";
    uint64_t seed = 1;
    uint64_t payload_bytes = 0;
    uint64_t timeout_virtual_us = 120000000;

    bool ao_enabled = true;
    HashAlg algorithm = HashAlg::Sha256;
    std::string password = "udt-armor-test-key";
    std::string identity = "alice";
    bool require_identity = false;
    std::vector<std::string> allowlist;  // empty = AllowAll

    ChannelPolicy channel;

    SpoofProfile spoof;
    uint64_t flood_count = 0;  // identity-less / bad-signature connection attempts

    // expectations evaluated by `udt-armor simulate`; nullopt = not checked
    std::optional<bool> expect_transfer_ok;
    std::optional<uint64_t> expect_accepted_max;
    std::optional<uint64_t> expect_accepted_min;
    std::optional<uint64_t> expect_responses_max;
    std::optional<uint64_t> expect_connections_max;
    std::optional<uint64_t> expect_guard_rejected_min;

    // key=value lines, '#' comments; throws ScenarioError on bad input
    static Scenario parse(const std::string& text);
    static Scenario load(const std::filesystem::path& path);
    void validate() const;  // ScenarioError
};

TrialReport run_trial(const Scenario& scenario);

// True iff every expectation set in the scenario holds for the report.
bool check_expectations(const Scenario& scenario, const TrialReport& report,
                        std::string* failure = nullptr);

// Deterministic payload generator shared by simulator and tests.
std::vector<uint8_t> synthetic_payload(uint64_t bytes, uint64_t seed);

std::string sha256_hex(std::span<const uint8_t> bytes);

}  // namespace udtarmor
