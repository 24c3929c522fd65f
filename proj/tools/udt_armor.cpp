#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "udtarmor/netsim.hpp"
#include "udtarmor/udp_io.hpp"

namespace {

using namespace udtarmor;

uint64_t now_us() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

constexpr std::size_t kMessageBytes = 32768;

struct CommonOpts {
    std::string key_file;
    std::string algo = "sha256";
    bool no_ao = false;
    double timeout_s = 30.0;
    std::string stats_json;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--key-file", opts.key_file, "file holding the shared key");
    cmd->add_option("--algo", opts.algo, "digest algorithm")
        ->check(CLI::IsMember({"md5", "sha1", "sha256"}));
    cmd->add_flag("--no-ao{true},--ao{false}", opts.no_ao,
                  "disable/enable the authentication option (default: enabled)");
    cmd->add_option("--timeout", opts.timeout_s, "give up after this many seconds");
    cmd->add_option("--stats-json", opts.stats_json, "also write the stats JSON here");
}

void emit_stats(const nlohmann::json& stats, const std::string& path) {
    std::cout << stats.dump(2) << "\n";
    if (!path.empty()) {
        std::ofstream out(path);
        out << stats.dump(2) << "\n";
    }
}

// exit code 3 on any key problem, per the documented contract
std::string load_key_or_exit(const std::string& path) {
    if (path.empty()) {
        std::cerr << "error: AO is enabled but no --key-file was given\n";
        std::exit(2);
    }
    try {
        return load_key(path);
    } catch (const KeyFileError& e) {
        std::cerr << "key error: " << e.what() << "\n";
        std::exit(3);
    }
}

Ipv4 source_address_for(const PeerKey& peer) {
    // route lookup via a connected UDP socket; tells us which local address
    // the peer will see as the pseudo-header source
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw IoError("socket");
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(peer.port);
    std::memcpy(&sa.sin_addr, peer.addr.octets.data(), 4);
    Ipv4 local{};
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0) {
        sockaddr_in me{};
        socklen_t len = sizeof me;
        if (getsockname(fd, reinterpret_cast<sockaddr*>(&me), &len) == 0)
            std::memcpy(local.octets.data(), &me.sin_addr, 4);
    }
    ::close(fd);
    return local;
}

int cmd_send(const CommonOpts& common, const std::string& peer_str,
             const std::string& identity, const std::string& file) {
    PeerKey peer = parse_peer_key(peer_str);

    ConnectionConfig cfg;
    cfg.ao.enabled = !common.no_ao;
    cfg.ao.algorithm = *hash_alg_from_name(common.algo);
    if (cfg.ao.enabled) cfg.ao.password = load_key_or_exit(common.key_file);
    cfg.peer_addr = peer.addr;
    cfg.local_addr = source_address_for(peer);

    std::ifstream in(file, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot read " << file << "\n";
        return 1;
    }
    std::vector<uint8_t> payload{std::istreambuf_iterator<char>(in),
                                 std::istreambuf_iterator<char>()};

    Endpoint ep = Endpoint::bind("0.0.0.0", 0);
    uint64_t start = now_us();
    std::vector<std::vector<uint8_t>> burst;
    auto conn = Connection::open(cfg, identity, start, burst);
    for (auto& dgram : burst) ep.send(peer, dgram);

    for (std::size_t off = 0; off < payload.size(); off += kMessageBytes) {
        std::size_t len = std::min(kMessageBytes, payload.size() - off);
        conn->send_message(
            std::vector<uint8_t>(payload.begin() + off, payload.begin() + off + len),
            true);
    }
    if (payload.empty()) conn->send_message({}, true);

    uint64_t deadline = start + static_cast<uint64_t>(common.timeout_s * 1e6);
    bool closed = false;
    uint64_t close_at = 0;
    while (true) {
        uint64_t t = now_us();
        if (t > deadline) {
            std::cerr << "error: transfer timed out\n";
            return 1;
        }
        if (auto r = ep.poll(1)) {
            if (r->first == peer)
                for (auto& resp : conn->on_datagram(r->second, t)) ep.send(peer, resp);
        }
        for (auto& dgram : conn->tick(t)) ep.send(peer, dgram);
        if (!closed && conn->phase() == Phase::Established && conn->all_sent_and_acked()) {
            for (auto& dgram : conn->close(t)) ep.send(peer, dgram);
            closed = true;
            close_at = t;
        }
        if (closed && t - close_at > 200000) break;  // linger for stragglers
    }

    uint64_t elapsed = now_us() - start;
    nlohmann::json stats{
        {"schema", 1},
        {"command", "send"},
        {"bytes", payload.size()},
        {"packets", conn->stats().sent_data},
        {"retransmitted", conn->stats().retransmitted},
        {"dropped_auth", conn->stats().dropped_auth},
        {"elapsed_us", elapsed},
        {"sha256", sha256_hex(payload)},
    };
    emit_stats(stats, common.stats_json);
    return 0;
}

int cmd_recv(const CommonOpts& common, const std::string& listen_str,
             bool require_identity, const std::string& allowlist_file,
             const std::string& output) {
    PeerKey listen = parse_peer_key(listen_str);

    ConnectionConfig base;
    base.ao.enabled = !common.no_ao;
    base.ao.algorithm = *hash_alg_from_name(common.algo);
    if (base.ao.enabled) base.ao.password = load_key_or_exit(common.key_file);
    base.local_addr = listen.addr;

    GuardPolicy policy;
    if (!allowlist_file.empty()) {
        policy.mode = GuardMode::Allowlist;
        policy.allowlist = load_allowlist(allowlist_file);
    }

    std::optional<Endpoint> ep;
    try {
        ep = Endpoint::bind(listen.addr.to_string(), listen.port);
    } catch (const BindError& e) {
        std::cerr << "bind error: " << e.what() << "\n";
        return 1;
    }

    Listener listener(base, std::move(policy), require_identity);
    std::map<uint32_t, PeerKey> socket_peer;
    std::vector<uint8_t> received;

    uint64_t start = now_us();
    uint64_t deadline = common.timeout_s > 0
                            ? start + static_cast<uint64_t>(common.timeout_s * 1e6)
                            : UINT64_MAX;
    uint64_t logged_auth_drops = 0;
    PeerKey last_peer{};

    while (true) {
        uint64_t t = now_us();
        if (t > deadline) {
            std::cerr << "error: receive timed out\n";
            return 1;
        }
        if (auto r = ep->poll(1)) {
            last_peer = r->first;
            for (auto& resp : listener.on_datagram(r->first, r->second, t))
                ep->send(r->first, resp);
        }
        for (auto& [peer, dgram] : listener.tick(t)) ep->send(peer, dgram);

        auto* conn = listener.sole_connection();
        if (conn) {
            for (auto& msg : conn->take_delivered())
                received.insert(received.end(), msg.bytes.begin(), msg.bytes.end());

            uint64_t drops = conn->stats().dropped_auth + listener.stats().auth_drops;
            if (drops > logged_auth_drops) {
                // never log key material, only the peer, count, and reason
                std::cerr << "auth-drop peer=" << last_peer.to_string()
                          << " total=" << drops << " reason=digest-mismatch\n";
                logged_auth_drops = drops;
            }
            if (conn->shutdown_received()) break;
        }
    }

    std::ofstream out(output, std::ios::binary);
    if (!out) {
        std::cerr << "error: cannot write " << output << "\n";
        return 1;
    }
    out.write(reinterpret_cast<const char*>(received.data()),
              static_cast<std::streamsize>(received.size()));
    out.close();

    auto* conn = listener.sole_connection();
    nlohmann::json stats{
        {"schema", 1},
        {"command", "recv"},
        {"bytes", received.size()},
        {"accepted", conn ? conn->stats().accepted : 0},
        {"dropped_auth", conn ? conn->stats().dropped_auth : 0},
        {"dropped_malformed", conn ? conn->stats().dropped_malformed : 0},
        {"duplicates", conn ? conn->stats().duplicates : 0},
        {"guard_rejected", listener.stats().guard_rejected},
        {"guard_accepted", listener.stats().guard_accepted},
        {"elapsed_us", now_us() - start},
        {"sha256", sha256_hex(received)},
    };
    emit_stats(stats, common.stats_json);
    return 0;
}

int cmd_simulate(const std::string& scenario_file, const std::string& stats_json) {
    Scenario scenario;
    try {
        scenario = Scenario::load(scenario_file);
    } catch (const ScenarioError& e) {
        std::cerr << "scenario error: " << e.what() << "\n";
        return 2;
    }
    TrialReport report = run_trial(scenario);
    std::cout << report.to_json() << "\n";
    if (!stats_json.empty()) {
        std::ofstream out(stats_json);
        out << report.to_json() << "\n";
    }
    std::string why;
    if (!check_expectations(scenario, report, &why)) {
        std::cerr << "expectation failed: " << why << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"udt-armor: authenticated UDT-style transfer over UDP"};
    app.require_subcommand(1);

    CommonOpts send_common, recv_common;
    std::string peer, identity = "anonymous", file;
    auto* send = app.add_subcommand("send", "send a file to a receiver");
    send->add_option("--peer", peer, "receiver address:port")->required();
    send->add_option("--identity", identity, "principal for the first-packet identity");
    send->add_option("file", file, "file to send")->required();
    add_common(send, send_common);

    std::string listen, allowlist_file, output = "received.bin";
    bool require_identity = false;
    auto* recv = app.add_subcommand("recv", "receive one file");
    recv->add_option("--listen", listen, "bind address:port")->required();
    recv->add_flag("--require-identity", require_identity,
                   "reject connection attempts without a valid identity packet");
    recv->add_option("--allowlist", allowlist_file, "file of permitted principals");
    recv->add_option("--output", output, "where to write the received file");
    add_common(recv, recv_common);

    std::string scenario_file, sim_stats;
    auto* sim = app.add_subcommand("simulate", "run a netsim scenario");
    sim->add_option("--scenario", scenario_file, "scenario file")->required();
    sim->add_option("--stats-json", sim_stats, "also write the report JSON here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (send->parsed()) return cmd_send(send_common, peer, identity, file);
        if (recv->parsed())
            return cmd_recv(recv_common, listen, require_identity, allowlist_file, output);
        if (sim->parsed()) return cmd_simulate(scenario_file, sim_stats);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
