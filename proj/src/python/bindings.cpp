#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "udtarmor/auth.hpp"
#include "udtarmor/checksum.hpp"
#include "udtarmor/identity.hpp"
#include "udtarmor/netsim.hpp"
#include "udtarmor/seqnum.hpp"
#include "udtarmor/wire.hpp"

namespace py = pybind11;
using namespace udtarmor;

namespace {

std::vector<uint8_t> to_bytes(const py::bytes& b) {
    std::string s = b;
    return {s.begin(), s.end()};
}

py::bytes from_bytes(const std::vector<uint8_t>& v) {
    return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

HashAlg alg_from_name(const std::string& name) {
    auto alg = hash_alg_from_name(name);
    if (!alg) throw py::value_error("unknown algorithm: " + name);
    return *alg;
}

KeyMaterial key_of(const std::string& password, const py::bytes& connection_key) {
    KeyMaterial km;
    km.password = password;
    std::string ck = connection_key;
    if (ck.size() != km.connection_key.size())
        throw py::value_error("connection_key must be 16 bytes");
    std::copy(ck.begin(), ck.end(), km.connection_key.begin());
    return km;
}

PseudoHeader pseudo_of(const std::string& src, const std::string& dst, uint16_t udp_length) {
    return build_pseudo_header(Ipv4::parse(src), Ipv4::parse(dst), udp_length);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "udt-armor core: wire codec, checksum, AO signing, identity, netsim";

    m.def("internet_checksum", [](const py::bytes& data) {
        return internet_checksum(to_bytes(data));
    });

    m.def(
        "seal_datagram",
        [](const py::bytes& packet, const std::string& algo, const std::string& password,
           const py::bytes& connection_key, const std::string& src, const std::string& dst) {
            auto pkt = to_bytes(packet);
            auto dgram = seal_datagram(alg_from_name(algo), Ipv4::parse(src),
                                       Ipv4::parse(dst), pkt,
                                       key_of(password, connection_key));
            return from_bytes(dgram);
        },
        py::arg("packet"), py::arg("algo"), py::arg("password"), py::arg("connection_key"),
        py::arg("src"), py::arg("dst"));

    m.def(
        "open_datagram",
        [](const py::bytes& datagram, const std::string& algo, const std::string& password,
           const py::bytes& connection_key, const std::string& src, const std::string& dst)
            -> std::optional<py::bytes> {
            auto dgram = to_bytes(datagram);
            std::vector<uint8_t> inner;
            auto outcome = open_datagram(alg_from_name(algo), Ipv4::parse(src),
                                         Ipv4::parse(dst), dgram,
                                         key_of(password, connection_key), &inner);
            if (!outcome.accept) return std::nullopt;
            return from_bytes(inner);
        },
        py::arg("datagram"), py::arg("algo"), py::arg("password"), py::arg("connection_key"),
        py::arg("src"), py::arg("dst"));

    m.def("digest_length",
          [](const std::string& algo) { return digest_length(alg_from_name(algo)); });

    m.def("next_sequence", &seq_next, py::arg("seq"));
    m.def("sequence_offset", &seq_offset, py::arg("from_seq"), py::arg("to_seq"));

    m.def(
        "encode_data_packet",
        [](uint32_t sequence, const std::string& boundary, bool in_order,
           uint32_t message_number, uint32_t timestamp, uint32_t dest_socket_id,
           const py::bytes& payload) {
            DataPacket pkt;
            pkt.header.sequence = sequence;
            if (boundary == "solo") pkt.header.boundary = Boundary::Solo;
            else if (boundary == "first") pkt.header.boundary = Boundary::First;
            else if (boundary == "last") pkt.header.boundary = Boundary::Last;
            else if (boundary == "middle") pkt.header.boundary = Boundary::Middle;
            else throw py::value_error("boundary must be solo/first/last/middle");
            pkt.header.in_order = in_order;
            pkt.header.message_number = message_number;
            pkt.header.timestamp_us = timestamp;
            pkt.header.dest_socket_id = dest_socket_id;
            pkt.payload = to_bytes(payload);
            return from_bytes(encode_packet(Packet{pkt}));
        },
        py::arg("sequence"), py::arg("boundary"), py::arg("in_order"),
        py::arg("message_number"), py::arg("timestamp"), py::arg("dest_socket_id"),
        py::arg("payload"));

    m.def("decode_packet_kind", [](const py::bytes& raw) {
        Packet pkt = decode_packet(to_bytes(raw));
        return std::holds_alternative<DataPacket>(pkt) ? "data" : "control";
    });

    m.def(
        "identity_blob",
        [](const std::string& principal, uint64_t issued_at_ms, const py::bytes& nonce,
           const std::string& algo, const std::string& password) {
            IdentityRecord rec;
            rec.principal = principal;
            rec.issued_at_ms = issued_at_ms;
            std::string n = nonce;
            if (n.size() != rec.nonce.size()) throw py::value_error("nonce must be 16 bytes");
            std::copy(n.begin(), n.end(), rec.nonce.begin());
            rec.algorithm = alg_from_name(algo);
            auto input = identity_signing_bytes(rec);
            input.insert(input.end(), password.begin(), password.end());
            rec.signature = compute_ao_digest(rec.algorithm, input);
            return from_bytes(serialize_identity(rec));
        },
        py::arg("principal"), py::arg("issued_at_ms"), py::arg("nonce"), py::arg("algo"),
        py::arg("password"));

    m.def("run_scenario", [](const std::string& text) {
        Scenario scenario = Scenario::parse(text);
        TrialReport report = run_trial(scenario);
        std::string why;
        bool ok = check_expectations(scenario, report, &why);
        return py::make_tuple(ok, report.to_json(), why);
    });

    m.def("password_valid", &password_valid, py::arg("password"));

    m.def("pseudo_header_bytes", [](const std::string& src, const std::string& dst,
                                    uint16_t udp_length) {
        auto bytes = pseudo_of(src, dst, udp_length).serialize();
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    });
}
