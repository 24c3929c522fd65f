#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace udtarmor {

struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TruncatedPacket : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Surfaced, not silently dropped, so callers can count it.
struct UnknownControlType : std::runtime_error {
    explicit UnknownControlType(uint16_t ctype)
        : std::runtime_error("unknown control type 0x" + to_hex(ctype)), ctype(ctype) {}
    uint16_t ctype;

private:
    static std::string to_hex(uint16_t v) {
        static const char* digits = "0123456789abcdef";
        std::string s(4, '0');
        for (int i = 3; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xF];
        return s;
    }
};

struct MalformedTrailer : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TruncatedDatagram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedIdentity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct KeyFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConnectionClosed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BindError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OversizeDatagram : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrialTimeout : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace udtarmor
