#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>

#include "snow/ids.hpp"
#include "snow/sdp.hpp"

namespace snow {

enum class SignalKind { reg, offer, answer, ice_candidate, bye, error };

const char* to_string(SignalKind k);

struct Candidate {
    std::string kind;     // host | srflx | relay
    std::string address;  // opaque, e.g. "sim://peer/0"
    bool operator==(const Candidate&) const = default;
};

struct ErrorInfo {
    int code = 0;
    std::string detail;
    bool operator==(const ErrorInfo&) const = default;
};

// Error codes used on the wire and by the in-sim bus.
inline constexpr int kErrMalformed = 400;
inline constexpr int kErrUnknownRecipient = 404;
inline constexpr int kErrDuplicateRegistration = 409;
inline constexpr int kErrNotRegistered = 428;
inline constexpr int kErrSeqRegression = 422;
inline constexpr int kErrRoomLimit = 429;

/// One signaling envelope. `seq` is assigned by the sender and strictly
/// increases per (sender, room); the relay adds an arrival stamp but never
/// reorders.
struct SignalMessage {
    std::uint64_t seq = 0;
    RoomId room;
    SignalKind kind = SignalKind::reg;
    PeerId from;
    PeerId to;  // empty for register / error
    std::variant<std::monostate, SessionDescription, Candidate, std::string, ErrorInfo> payload;
    std::optional<double> arrival_stamp_ms;

    const SessionDescription* sdp() const { return std::get_if<SessionDescription>(&payload); }
    const Candidate* candidate() const { return std::get_if<Candidate>(&payload); }
    const ErrorInfo* error() const { return std::get_if<ErrorInfo>(&payload); }

    bool operator==(const SignalMessage&) const = default;
};

struct ParseError {
    std::size_t byte_offset = 0;
    std::string what;
};

struct DecodeResult {
    std::optional<SignalMessage> message;
    std::optional<ParseError> error;
    bool ok() const { return message.has_value(); }
};

/// Wire codec: one newline-delimited JSON object per message, required
/// field `type`. decode(encode(m)) == m for every well-formed message;
/// unknown SDP attributes survive the round trip verbatim.
std::string encode_signal(const SignalMessage& msg);
DecodeResult decode_signal(const std::string& line);

/// Rendezvous room: members and per-member FIFO mailboxes. Shared by the
/// in-simulation bus and the standalone server.
struct Room {
    RoomId id;
    std::set<PeerId> members;
    std::map<PeerId, std::deque<SignalMessage>> mailboxes;
    std::map<PeerId, std::uint64_t> last_seq;

    bool is_member(const PeerId& p) const { return members.count(p) > 0; }
};

}  // namespace snow
