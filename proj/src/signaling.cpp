#include "snow/signaling.hpp"

#include <json.hpp>

namespace snow {

using nlohmann::json;

const char* to_string(SignalKind k) {
    switch (k) {
        case SignalKind::reg: return "register";
        case SignalKind::offer: return "offer";
        case SignalKind::answer: return "answer";
        case SignalKind::ice_candidate: return "ice";
        case SignalKind::bye: return "bye";
        case SignalKind::error: return "error";
    }
    return "?";
}

namespace {

std::optional<SignalKind> kind_from_string(const std::string& s) {
    if (s == "register") return SignalKind::reg;
    if (s == "offer") return SignalKind::offer;
    if (s == "answer") return SignalKind::answer;
    if (s == "ice") return SignalKind::ice_candidate;
    if (s == "bye") return SignalKind::bye;
    if (s == "error") return SignalKind::error;
    return std::nullopt;
}

json sdp_to_json(const SessionDescription& sdp) {
    json media = json::array();
    for (const auto& m : sdp.media_lines) {
        media.push_back(json{{"kind", to_string(m.kind)},
                             {"track", m.track.value},
                             {"origin", m.origin.value}});
    }
    json attrs = json::object();
    for (const auto& [k, v] : sdp.attributes) attrs[k] = v;
    return json{{"kind", sdp.kind == SdpKind::offer ? "offer" : "answer"},
                {"from", sdp.from.value},
                {"to", sdp.to.value},
                {"media", media},
                {"attributes", attrs}};
}

SessionDescription sdp_from_json(const json& j) {
    SessionDescription sdp;
    sdp.kind = j.at("kind").get<std::string>() == "offer" ? SdpKind::offer : SdpKind::answer;
    sdp.from = PeerId{j.at("from").get<std::string>()};
    sdp.to = PeerId{j.at("to").get<std::string>()};
    for (const auto& m : j.at("media")) {
        MediaLine line;
        line.kind = m.at("kind").get<std::string>() == "audio" ? TrackKind::audio : TrackKind::video;
        line.track = TrackId{m.at("track").get<std::string>()};
        line.origin = PeerId{m.at("origin").get<std::string>()};
        sdp.media_lines.push_back(line);
    }
    for (const auto& [k, v] : j.at("attributes").items()) {
        sdp.attributes[k] = v.get<std::string>();
    }
    return sdp;
}

}  // namespace

std::string encode_signal(const SignalMessage& msg) {
    json j;
    j["type"] = to_string(msg.kind);
    switch (msg.kind) {
        case SignalKind::reg:
            j["room"] = msg.room.value;
            j["peer"] = msg.from.value;
            j["seq"] = msg.seq;
            break;
        case SignalKind::offer:
        case SignalKind::answer:
            j["room"] = msg.room.value;
            j["from"] = msg.from.value;
            j["to"] = msg.to.value;
            j["seq"] = msg.seq;
            j["sdp"] = sdp_to_json(*msg.sdp());
            break;
        case SignalKind::ice_candidate: {
            j["room"] = msg.room.value;
            j["from"] = msg.from.value;
            j["to"] = msg.to.value;
            j["seq"] = msg.seq;
            const Candidate* c = msg.candidate();
            j["candidate"] = json{{"kind", c ? c->kind : ""}, {"address", c ? c->address : ""}};
            break;
        }
        case SignalKind::bye:
            j["room"] = msg.room.value;
            j["from"] = msg.from.value;
            j["to"] = msg.to.value;
            j["seq"] = msg.seq;
            j["reason"] = std::holds_alternative<std::string>(msg.payload)
                              ? std::get<std::string>(msg.payload)
                              : std::string{};
            break;
        case SignalKind::error: {
            const ErrorInfo* e = msg.error();
            j["code"] = e ? e->code : 0;
            j["detail"] = e ? e->detail : "";
            break;
        }
    }
    if (msg.arrival_stamp_ms) j["ts"] = *msg.arrival_stamp_ms;
    return j.dump();
}

DecodeResult decode_signal(const std::string& line) {
    DecodeResult res;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
        // Re-parse with exceptions to recover the byte offset.
        std::size_t offset = 0;
        std::string what = "invalid JSON";
        try {
            auto reparsed = json::parse(line);
            (void)reparsed;
        } catch (const json::parse_error& e) {
            offset = e.byte;
            what = e.what();
        }
        res.error = ParseError{offset, what};
        return res;
    }
    try {
        if (!j.is_object() || !j.contains("type")) {
            res.error = ParseError{0, "missing required field: type"};
            return res;
        }
        auto kind = kind_from_string(j.at("type").get<std::string>());
        if (!kind) {
            res.error = ParseError{0, "unknown message type: " + j.at("type").dump()};
            return res;
        }
        SignalMessage msg;
        msg.kind = *kind;
        switch (*kind) {
            case SignalKind::reg:
                msg.room = RoomId{j.at("room").get<std::string>()};
                msg.from = PeerId{j.at("peer").get<std::string>()};
                msg.seq = j.at("seq").get<std::uint64_t>();
                break;
            case SignalKind::offer:
            case SignalKind::answer:
                msg.room = RoomId{j.at("room").get<std::string>()};
                msg.from = PeerId{j.at("from").get<std::string>()};
                msg.to = PeerId{j.at("to").get<std::string>()};
                msg.seq = j.at("seq").get<std::uint64_t>();
                msg.payload = sdp_from_json(j.at("sdp"));
                break;
            case SignalKind::ice_candidate: {
                msg.room = RoomId{j.at("room").get<std::string>()};
                msg.from = PeerId{j.at("from").get<std::string>()};
                msg.to = PeerId{j.at("to").get<std::string>()};
                msg.seq = j.at("seq").get<std::uint64_t>();
                const json& c = j.at("candidate");
                msg.payload = Candidate{c.at("kind").get<std::string>(), c.at("address").get<std::string>()};
                break;
            }
            case SignalKind::bye:
                msg.room = RoomId{j.at("room").get<std::string>()};
                msg.from = PeerId{j.at("from").get<std::string>()};
                msg.to = PeerId{j.at("to").get<std::string>()};
                msg.seq = j.at("seq").get<std::uint64_t>();
                msg.payload = j.at("reason").get<std::string>();
                break;
            case SignalKind::error:
                msg.payload = ErrorInfo{j.at("code").get<int>(), j.at("detail").get<std::string>()};
                break;
        }
        if (j.contains("ts")) msg.arrival_stamp_ms = j.at("ts").get<double>();
        res.message = std::move(msg);
    } catch (const json::exception& e) {
        res.error = ParseError{0, e.what()};
    }
    return res;
}

}  // namespace snow
