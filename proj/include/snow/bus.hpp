#pragma once

#include <functional>
#include <map>
#include <string>

#include "snow/net.hpp"
#include "snow/signaling.hpp"
#include "snow/sim.hpp"

namespace snow {

/// In-simulation signaling bus: a modeled rendezvous server on the LAN.
/// Message transit pays both endpoints' access latencies; delivery per
/// sender is FIFO end-to-end. The bus never touches media.
class InSimBus {
public:
    using Handler = std::function<void(const SignalMessage&)>;

    InSimBus(SimEngine& engine, Network& network) : engine_(engine), network_(network) {
        if (!network_.has_peer(server_id_)) {
            PeerProfile server;
            server.peer = server_id_;
            server.link = LinkModel{0.0, 0.0, 0.0, 1e9};
            network_.add_peer(server);
        }
    }

    /// Registration is itself a message to the server; the ack is implicit
    /// (an error comes back on duplicates).
    void register_peer(const RoomId& room, const PeerId& peer, Handler handler) {
        handlers_[peer] = std::move(handler);
        SignalMessage msg;
        msg.kind = SignalKind::reg;
        msg.room = room;
        msg.from = peer;
        msg.seq = next_seq(peer, room);
        network_.send_signal(peer, server_id_, wire_size(msg), [this, msg] {
            Room& r = rooms_[msg.room];
            r.id = msg.room;
            if (r.is_member(msg.from)) {
                send_error_to(msg.from, kErrDuplicateRegistration,
                              "peer already registered in room " + msg.room.value);
                return;
            }
            r.members.insert(msg.from);
            bytes_relayed_ += wire_size(msg);
            messages_relayed_++;
        });
    }

    /// Relays a directed message. Validation happens at the server: unknown
    /// recipients and unregistered senders produce an error message back.
    void send(SignalMessage msg) {
        msg.seq = next_seq(msg.from, msg.room);
        route(msg);
    }

    /// Sends with a caller-chosen seq (tests use this to violate the
    /// monotone-seq contract on purpose).
    void send_raw(const SignalMessage& msg) { route(msg); }

    std::uint64_t next_seq(const PeerId& sender, const RoomId& room) {
        return ++seq_[{sender, room}];
    }

    std::size_t bytes_relayed() const { return bytes_relayed_; }
    std::size_t messages_relayed() const { return messages_relayed_; }

private:
    void route(const SignalMessage& msg) {
        network_.send_signal(msg.from, server_id_, wire_size(msg), [this, msg] {
            auto room_it = rooms_.find(msg.room);
            if (room_it == rooms_.end() || !room_it->second.is_member(msg.from)) {
                send_error_to(msg.from, kErrNotRegistered,
                              "sender not registered in room " + msg.room.value);
                return;
            }
            Room& room = room_it->second;
            if (!room.is_member(msg.to)) {
                send_error_to(msg.from, kErrUnknownRecipient,
                              "no such peer in room: " + msg.to.value);
                return;
            }
            auto& last = room.last_seq[msg.from];
            if (msg.seq <= last) {
                send_error_to(msg.from, kErrSeqRegression, "non-increasing seq from " + msg.from.value);
                return;
            }
            last = msg.seq;

            SignalMessage stamped = msg;
            stamped.arrival_stamp_ms = engine_.now();
            bytes_relayed_ += wire_size(msg);
            messages_relayed_++;
            deliver(stamped.to, stamped);
        });
    }

    void deliver(const PeerId& to, const SignalMessage& msg) {
        network_.send_signal(server_id_, to, wire_size(msg), [this, to, msg] {
            auto it = handlers_.find(to);
            if (it != handlers_.end()) it->second(msg);
        });
    }

    void send_error_to(const PeerId& peer, int code, const std::string& detail) {
        SignalMessage err;
        err.kind = SignalKind::error;
        err.payload = ErrorInfo{code, detail};
        deliver(peer, err);
    }

    static std::size_t wire_size(const SignalMessage& msg) { return encode_signal(msg).size() + 1; }

    SimEngine& engine_;
    Network& network_;
    PeerId server_id_{"__signal-server"};
    std::map<PeerId, Handler> handlers_;
    std::map<RoomId, Room> rooms_;
    std::map<std::pair<PeerId, RoomId>, std::uint64_t> seq_;
    std::size_t bytes_relayed_ = 0;
    std::size_t messages_relayed_ = 0;
};

}  // namespace snow
