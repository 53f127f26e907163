#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <string>

#include "snow/signaling.hpp"

namespace snow {

/// Standalone signaling server: newline-delimited JSON over TCP, one
/// connection per peer. Rooms rendezvous registered peers; directed
/// messages relay with per-sender FIFO order (a single poll loop serializes
/// every room). The server never carries media.
class SignalingServer {
public:
    struct Options {
        std::string listen_addr = "127.0.0.1";
        std::uint16_t port = 0;  // 0 picks an ephemeral port
        int max_rooms = 256;
        std::string log_path;  // empty disables logging
    };

    explicit SignalingServer(Options opts);
    ~SignalingServer();

    SignalingServer(const SignalingServer&) = delete;
    SignalingServer& operator=(const SignalingServer&) = delete;

    /// Binds and listens; returns the bound port. Throws on socket errors.
    std::uint16_t start();

    /// Serves until stop() is called (from another thread or a handler).
    void run();

    void stop();

    std::uint16_t port() const { return port_; }
    std::size_t messages_relayed() const { return messages_relayed_; }
    std::size_t bytes_relayed() const { return bytes_relayed_; }

private:
    struct Client {
        int fd = -1;
        std::string inbuf;
        std::string outbuf;
        RoomId room;
        PeerId peer;
        bool registered = false;
        bool drop = false;
    };

    void handle_line(Client& c, const std::string& line);
    void send_to_client(Client& c, const SignalMessage& msg);
    void send_error(Client& c, int code, const std::string& detail);
    void disconnect(int fd);
    void log(const std::string& line);

    Options opts_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::map<int, Client> clients_;
    std::map<RoomId, Room> rooms_;
    std::map<std::pair<RoomId, PeerId>, int> peer_fds_;
    std::size_t messages_relayed_ = 0;
    std::size_t bytes_relayed_ = 0;
    int log_fd_ = -1;
};

}  // namespace snow
