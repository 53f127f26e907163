#include "snow/server.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace snow {

namespace {

constexpr std::size_t kMaxLineBytes = 64 * 1024;

void set_nonblocking(int fd) {
    int flags = fcntl(fd, F_GETFL, 0);
    fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

}  // namespace

SignalingServer::SignalingServer(Options opts) : opts_(std::move(opts)) {}

SignalingServer::~SignalingServer() {
    stop();
    for (auto& [fd, c] : clients_) ::close(fd);
    if (listen_fd_ >= 0) ::close(listen_fd_);
    if (log_fd_ >= 0) ::close(log_fd_);
}

std::uint16_t SignalingServer::start() {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("socket: " + std::string(std::strerror(errno)));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(opts_.port);
    if (::inet_pton(AF_INET, opts_.listen_addr.c_str(), &addr.sin_addr) != 1) {
        throw std::runtime_error("bad listen address: " + opts_.listen_addr);
    }
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        throw std::runtime_error("bind: " + std::string(std::strerror(errno)));
    }
    if (::listen(listen_fd_, 128) < 0) {
        throw std::runtime_error("listen: " + std::string(std::strerror(errno)));
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    set_nonblocking(listen_fd_);

    if (!opts_.log_path.empty()) {
        log_fd_ = ::open(opts_.log_path.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
    }
    running_ = true;
    log("listening on " + opts_.listen_addr + ":" + std::to_string(port_));
    return port_;
}

void SignalingServer::run() {
    while (running_) {
        std::vector<pollfd> fds;
        fds.push_back({listen_fd_, POLLIN, 0});
        for (auto& [fd, c] : clients_) {
            short ev = POLLIN;
            if (!c.outbuf.empty()) ev |= POLLOUT;
            fds.push_back({fd, ev, 0});
        }
        int n = ::poll(fds.data(), fds.size(), 100);
        if (n < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (fds[0].revents & POLLIN) {
            while (true) {
                int cfd = ::accept(listen_fd_, nullptr, nullptr);
                if (cfd < 0) break;
                set_nonblocking(cfd);
                int one = 1;
                ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                clients_[cfd] = Client{cfd, {}, {}, {}, {}, false, false};
            }
        }
        std::vector<int> dead;
        for (std::size_t i = 1; i < fds.size(); ++i) {
            int fd = fds[i].fd;
            auto it = clients_.find(fd);
            if (it == clients_.end()) continue;
            Client& c = it->second;
            if (fds[i].revents & (POLLHUP | POLLERR)) {
                dead.push_back(fd);
                continue;
            }
            if (fds[i].revents & POLLIN) {
                char buf[8192];
                while (true) {
                    ssize_t r = ::recv(fd, buf, sizeof(buf), 0);
                    if (r > 0) {
                        c.inbuf.append(buf, static_cast<std::size_t>(r));
                        if (c.inbuf.size() > kMaxLineBytes) {
                            // A frame this size is hostile; drop the peer.
                            send_error(c, kErrMalformed, "frame too large");
                            c.drop = true;
                            break;
                        }
                    } else if (r == 0) {
                        dead.push_back(fd);
                        break;
                    } else {
                        break;  // EAGAIN
                    }
                }
                std::size_t pos;
                while (!c.drop && (pos = c.inbuf.find('\n')) != std::string::npos) {
                    std::string line = c.inbuf.substr(0, pos);
                    c.inbuf.erase(0, pos + 1);
                    if (!line.empty() && line.back() == '\r') line.pop_back();
                    if (!line.empty()) handle_line(c, line);
                }
            }
            if (!c.outbuf.empty()) {
                ssize_t w = ::send(fd, c.outbuf.data(), c.outbuf.size(), MSG_NOSIGNAL);
                if (w > 0) c.outbuf.erase(0, static_cast<std::size_t>(w));
            }
            if (c.drop && c.outbuf.empty()) dead.push_back(fd);
        }
        for (int fd : dead) disconnect(fd);
    }
}

void SignalingServer::stop() { running_ = false; }

void SignalingServer::handle_line(Client& c, const std::string& line) {
    DecodeResult decoded = decode_signal(line);
    if (!decoded.ok()) {
        // Malformed input gets a structured error; the connection survives.
        send_error(c, kErrMalformed,
                   "parse error at byte " + std::to_string(decoded.error->byte_offset) + ": " +
                       decoded.error->what);
        log("malformed frame from fd=" + std::to_string(c.fd));
        return;
    }
    SignalMessage msg = std::move(*decoded.message);

    if (msg.kind == SignalKind::reg) {
        if (c.registered) {
            send_error(c, kErrDuplicateRegistration, "connection already registered");
            return;
        }
        auto room_it = rooms_.find(msg.room);
        if (room_it == rooms_.end()) {
            if (static_cast<int>(rooms_.size()) >= opts_.max_rooms) {
                send_error(c, kErrRoomLimit, "room limit reached");
                return;
            }
            room_it = rooms_.emplace(msg.room, Room{msg.room, {}, {}, {}}).first;
        }
        Room& room = room_it->second;
        if (room.is_member(msg.from)) {
            send_error(c, kErrDuplicateRegistration,
                       "peer already registered in room " + msg.room.value);
            return;
        }
        room.members.insert(msg.from);
        c.registered = true;
        c.room = msg.room;
        c.peer = msg.from;
        peer_fds_[{msg.room, msg.from}] = c.fd;
        log("register room=" + msg.room.value + " peer=" + msg.from.value);
        return;
    }
    if (msg.kind == SignalKind::error) {
        return;  // clients do not originate errors toward the server
    }

    if (!c.registered || !(msg.room == c.room) || !(msg.from == c.peer)) {
        send_error(c, kErrNotRegistered, "sender not registered in room " + msg.room.value);
        return;
    }
    Room& room = rooms_.at(c.room);
    if (!room.is_member(msg.to)) {
        send_error(c, kErrUnknownRecipient, "no such peer in room: " + msg.to.value);
        return;
    }
    auto& last = room.last_seq[msg.from];
    if (msg.seq <= last) {
        send_error(c, kErrSeqRegression, "non-increasing seq from " + msg.from.value);
        return;
    }
    last = msg.seq;

    auto fd_it = peer_fds_.find({c.room, msg.to});
    if (fd_it == peer_fds_.end()) {
        send_error(c, kErrUnknownRecipient, "peer has no live connection: " + msg.to.value);
        return;
    }
    // Arrival stamp added by the relay; ordering per sender is preserved by
    // the single serialized loop and the TCP byte stream.
    msg.arrival_stamp_ms = static_cast<double>(messages_relayed_);
    messages_relayed_++;
    send_to_client(clients_.at(fd_it->second), msg);
}

void SignalingServer::send_to_client(Client& c, const SignalMessage& msg) {
    std::string wire = encode_signal(msg);
    wire += '\n';
    bytes_relayed_ += wire.size();
    c.outbuf += wire;
}

void SignalingServer::send_error(Client& c, int code, const std::string& detail) {
    SignalMessage err;
    err.kind = SignalKind::error;
    err.payload = ErrorInfo{code, detail};
    send_to_client(c, err);
}

void SignalingServer::disconnect(int fd) {
    auto it = clients_.find(fd);
    if (it == clients_.end()) return;
    Client& c = it->second;
    if (c.registered) {
        auto room_it = rooms_.find(c.room);
        if (room_it != rooms_.end()) {
            room_it->second.members.erase(c.peer);
            room_it->second.last_seq.erase(c.peer);
            if (room_it->second.members.empty()) rooms_.erase(room_it);
        }
        peer_fds_.erase({c.room, c.peer});
        log("disconnect room=" + c.room.value + " peer=" + c.peer.value);
    }
    ::close(fd);
    clients_.erase(it);
}

void SignalingServer::log(const std::string& line) {
    if (log_fd_ < 0) return;
    std::string out = line + "\n";
    [[maybe_unused]] ssize_t w = ::write(log_fd_, out.data(), out.size());
}

}  // namespace snow
