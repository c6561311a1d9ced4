#include "svb/tcp.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "svb/errors.hpp"
#include "svb/protocol.hpp"

namespace svb {

namespace {

constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

[[noreturn]] void throw_errno(const std::string& what, std::uint16_t peer = 0xffff) {
    throw TransportError(what + ": " + std::strerror(errno), peer);
}

sockaddr_in make_addr(const PeerAddress& peer) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(peer.port);
    if (inet_pton(AF_INET, peer.host.c_str(), &addr.sin_addr) != 1) {
        throw TransportError("bad host '" + peer.host + "'", peer.worker_id);
    }
    return addr;
}

void write_all(int fd, const std::uint8_t* data, std::size_t len, std::uint16_t peer) {
    while (len > 0) {
        ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("send to peer " + std::to_string(peer) + " failed", peer);
        }
        data += n;
        len -= static_cast<std::size_t>(n);
    }
}

// true on success, false on clean EOF at a frame boundary.
bool read_all(int fd, std::uint8_t* data, std::size_t len) {
    std::size_t got = 0;
    while (got < len) {
        ssize_t n = ::recv(fd, data + got, len - got, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string("recv failed: ") + std::strerror(errno));
        }
        if (n == 0) {
            if (got == 0) return false;
            throw WireError(WireFault::truncated, "connection closed mid-frame", got);
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

void send_frame(int fd, const std::vector<std::uint8_t>& payload, std::uint16_t peer) {
    std::uint8_t prefix[4];
    const std::uint32_t len = static_cast<std::uint32_t>(payload.size());
    for (int i = 0; i < 4; ++i) prefix[i] = static_cast<std::uint8_t>(len >> (8 * i));
    write_all(fd, prefix, 4, peer);
    write_all(fd, payload.data(), payload.size(), peer);
}

// Empty vector on clean EOF.
std::vector<std::uint8_t> recv_frame(int fd) {
    std::uint8_t prefix[4];
    if (!read_all(fd, prefix, 4)) return {};
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(prefix[i]) << (8 * i);
    if (len == 0 || len > kMaxFrameBytes) {
        throw WireError(WireFault::truncated, "implausible frame length " + std::to_string(len));
    }
    std::vector<std::uint8_t> payload(len);
    if (!read_all(fd, payload.data(), len)) {
        throw WireError(WireFault::truncated, "connection closed before frame body");
    }
    return payload;
}

int listen_on(const PeerAddress& self, int backlog) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw_errno("socket");
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(self);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        throw_errno("bind " + self.host + ":" + std::to_string(self.port));
    }
    if (::listen(fd, backlog) != 0) {
        ::close(fd);
        throw_errno("listen");
    }
    return fd;
}

int connect_with_retry(const PeerAddress& peer, std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    sockaddr_in addr = make_addr(peer);
    for (;;) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw_errno("socket");
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return fd;
        }
        ::close(fd);
        if (std::chrono::steady_clock::now() >= deadline) {
            throw TransportError("cannot connect to peer " + std::to_string(peer.worker_id) +
                                     " at " + peer.host + ":" + std::to_string(peer.port),
                                 peer.worker_id);
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

// Identified socket set with one reader thread per connection; shared by the
// mesh and star arrangements.
class TcpEndpoint final : public Transport {
public:
    TcpEndpoint(std::uint16_t self_id, std::uint16_t num_endpoints)
        : self_id_(self_id), num_endpoints_(num_endpoints) {}

    ~TcpEndpoint() override {
        for (auto& [peer, conn] : connections_) {
            ::shutdown(conn.fd, SHUT_RDWR);
        }
        for (auto& [peer, conn] : connections_) {
            if (conn.reader.joinable()) conn.reader.join();
            ::close(conn.fd);
        }
    }

    void adopt_connection(std::uint16_t peer, int fd) {
        auto [it, inserted] = connections_.try_emplace(peer);
        if (!inserted) {
            ::close(fd);
            throw TransportError("duplicate connection from peer " + std::to_string(peer), peer);
        }
        it->second.fd = fd;
        it->second.reader = std::thread([this, peer, fd] { reader_loop(peer, fd); });
    }

    std::uint16_t self_id() const override { return self_id_; }
    std::uint16_t num_endpoints() const override { return num_endpoints_; }

    void broadcast(const Message& msg) override {
        const std::vector<std::uint8_t> frame = encode(msg);
        for (auto& [peer, conn] : connections_) {
            std::lock_guard lock(conn.write_mu);
            send_frame(conn.fd, frame, peer);
            counters_.add_sent(frame.size());
        }
    }

    void send(std::uint16_t dest, const Message& msg) override {
        auto it = connections_.find(dest);
        if (it == connections_.end()) {
            throw TransportError("no connection to peer " + std::to_string(dest), dest);
        }
        const std::vector<std::uint8_t> frame = encode(msg);
        std::lock_guard lock(it->second.write_mu);
        send_frame(it->second.fd, frame, dest);
        counters_.add_sent(frame.size());
    }

    std::vector<Message> poll() override {
        std::deque<Arrival> batch;
        {
            std::lock_guard lock(inbox_mu_);
            batch.swap(inbox_);
        }
        std::vector<Message> out;
        for (Arrival& a : batch) {
            if (a.error) std::rethrow_exception(a.error);
            counters_.add_received(a.frame_bytes);
            out.push_back(std::move(a.msg));
        }
        return out;
    }

    ByteCounters counters() const override { return counters_.snapshot(); }

private:
    struct Connection {
        int fd = -1;
        std::mutex write_mu;
        std::thread reader;
    };

    struct Arrival {
        Message msg;
        std::size_t frame_bytes = 0;
        std::exception_ptr error;
    };

    void reader_loop(std::uint16_t peer, int fd) {
        bool saw_shutdown = false;
        try {
            for (;;) {
                std::vector<std::uint8_t> frame = recv_frame(fd);
                if (frame.empty()) {
                    // EOF is clean only after the peer's protocol shutdown.
                    if (!saw_shutdown) {
                        throw TransportError(
                            "peer " + std::to_string(peer) + " disconnected before shutdown",
                            peer);
                    }
                    return;
                }
                Arrival a;
                a.frame_bytes = frame.size();
                try {
                    a.msg = decode(frame);
                } catch (const WireError& e) {
                    throw TransportError("decode failure from peer " + std::to_string(peer) +
                                             " at offset " + std::to_string(e.offset()) + ": " +
                                             e.what(),
                                         peer);
                }
                if (const auto* ctrl = std::get_if<ControlMessage>(&a.msg)) {
                    if (ctrl->code == kControlShutdown) saw_shutdown = true;
                }
                std::lock_guard lock(inbox_mu_);
                inbox_.push_back(std::move(a));
            }
        } catch (...) {
            Arrival a;
            a.error = std::current_exception();
            std::lock_guard lock(inbox_mu_);
            inbox_.push_back(std::move(a));
        }
    }

    std::uint16_t self_id_;
    std::uint16_t num_endpoints_;
    std::map<std::uint16_t, Connection> connections_;
    AtomicCounters counters_;
    std::mutex inbox_mu_;
    std::deque<Arrival> inbox_;
};

void send_hello(int fd, std::uint16_t self_id) {
    send_frame(fd, encode(Message(ControlMessage{self_id, 0, kControlHello})), 0xffff);
}

std::uint16_t expect_hello(int fd) {
    std::vector<std::uint8_t> frame = recv_frame(fd);
    if (frame.empty()) {
        throw TransportError("peer closed before handshake");
    }
    Message msg = decode(frame);
    const auto* hello = std::get_if<ControlMessage>(&msg);
    if (!hello || hello->code != kControlHello) {
        throw TransportError("expected hello handshake");
    }
    return hello->sender_id;
}

int accept_with_timeout(int listen_fd, std::chrono::milliseconds timeout) {
    timeval tv{};
    tv.tv_sec = timeout.count() / 1000;
    tv.tv_usec = static_cast<long>((timeout.count() % 1000) * 1000);
    ::setsockopt(listen_fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) throw_errno("accept failed (or timed out)");
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return fd;
}

}  // namespace

std::unique_ptr<Transport> make_tcp_mesh(const std::vector<PeerAddress>& peers,
                                         std::uint16_t self_id,
                                         std::chrono::milliseconds connect_timeout) {
    if (self_id >= peers.size()) {
        throw TransportError("self id not in peer list", self_id);
    }
    auto endpoint =
        std::make_unique<TcpEndpoint>(self_id, static_cast<std::uint16_t>(peers.size()));

    int listen_fd = -1;
    const std::size_t expected_accepts = peers.size() - 1 - self_id;
    if (expected_accepts > 0) {
        listen_fd = listen_on(peers[self_id], static_cast<int>(expected_accepts));
    }

    try {
        // Dial lower ids, identify ourselves first.
        for (std::uint16_t q = 0; q < self_id; ++q) {
            int fd = connect_with_retry(peers[q], connect_timeout);
            send_hello(fd, self_id);
            endpoint->adopt_connection(q, fd);
        }
        // Accept higher ids, identified by their hello.
        for (std::size_t i = 0; i < expected_accepts; ++i) {
            int fd = accept_with_timeout(listen_fd, connect_timeout);
            std::uint16_t peer = expect_hello(fd);
            if (peer <= self_id || peer >= peers.size()) {
                ::close(fd);
                throw TransportError("unexpected hello from id " + std::to_string(peer), peer);
            }
            endpoint->adopt_connection(peer, fd);
        }
    } catch (...) {
        if (listen_fd >= 0) ::close(listen_fd);
        throw;
    }
    if (listen_fd >= 0) ::close(listen_fd);
    return endpoint;
}

std::unique_ptr<Transport> make_tcp_server(const PeerAddress& self, std::uint16_t num_workers,
                                           std::chrono::milliseconds accept_timeout) {
    auto endpoint = std::make_unique<TcpEndpoint>(
        self.worker_id, static_cast<std::uint16_t>(num_workers + 1));
    int listen_fd = listen_on(self, num_workers);
    try {
        for (std::uint16_t i = 0; i < num_workers; ++i) {
            int fd = accept_with_timeout(listen_fd, accept_timeout);
            std::uint16_t peer = expect_hello(fd);
            endpoint->adopt_connection(peer, fd);
        }
    } catch (...) {
        ::close(listen_fd);
        throw;
    }
    ::close(listen_fd);
    return endpoint;
}

std::unique_ptr<Transport> make_tcp_client(const PeerAddress& server, std::uint16_t self_id,
                                           std::chrono::milliseconds connect_timeout) {
    auto endpoint = std::make_unique<TcpEndpoint>(self_id, 2);
    int fd = connect_with_retry(server, connect_timeout);
    send_hello(fd, self_id);
    endpoint->adopt_connection(server.worker_id, fd);
    return endpoint;
}

}  // namespace svb
