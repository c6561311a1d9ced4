#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "svb/protocol.hpp"

namespace svb {

struct PeerAddress {
    std::uint16_t worker_id = 0;
    std::string host;
    std::uint16_t port = 0;
};

// Cumulative per-worker traffic, in wire_size terms. Framing overhead and
// connection handshakes are not message traffic and are not counted.
struct ByteCounters {
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_received = 0;
};

// Shared by transports; reads and read-modify-writes appear indivisible.
class AtomicCounters {
public:
    void add_sent(std::uint64_t bytes) {
        bytes_sent_.fetch_add(bytes, std::memory_order_relaxed);
        messages_sent_.fetch_add(1, std::memory_order_relaxed);
    }
    void add_received(std::uint64_t bytes) {
        bytes_received_.fetch_add(bytes, std::memory_order_relaxed);
        messages_received_.fetch_add(1, std::memory_order_relaxed);
    }
    ByteCounters snapshot() const {
        return ByteCounters{bytes_sent_.load(std::memory_order_relaxed),
                            bytes_received_.load(std::memory_order_relaxed),
                            messages_sent_.load(std::memory_order_relaxed),
                            messages_received_.load(std::memory_order_relaxed)};
    }

private:
    std::atomic<std::uint64_t> bytes_sent_{0};
    std::atomic<std::uint64_t> bytes_received_{0};
    std::atomic<std::uint64_t> messages_sent_{0};
    std::atomic<std::uint64_t> messages_received_{0};
};

// Message movement between endpoints. Each instance is owned by one worker;
// broadcast and poll may run on different threads of that worker.
class Transport {
public:
    virtual ~Transport() = default;

    virtual std::uint16_t self_id() const = 0;
    virtual std::uint16_t num_endpoints() const = 0;

    // Delivers to every other endpoint exactly once, per-sender FIFO.
    virtual void broadcast(const Message& msg) = 0;

    // Unicast; the parameter-server paths use this.
    virtual void send(std::uint16_t dest, const Message& msg) = 0;

    // All fully received messages since the last poll; never blocks.
    virtual std::vector<Message> poll() = 0;

    virtual ByteCounters counters() const = 0;
};

// In-process mesh: every endpoint sees encoded frames, so the wire format
// and byte accounting are exercised exactly as over a socket.
class LoopbackHub {
public:
    explicit LoopbackHub(std::uint16_t num_endpoints);
    ~LoopbackHub();

    std::uint16_t num_endpoints() const noexcept { return static_cast<std::uint16_t>(inboxes_.size()); }

    // Endpoint objects remain valid only while the hub lives.
    std::unique_ptr<Transport> endpoint(std::uint16_t id);

private:
    friend class LoopbackEndpoint;

    struct Inbox {
        std::mutex mu;
        std::deque<std::vector<std::uint8_t>> frames;
    };

    void deposit(std::uint16_t dest, std::vector<std::uint8_t> frame);
    std::vector<std::vector<std::uint8_t>> drain(std::uint16_t id);

    std::vector<std::unique_ptr<Inbox>> inboxes_;
};

}  // namespace svb
