#include "svb/transport.hpp"

#include <string>
#include <utility>

#include "svb/errors.hpp"

namespace svb {

class LoopbackEndpoint final : public Transport {
public:
    LoopbackEndpoint(LoopbackHub& hub, std::uint16_t id) : hub_(hub), id_(id) {}

    std::uint16_t self_id() const override { return id_; }
    std::uint16_t num_endpoints() const override { return hub_.num_endpoints(); }

    void broadcast(const Message& msg) override {
        const std::vector<std::uint8_t> frame = encode(msg);
        for (std::uint16_t dest = 0; dest < hub_.num_endpoints(); ++dest) {
            if (dest == id_) continue;
            hub_.deposit(dest, frame);
            counters_.add_sent(frame.size());
        }
    }

    void send(std::uint16_t dest, const Message& msg) override {
        if (dest >= hub_.num_endpoints() || dest == id_) {
            throw TransportError("no such peer " + std::to_string(dest), dest);
        }
        std::vector<std::uint8_t> frame = encode(msg);
        counters_.add_sent(frame.size());
        hub_.deposit(dest, std::move(frame));
    }

    std::vector<Message> poll() override {
        std::vector<Message> out;
        for (auto& frame : hub_.drain(id_)) {
            out.push_back(decode(frame));
            counters_.add_received(frame.size());
        }
        return out;
    }

    ByteCounters counters() const override { return counters_.snapshot(); }

private:
    LoopbackHub& hub_;
    std::uint16_t id_;
    AtomicCounters counters_;
};

LoopbackHub::LoopbackHub(std::uint16_t num_endpoints) {
    inboxes_.reserve(num_endpoints);
    for (std::uint16_t i = 0; i < num_endpoints; ++i) {
        inboxes_.push_back(std::make_unique<Inbox>());
    }
}

LoopbackHub::~LoopbackHub() = default;

std::unique_ptr<Transport> LoopbackHub::endpoint(std::uint16_t id) {
    if (id >= inboxes_.size()) {
        throw TransportError("endpoint id out of range", id);
    }
    return std::make_unique<LoopbackEndpoint>(*this, id);
}

void LoopbackHub::deposit(std::uint16_t dest, std::vector<std::uint8_t> frame) {
    Inbox& inbox = *inboxes_[dest];
    std::lock_guard lock(inbox.mu);
    inbox.frames.push_back(std::move(frame));
}

std::vector<std::vector<std::uint8_t>> LoopbackHub::drain(std::uint16_t id) {
    Inbox& inbox = *inboxes_[id];
    std::lock_guard lock(inbox.mu);
    std::vector<std::vector<std::uint8_t>> out(inbox.frames.begin(), inbox.frames.end());
    inbox.frames.clear();
    return out;
}

}  // namespace svb
