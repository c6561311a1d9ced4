#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <vector>

#include "svb/transport.hpp"

namespace svb {

// TCP transports carrying length-prefixed frames: u32 little-endian byte
// count, then one wire-format message. A connection opens with a hello
// control frame identifying the sender; handshake frames are connection
// plumbing and are excluded from the byte counters.

// Full mesh: endpoint p dials every q < p and accepts every q > p. `peers`
// lists all endpoints including self, ordered by dense worker id.
std::unique_ptr<Transport> make_tcp_mesh(
    const std::vector<PeerAddress>& peers, std::uint16_t self_id,
    std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(15000));

// Star hub: accepts `num_workers` connections (used by the parameter server).
std::unique_ptr<Transport> make_tcp_server(
    const PeerAddress& self, std::uint16_t num_workers,
    std::chrono::milliseconds accept_timeout = std::chrono::milliseconds(15000));

// Star spoke: one outbound connection to the hub.
std::unique_ptr<Transport> make_tcp_client(
    const PeerAddress& server, std::uint16_t self_id,
    std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(15000));

}  // namespace svb
