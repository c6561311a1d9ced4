#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "svb/errors.hpp"
#include "svb/mlr.hpp"
#include "svb/sparse.hpp"

namespace svb {

// Wire format "SVB1", all little-endian.
//
//   magic   4 bytes  0x53 0x56 0x42 0x31
//   version u8       1
//   kind    u8       1 = SV, 2 = parameter matrix, 3 = gradient matrix, 4 = control
//   sender  u16
//   clock   u64
//
// SV body:      u-coding flag u8 (0 dense, 1 sparse); K u32; D u32;
//               dense u = K f64, or sparse u = count u32 + indices u32[] + values f64[];
//               v always sparse-coded = count u32 + indices u32[] + values f64[].
// Matrix body:  K u32; D u32; K*D f64 row-major.
// Control body: code u8.

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::uint8_t kMagic[4] = {0x53, 0x56, 0x42, 0x31};
inline constexpr std::size_t kHeaderBytes = 16;  // through clock

enum class MessageKind : std::uint8_t {
    sv = 1,
    parameter_push = 2,
    gradient_push = 3,
    control = 4,
};

// Control codes. The wire format reserves the byte; 1 is the shutdown
// handshake, 0 announces a sender on a fresh connection, 2 asks a parameter
// server for the current matrix.
inline constexpr std::uint8_t kControlHello = 0;
inline constexpr std::uint8_t kControlShutdown = 1;
inline constexpr std::uint8_t kControlPullRequest = 2;

struct SvMessage {
    std::uint16_t sender_id = 0;
    std::uint64_t clock = 0;
    bool u_sparse = false;
    std::vector<double> u_dense;  // used when !u_sparse; length K
    SparseVector u_coded;         // used when u_sparse; dim == K
    SparseVector v;               // dim == D

    std::uint32_t num_classes() const {
        return u_sparse ? u_coded.dim : static_cast<std::uint32_t>(u_dense.size());
    }
    std::uint32_t num_features() const { return v.dim; }

    // Materializes the rank-1 factors; the single reconstruction path both
    // sender and receivers apply, so the update is bit-identical everywhere.
    SufficientVectorPair to_pair() const;

    friend bool operator==(const SvMessage& a, const SvMessage& b) {
        return a.sender_id == b.sender_id && a.clock == b.clock && a.u_sparse == b.u_sparse &&
               bits_equal(a.u_dense, b.u_dense) && a.u_coded == b.u_coded && a.v == b.v;
    }
};

struct MatrixMessage {
    std::uint16_t sender_id = 0;
    std::uint64_t clock = 0;
    MessageKind kind = MessageKind::gradient_push;  // parameter_push or gradient_push
    std::uint32_t num_classes = 0;
    std::uint32_t num_features = 0;
    std::vector<double> values;  // K*D row-major

    friend bool operator==(const MatrixMessage& a, const MatrixMessage& b) {
        return a.sender_id == b.sender_id && a.clock == b.clock && a.kind == b.kind &&
               a.num_classes == b.num_classes && a.num_features == b.num_features &&
               bits_equal(a.values, b.values);
    }
};

struct ControlMessage {
    std::uint16_t sender_id = 0;
    std::uint64_t clock = 0;
    std::uint8_t code = kControlShutdown;

    friend bool operator==(const ControlMessage& a, const ControlMessage& b) {
        return a.sender_id == b.sender_id && a.clock == b.clock && a.code == b.code;
    }
};

using Message = std::variant<SvMessage, MatrixMessage, ControlMessage>;

// Keeps entries with |value| > epsilon; no renormalization, the dropped mass
// is accepted as approximation error. epsilon = 0 keeps all exact nonzeros.
SparseVector sparsify(const std::vector<double>& dense, double epsilon);

std::vector<std::uint8_t> encode(const Message& msg);
Message decode(std::span<const std::uint8_t> bytes);

// Exact encoded length, computed without encoding.
std::size_t wire_size(const Message& msg);

// Bytes of real-valued payload only (8 per transmitted number); index,
// count and header overhead are accounted separately. This is the quantity
// behind the (K+D) versus K*D communication comparison.
std::size_t payload_bytes(const Message& msg);

}  // namespace svb
