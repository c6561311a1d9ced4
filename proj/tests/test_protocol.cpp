#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cstring>
#include <limits>
#include <vector>

#include "svb/protocol.hpp"
#include "svb/rng.hpp"

using namespace svb;

namespace {

SparseVector sparse(std::uint32_t dim, std::vector<std::uint32_t> idx, std::vector<double> val) {
    SparseVector v;
    v.dim = dim;
    v.indices = std::move(idx);
    v.values = std::move(val);
    return v;
}

// Doubles with interesting bit patterns: ±0, denormals, extremes, NaN bits.
double fuzz_double(SplitMix64& rng) {
    switch (rng.next_below(8)) {
        case 0: return 0.0;
        case 1: return -0.0;
        case 2: return std::numeric_limits<double>::denorm_min();
        case 3: return -std::numeric_limits<double>::max();
        case 4: return std::bit_cast<double>(rng.next_u64());
        default: return 1000.0 * rng.next_double() - 500.0;
    }
}

SparseVector fuzz_sparse(SplitMix64& rng, std::uint32_t dim) {
    SparseVector v;
    v.dim = dim;
    for (std::uint32_t i = 0; i < dim; ++i) {
        if (rng.next_below(2) == 0) {
            v.indices.push_back(i);
            v.values.push_back(fuzz_double(rng));
        }
    }
    return v;
}

Message fuzz_message(SplitMix64& rng) {
    const std::uint16_t sender = static_cast<std::uint16_t>(rng.next_below(100));
    const std::uint64_t clock = rng.next_u64() >> 20;
    switch (rng.next_below(3)) {
        case 0: {
            SvMessage m;
            m.sender_id = sender;
            m.clock = clock;
            const std::uint32_t k_count = 1 + rng.next_below(12);
            const std::uint32_t d_count = 1 + rng.next_below(16);
            m.u_sparse = rng.next_below(2) == 1;
            if (m.u_sparse) {
                m.u_coded = fuzz_sparse(rng, k_count);
            } else {
                for (std::uint32_t k = 0; k < k_count; ++k) m.u_dense.push_back(fuzz_double(rng));
            }
            m.v = fuzz_sparse(rng, d_count);
            return m;
        }
        case 1: {
            MatrixMessage m;
            m.sender_id = sender;
            m.clock = clock;
            m.kind = rng.next_below(2) == 0 ? MessageKind::parameter_push
                                            : MessageKind::gradient_push;
            m.num_classes = 1 + rng.next_below(6);
            m.num_features = 1 + rng.next_below(8);
            for (std::size_t i = 0; i < std::size_t(m.num_classes) * m.num_features; ++i) {
                m.values.push_back(fuzz_double(rng));
            }
            return m;
        }
        default:
            return ControlMessage{sender, clock, static_cast<std::uint8_t>(rng.next_below(3))};
    }
}

WireFault fault_of(std::vector<std::uint8_t> bytes) {
    try {
        decode(bytes);
    } catch (const WireError& e) {
        return e.fault();
    }
    FAIL("expected WireError");
    return WireFault::bad_magic;
}

}  // namespace

TEST_CASE("sparsify: epsilon zero keeps exact nonzeros") {
    auto v = sparsify({0.7, 0.3, 0.0}, 0.0);
    CHECK(v.dim == 3);
    CHECK(v.indices == std::vector<std::uint32_t>{0, 1});
    CHECK(v.values == std::vector<double>{0.7, 0.3});
}

TEST_CASE("sparsify: drops entries at or below the threshold") {
    auto v = sparsify({0.7, 0.3, 1e-12}, 1e-8);
    CHECK(v.indices == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("sparsify: reconstruction differs by at most epsilon per entry") {
    SplitMix64 rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> dense(1 + rng.next_below(32));
        for (double& x : dense) x = 2.0 * rng.next_double() - 1.0;
        const double eps = rng.next_double() * 0.5;
        auto rebuilt = sparsify(dense, eps).to_dense();
        for (std::size_t i = 0; i < dense.size(); ++i) {
            CHECK(std::fabs(rebuilt[i] - dense[i]) <= eps);
        }
    }
}

TEST_CASE("sparsify: nonzero count is monotone in epsilon") {
    SplitMix64 rng(43);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> dense(16);
        for (double& x : dense) x = 2.0 * rng.next_double() - 1.0;
        const double e1 = rng.next_double() * 0.3;
        const double e2 = e1 + rng.next_double() * 0.3;
        CHECK(sparsify(dense, e1).nnz() >= sparsify(dense, e2).nnz());
    }
}

TEST_CASE("sparsify: rejects a negative threshold") {
    CHECK_THROWS_AS(sparsify({1.0}, -0.1), NumericError);
}

TEST_CASE("encode: SV layout sizes, hand computed") {
    SvMessage m;
    m.sender_id = 7;
    m.clock = 9;
    m.u_dense = {1.5, -2.5};                // K = 2, dense coding
    m.v = sparse(4, {1, 3}, {0.25, -8.0});  // D = 4, 2 nonzeros
    const auto bytes = encode(Message(m));
    // 16-byte header, 9-byte flag/K/D preamble, 8K for dense u,
    // 4 + 12 per nonzero for sparse v.
    CHECK(bytes.size() == 16 + 9 + 2 * 8 + (4 + 2 * 12));
    CHECK(bytes.size() == wire_size(Message(m)));
    CHECK(payload_bytes(Message(m)) == 8 * (2 + 2));

    // header fields land where the layout says
    CHECK(std::memcmp(bytes.data(), "SVB1", 4) == 0);
    CHECK(bytes[4] == 1);   // version
    CHECK(bytes[5] == 1);   // kind = SV
    CHECK(bytes[6] == 7);   // sender lo
    CHECK(bytes[8] == 9);   // clock lo
    CHECK(bytes[16] == 0);  // dense flag
    CHECK(bytes[17] == 2);  // K
    CHECK(bytes[21] == 4);  // D
}

TEST_CASE("encode: matrix message is header plus 8 K D") {
    MatrixMessage m;
    m.sender_id = 1;
    m.clock = 2;
    m.kind = MessageKind::gradient_push;
    m.num_classes = 2;
    m.num_features = 3;
    m.values.assign(6, 1.0);
    const auto bytes = encode(Message(m));
    CHECK(bytes.size() == 24 + 48);
    CHECK(wire_size(Message(m)) == 72);
    CHECK(payload_bytes(Message(m)) == 48);
}

TEST_CASE("encode: control message is header plus one code byte") {
    ControlMessage m{3, 4, kControlShutdown};
    CHECK(encode(Message(m)).size() == 17);
    CHECK(wire_size(Message(m)) == 17);
    CHECK(payload_bytes(Message(m)) == 0);
}

TEST_CASE("encode: deterministic bytes") {
    SplitMix64 rng(77);
    Message m = fuzz_message(rng);
    CHECK(encode(m) == encode(m));
}

TEST_CASE("decode: corruption classes map to their designated faults") {
    SvMessage m;
    m.sender_id = 1;
    m.clock = 1;
    m.u_dense = {1.0, 2.0};
    m.v = sparse(4, {0, 2}, {1.0, 2.0});
    const auto good = encode(Message(m));
    REQUIRE(std::holds_alternative<SvMessage>(decode(good)));

    auto bad = good;
    bad[0] = 'X';
    CHECK(fault_of(bad) == WireFault::bad_magic);

    bad = good;
    bad[4] = 9;
    CHECK(fault_of(bad) == WireFault::bad_version);

    bad = good;
    bad[5] = 42;
    CHECK(fault_of(bad) == WireFault::bad_kind);

    bad = good;
    bad.resize(bad.size() - 5);
    CHECK(fault_of(bad) == WireFault::truncated);

    CHECK(fault_of({0x53, 0x56}) == WireFault::truncated);

    bad = good;
    bad.push_back(0);
    CHECK(fault_of(bad) == WireFault::trailing_bytes);

    bad = good;
    bad[16] = 2;  // u-coding flag out of range
    CHECK(fault_of(bad) == WireFault::bad_flag);

    // encode does not sort for the sender; decode must reject
    SvMessage unsorted = m;
    unsorted.v.indices = {2, 2};
    CHECK(fault_of(encode(Message(unsorted))) == WireFault::unsorted_indices);

    SvMessage oob = m;
    oob.v.indices = {0, 9};  // 9 >= D = 4
    CHECK(fault_of(encode(Message(oob))) == WireFault::index_out_of_range);
}

TEST_CASE("decode: empty input is truncated") {
    CHECK(fault_of({}) == WireFault::truncated);
}

TEST_CASE("roundtrip: fuzzed messages of every kind survive bit-exactly") {
    SplitMix64 rng(2026);
    for (int trial = 0; trial < 10000; ++trial) {
        Message m = fuzz_message(rng);
        const auto bytes = encode(m);
        CHECK(bytes.size() == wire_size(m));
        Message back = decode(bytes);
        CHECK(m == back);
    }
}

TEST_CASE("size law: SV wire size is affine in the nonzero count of v") {
    const std::uint32_t k_count = 6;
    std::size_t prev = 0;
    for (std::uint32_t nnz = 0; nnz <= 8; ++nnz) {
        SvMessage m;
        m.u_dense.assign(k_count, 1.0);
        m.v.dim = 8;
        for (std::uint32_t i = 0; i < nnz; ++i) {
            m.v.indices.push_back(i);
            m.v.values.push_back(1.0);
        }
        const std::size_t size = wire_size(Message(m));
        if (nnz > 0) CHECK(size == prev + 12);
        prev = size;
    }
}

TEST_CASE("size law: paper-scale payload ratio is about 1/954.5") {
    // K = 1000 classes, D = 21000 feature dimensions.
    const std::uint64_t k_count = 1000, d_count = 21000;
    SvMessage sv;
    sv.u_dense.assign(k_count, 0.5);
    sv.v.dim = static_cast<std::uint32_t>(d_count);
    for (std::uint32_t i = 0; i < d_count; ++i) {
        sv.v.indices.push_back(i);
        sv.v.values.push_back(1.0);
    }
    MatrixMessage mm;
    mm.kind = MessageKind::gradient_push;
    mm.num_classes = static_cast<std::uint32_t>(k_count);
    mm.num_features = static_cast<std::uint32_t>(d_count);
    mm.values.assign(k_count * d_count, 0.0);

    const std::uint64_t sv_payload = payload_bytes(Message(sv));
    const std::uint64_t mm_payload = payload_bytes(Message(mm));
    CHECK(sv_payload == 176000);
    CHECK(mm_payload == 168000000);
    // payload ratio equals (K+D)/(K*D) exactly, in cross-product form
    CHECK(sv_payload * (k_count * d_count) == mm_payload * (k_count + d_count));
    const double ratio = static_cast<double>(sv_payload) / static_cast<double>(mm_payload);
    CHECK(ratio == doctest::Approx(1.0 / 954.5454545454545).epsilon(1e-9));
}

TEST_CASE("size law: degenerate K = D = 1 where SV is not smaller") {
    SvMessage sv;
    sv.u_dense = {1.0};
    sv.v = sparse(1, {0}, {2.0});
    MatrixMessage mm;
    mm.kind = MessageKind::gradient_push;
    mm.num_classes = 1;
    mm.num_features = 1;
    mm.values = {2.0};
    CHECK(payload_bytes(Message(sv)) == 16);
    CHECK(payload_bytes(Message(mm)) == 8);
    CHECK(wire_size(Message(sv)) == 25 + 8 + 16);
    CHECK(wire_size(Message(mm)) == 24 + 8);
    CHECK(wire_size(Message(sv)) > wire_size(Message(mm)));
}

TEST_CASE("communication reduction law for K, D >= 8 with dense-coded v") {
    SplitMix64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t k_count = 8 + rng.next_below(64);
        const std::uint64_t d_count = 8 + rng.next_below(64);
        SvMessage sv;
        sv.u_dense.assign(k_count, 1.0);
        sv.v.dim = static_cast<std::uint32_t>(d_count);
        for (std::uint32_t i = 0; i < d_count; ++i) {
            sv.v.indices.push_back(i);
            sv.v.values.push_back(1.0);
        }
        MatrixMessage mm;
        mm.kind = MessageKind::gradient_push;
        mm.num_classes = static_cast<std::uint32_t>(k_count);
        mm.num_features = static_cast<std::uint32_t>(d_count);
        mm.values.assign(k_count * d_count, 0.0);
        CHECK(payload_bytes(Message(sv)) * (k_count * d_count) ==
              payload_bytes(Message(mm)) * (k_count + d_count));
    }
}

TEST_CASE("matrix encode validates the cell count") {
    MatrixMessage m;
    m.kind = MessageKind::parameter_push;
    m.num_classes = 2;
    m.num_features = 2;
    m.values = {1.0};  // should be 4
    CHECK_THROWS_AS(encode(Message(m)), DimensionError);
}
