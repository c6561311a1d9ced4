#include "svb/protocol.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

namespace svb {

namespace {

constexpr std::uint32_t kMaxCount = std::numeric_limits<std::uint32_t>::max();

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v));
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

private:
    std::vector<std::uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

    void require(std::size_t n) const {
        if (remaining() < n) {
            throw WireError(WireFault::truncated,
                            "message truncated at offset " + std::to_string(pos_), pos_);
        }
    }

    std::uint8_t u8() {
        require(1);
        return data_[pos_++];
    }
    std::uint16_t u16() {
        require(2);
        std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                          static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        require(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }

private:
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

void check_count(std::size_t n, const char* what) {
    if (n > kMaxCount) {
        throw WireError(WireFault::too_long,
                        std::string(what) + " longer than 2^32-1 (" + std::to_string(n) + ")");
    }
}

void write_sparse_block(Writer& w, const SparseVector& sv) {
    check_count(sv.indices.size(), "sparse vector");
    w.u32(static_cast<std::uint32_t>(sv.indices.size()));
    for (std::uint32_t idx : sv.indices) w.u32(idx);
    for (double v : sv.values) w.f64(v);
}

SparseVector read_sparse_block(Reader& r, std::uint32_t dim, const char* what) {
    SparseVector sv;
    sv.dim = dim;
    const std::uint32_t count = r.u32();
    // Size check before allocating anything count-proportional.
    r.require(static_cast<std::size_t>(count) * 12);
    sv.indices.resize(count);
    sv.values.resize(count);
    std::uint32_t prev = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        sv.indices[i] = r.u32();
        if (i > 0 && sv.indices[i] <= prev) {
            throw WireError(WireFault::unsorted_indices,
                            std::string(what) + " indices not strictly increasing at offset " +
                                std::to_string(r.offset()),
                            r.offset());
        }
        prev = sv.indices[i];
    }
    if (count > 0 && prev >= dim) {
        throw WireError(WireFault::index_out_of_range,
                        std::string(what) + " index " + std::to_string(prev) +
                            " out of range for length " + std::to_string(dim));
    }
    for (std::uint32_t i = 0; i < count; ++i) sv.values[i] = r.f64();
    return sv;
}

std::size_t sparse_block_size(const SparseVector& sv) {
    return 4 + sv.indices.size() * 12;
}

void write_header(Writer& w, MessageKind kind, std::uint16_t sender, std::uint64_t clock) {
    for (std::uint8_t b : kMagic) w.u8(b);
    w.u8(kWireVersion);
    w.u8(static_cast<std::uint8_t>(kind));
    w.u16(sender);
    w.u64(clock);
}

}  // namespace

SufficientVectorPair SvMessage::to_pair() const {
    SufficientVectorPair pair;
    if (u_sparse) {
        pair.u = u_coded.to_dense();
    } else {
        pair.u = u_dense;
    }
    pair.v = v;
    return pair;
}

SparseVector sparsify(const std::vector<double>& dense, double epsilon) {
    if (epsilon < 0.0 || !std::isfinite(epsilon)) {
        throw NumericError("sparsification threshold must be nonnegative and finite");
    }
    check_count(dense.size(), "vector");
    SparseVector sv;
    sv.dim = static_cast<std::uint32_t>(dense.size());
    for (std::uint32_t i = 0; i < dense.size(); ++i) {
        if (std::fabs(dense[i]) > epsilon) {
            sv.indices.push_back(i);
            sv.values.push_back(dense[i]);
        }
    }
    return sv;
}

std::vector<std::uint8_t> encode(const Message& msg) {
    std::vector<std::uint8_t> out;
    out.reserve(wire_size(msg));
    Writer w(out);
    if (const auto* sv = std::get_if<SvMessage>(&msg)) {
        write_header(w, MessageKind::sv, sv->sender_id, sv->clock);
        w.u8(sv->u_sparse ? 1 : 0);
        check_count(sv->u_dense.size(), "u vector");
        w.u32(sv->num_classes());
        w.u32(sv->num_features());
        if (sv->u_sparse) {
            write_sparse_block(w, sv->u_coded);
        } else {
            for (double x : sv->u_dense) w.f64(x);
        }
        write_sparse_block(w, sv->v);
    } else if (const auto* mm = std::get_if<MatrixMessage>(&msg)) {
        if (mm->kind != MessageKind::parameter_push && mm->kind != MessageKind::gradient_push) {
            throw WireError(WireFault::bad_kind, "matrix message kind must be 2 or 3");
        }
        const std::size_t cells =
            static_cast<std::size_t>(mm->num_classes) * mm->num_features;
        if (mm->values.size() != cells) {
            throw DimensionError("matrix message value count does not match K*D",
                                 mm->values.size(), cells);
        }
        write_header(w, mm->kind, mm->sender_id, mm->clock);
        w.u32(mm->num_classes);
        w.u32(mm->num_features);
        for (double x : mm->values) w.f64(x);
    } else {
        const auto& cm = std::get<ControlMessage>(msg);
        write_header(w, MessageKind::control, cm.sender_id, cm.clock);
        w.u8(cm.code);
    }
    return out;
}

Message decode(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    if (bytes.size() >= 4) {
        if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
            throw WireError(WireFault::bad_magic, "bad magic");
        }
    } else {
        throw WireError(WireFault::truncated, "message shorter than magic", bytes.size());
    }
    r.u32();  // magic, verified above
    const std::uint8_t version = r.u8();
    if (version != kWireVersion) {
        throw WireError(WireFault::bad_version,
                        "unsupported version " + std::to_string(version));
    }
    const std::uint8_t kind = r.u8();
    const std::uint16_t sender = r.u16();
    const std::uint64_t clock = r.u64();

    Message out;
    switch (kind) {
        case 1: {
            SvMessage m;
            m.sender_id = sender;
            m.clock = clock;
            const std::uint8_t flag = r.u8();
            if (flag > 1) {
                throw WireError(WireFault::bad_flag,
                                "u-coding flag must be 0 or 1, got " + std::to_string(flag));
            }
            m.u_sparse = flag == 1;
            const std::uint32_t k_count = r.u32();
            const std::uint32_t d_count = r.u32();
            if (m.u_sparse) {
                m.u_coded = read_sparse_block(r, k_count, "u");
            } else {
                r.require(static_cast<std::size_t>(k_count) * 8);
                m.u_dense.resize(k_count);
                for (std::uint32_t i = 0; i < k_count; ++i) m.u_dense[i] = r.f64();
            }
            m.v = read_sparse_block(r, d_count, "v");
            out = std::move(m);
            break;
        }
        case 2:
        case 3: {
            MatrixMessage m;
            m.sender_id = sender;
            m.clock = clock;
            m.kind = static_cast<MessageKind>(kind);
            m.num_classes = r.u32();
            m.num_features = r.u32();
            const std::size_t cells =
                static_cast<std::size_t>(m.num_classes) * m.num_features;
            r.require(cells * 8);
            m.values.resize(cells);
            for (std::size_t i = 0; i < cells; ++i) m.values[i] = r.f64();
            out = std::move(m);
            break;
        }
        case 4: {
            ControlMessage m;
            m.sender_id = sender;
            m.clock = clock;
            m.code = r.u8();
            out = std::move(m);
            break;
        }
        default:
            throw WireError(WireFault::bad_kind,
                            "unknown message kind " + std::to_string(kind));
    }
    if (r.remaining() != 0) {
        throw WireError(WireFault::trailing_bytes,
                        std::to_string(r.remaining()) + " trailing bytes after message",
                        r.offset());
    }
    return out;
}

std::size_t wire_size(const Message& msg) {
    if (const auto* sv = std::get_if<SvMessage>(&msg)) {
        std::size_t n = kHeaderBytes + 1 + 4 + 4;
        n += sv->u_sparse ? sparse_block_size(sv->u_coded) : sv->u_dense.size() * 8;
        n += sparse_block_size(sv->v);
        return n;
    }
    if (const auto* mm = std::get_if<MatrixMessage>(&msg)) {
        return kHeaderBytes + 4 + 4 +
               static_cast<std::size_t>(mm->num_classes) * mm->num_features * 8;
    }
    return kHeaderBytes + 1;
}

std::size_t payload_bytes(const Message& msg) {
    if (const auto* sv = std::get_if<SvMessage>(&msg)) {
        const std::size_t u_reals = sv->u_sparse ? sv->u_coded.nnz() : sv->u_dense.size();
        return (u_reals + sv->v.nnz()) * 8;
    }
    if (const auto* mm = std::get_if<MatrixMessage>(&msg)) {
        return static_cast<std::size_t>(mm->num_classes) * mm->num_features * 8;
    }
    return 0;
}

}  // namespace svb
