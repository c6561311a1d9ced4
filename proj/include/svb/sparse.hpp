#pragma once

#include <bit>
#include <cstdint>
#include <vector>

#include "svb/errors.hpp"

namespace svb {

// Sparse real vector: strictly increasing indices below a nominal length,
// values stored 64-bit. Shared by feature vectors and wire-coded vectors.
struct SparseVector {
    std::uint32_t dim = 0;
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    std::size_t nnz() const noexcept { return indices.size(); }

    void validate() const {
        if (indices.size() != values.size()) {
            throw DimensionError("sparse vector index/value count mismatch",
                                 indices.size(), values.size());
        }
        std::uint32_t prev = 0;
        bool first = true;
        for (std::uint32_t idx : indices) {
            if (!first && idx <= prev) {
                throw DimensionError("sparse vector indices not strictly increasing", idx, prev);
            }
            if (idx >= dim) {
                throw DimensionError("sparse vector index out of range", idx, dim);
            }
            prev = idx;
            first = false;
        }
    }

    std::vector<double> to_dense() const {
        std::vector<double> out(dim, 0.0);
        for (std::size_t i = 0; i < indices.size(); ++i) {
            out[indices[i]] = values[i];
        }
        return out;
    }

    static SparseVector from_dense(const std::vector<double>& dense) {
        SparseVector sv;
        sv.dim = static_cast<std::uint32_t>(dense.size());
        for (std::uint32_t i = 0; i < dense.size(); ++i) {
            if (dense[i] != 0.0) {
                sv.indices.push_back(i);
                sv.values.push_back(dense[i]);
            }
        }
        return sv;
    }
};

// Bit-level equality; distinguishes 0.0 from -0.0 and compares NaN payloads.
inline bool bits_equal(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

inline bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!bits_equal(a[i], b[i])) return false;
    }
    return true;
}

inline bool operator==(const SparseVector& a, const SparseVector& b) {
    return a.dim == b.dim && a.indices == b.indices && bits_equal(a.values, b.values);
}

}  // namespace svb
