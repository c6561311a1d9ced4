#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "svb/errors.hpp"
#include "svb/sparse.hpp"

namespace svb {

// Dense K x D parameter matrix, row-major; row k is the weight vector of
// class k. Dimensions are fixed for the lifetime of a run.
class WeightMatrix {
public:
    WeightMatrix(std::uint32_t num_classes, std::uint32_t num_features)
        : num_classes_(num_classes),
          num_features_(num_features),
          values_(static_cast<std::size_t>(num_classes) * num_features, 0.0) {
        if (num_classes == 0 || num_features == 0) {
            throw DimensionError("weight matrix dimensions must be positive",
                                 num_classes, num_features);
        }
    }

    std::uint32_t num_classes() const noexcept { return num_classes_; }
    std::uint32_t num_features() const noexcept { return num_features_; }

    double* row(std::uint32_t k) {
        return values_.data() + static_cast<std::size_t>(k) * num_features_;
    }
    const double* row(std::uint32_t k) const {
        return values_.data() + static_cast<std::size_t>(k) * num_features_;
    }

    double& at(std::uint32_t k, std::uint32_t d) { return row(k)[d]; }
    double at(std::uint32_t k, std::uint32_t d) const { return row(k)[d]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    friend bool operator==(const WeightMatrix& a, const WeightMatrix& b) {
        return a.num_classes_ == b.num_classes_ && a.num_features_ == b.num_features_ &&
               bits_equal(a.values_, b.values_);
    }

private:
    std::uint32_t num_classes_;
    std::uint32_t num_features_;
    std::vector<double> values_;
};

struct LabeledSample {
    SparseVector features;
    std::uint32_t label = 0;
};

// Softmax output; entries strictly positive, summing to 1.
struct ProbabilityVector {
    std::vector<double> values;
};

// Rank-1 update factors. u is the scaled class residual -eta * (pi - y),
// v the sample's features; the encoded update is W <- W + u v^T.
struct SufficientVectorPair {
    std::vector<double> u;
    SparseVector v;
};

// z[k] = w_k . x for every class k.
std::vector<double> logits(const WeightMatrix& w, const SparseVector& x);

// Normalized exponentials with max subtraction. Entries are clamped up to
// the smallest subnormal so extreme logit gaps cannot produce exact zeros.
ProbabilityVector softmax(const std::vector<double>& z);

SufficientVectorPair compute_sv(const WeightMatrix& w, const LabeledSample& s, double eta);

// W[k][d] += u[k] * v[d] for the nonzero cells of the outer product.
// Rows with u[k] == 0 and columns absent from v are not touched.
void apply_sv(WeightMatrix& w, const SufficientVectorPair& sv);

// Mean per-sample cross entropy, computed with log-sum-exp.
double nll_loss(const WeightMatrix& w, std::span<const LabeledSample> data);

// argmax_k of the logits; ties go to the lowest class index.
std::uint32_t predict(const WeightMatrix& w, const SparseVector& x);

double accuracy(const WeightMatrix& w, std::span<const LabeledSample> data);

}  // namespace svb
