#include "svb/mlr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace svb {

namespace {

void check_features(const WeightMatrix& w, const SparseVector& x) {
    if (!x.indices.empty() && x.indices.back() >= w.num_features()) {
        // Indices are sorted, so the last one is the offender if any is.
        throw DimensionError("feature index " + std::to_string(x.indices.back()) +
                                 " out of range for " + std::to_string(w.num_features()) +
                                 " features",
                             x.indices.back(), w.num_features());
    }
}

// max + log(sum exp(z - max)); safe against overflow for any finite z.
double log_sum_exp(const std::vector<double>& z) {
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - zmax);
    return zmax + std::log(sum);
}

}  // namespace

std::vector<double> logits(const WeightMatrix& w, const SparseVector& x) {
    check_features(w, x);
    const std::uint32_t k_count = w.num_classes();
    std::vector<double> z(k_count, 0.0);
    for (std::uint32_t k = 0; k < k_count; ++k) {
        const double* wk = w.row(k);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.indices.size(); ++i) {
            acc += wk[x.indices[i]] * x.values[i];
        }
        z[k] = acc;
    }
    return z;
}

ProbabilityVector softmax(const std::vector<double>& z) {
    if (z.empty()) {
        throw DimensionError("softmax input is empty", 0, 1);
    }
    double zmax = -std::numeric_limits<double>::infinity();
    for (double v : z) {
        if (!std::isfinite(v)) {
            throw NumericError("softmax input contains a non-finite logit");
        }
        zmax = std::max(zmax, v);
    }
    ProbabilityVector pi;
    pi.values.resize(z.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
        pi.values[k] = std::exp(z[k] - zmax);
        sum += pi.values[k];
    }
    const double floor = std::numeric_limits<double>::denorm_min();
    for (double& p : pi.values) {
        // exp underflows to 0 past gaps of ~745; keep entries strictly positive.
        p = std::max(p / sum, floor);
    }
    return pi;
}

SufficientVectorPair compute_sv(const WeightMatrix& w, const LabeledSample& s, double eta) {
    if (!(eta > 0.0) || !std::isfinite(eta)) {
        throw NumericError("step size must be positive and finite");
    }
    if (s.label >= w.num_classes()) {
        throw DimensionError("label out of range", s.label, w.num_classes());
    }
    ProbabilityVector pi = softmax(logits(w, s.features));
    SufficientVectorPair sv;
    sv.u.resize(w.num_classes());
    for (std::uint32_t k = 0; k < w.num_classes(); ++k) {
        const double residual = pi.values[k] - (k == s.label ? 1.0 : 0.0);
        sv.u[k] = -eta * residual;
    }
    sv.v = s.features;
    return sv;
}

void apply_sv(WeightMatrix& w, const SufficientVectorPair& sv) {
    if (sv.u.size() != w.num_classes()) {
        throw DimensionError("u length does not match class count", sv.u.size(),
                             w.num_classes());
    }
    if (!sv.v.indices.empty() && sv.v.indices.back() >= w.num_features()) {
        throw DimensionError("v index out of range", sv.v.indices.back(), w.num_features());
    }
    for (double uk : sv.u) {
        if (!std::isfinite(uk)) throw NumericError("u contains a non-finite value");
    }
    for (double vd : sv.v.values) {
        if (!std::isfinite(vd)) throw NumericError("v contains a non-finite value");
    }
    for (std::uint32_t k = 0; k < w.num_classes(); ++k) {
        const double uk = sv.u[k];
        if (uk == 0.0) continue;
        double* wk = w.row(k);
        for (std::size_t i = 0; i < sv.v.indices.size(); ++i) {
            wk[sv.v.indices[i]] += uk * sv.v.values[i];
        }
    }
}

double nll_loss(const WeightMatrix& w, std::span<const LabeledSample> data) {
    if (data.empty()) {
        throw Error("nll_loss: empty evaluation set");
    }
    double total = 0.0;
    for (const LabeledSample& s : data) {
        if (s.label >= w.num_classes()) {
            throw DimensionError("label out of range", s.label, w.num_classes());
        }
        std::vector<double> z = logits(w, s.features);
        total += log_sum_exp(z) - z[s.label];
    }
    return total / static_cast<double>(data.size());
}

std::uint32_t predict(const WeightMatrix& w, const SparseVector& x) {
    std::vector<double> z = logits(w, x);
    std::uint32_t best = 0;
    for (std::uint32_t k = 1; k < z.size(); ++k) {
        if (z[k] > z[best]) best = k;
    }
    return best;
}

double accuracy(const WeightMatrix& w, std::span<const LabeledSample> data) {
    if (data.empty()) {
        throw Error("accuracy: empty evaluation set");
    }
    std::size_t hits = 0;
    for (const LabeledSample& s : data) {
        if (predict(w, s.features) == s.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace svb
