// Test-only reference implementations. These stay independent of the code
// paths they check: dense long-double arithmetic, no sparse shortcuts, no
// shared helpers with the library.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "svb/mlr.hpp"
#include "svb/rng.hpp"

namespace oracle {

inline std::vector<double> dense_features(const svb::SparseVector& x) {
    std::vector<double> out(x.dim, 0.0);
    for (std::size_t i = 0; i < x.indices.size(); ++i) out[x.indices[i]] = x.values[i];
    return out;
}

inline std::vector<long double> logits_ld(const svb::WeightMatrix& w,
                                          const std::vector<double>& x) {
    std::vector<long double> z(w.num_classes(), 0.0L);
    for (std::uint32_t k = 0; k < w.num_classes(); ++k) {
        long double acc = 0.0L;
        for (std::uint32_t d = 0; d < w.num_features(); ++d) {
            acc += static_cast<long double>(w.at(k, d)) * static_cast<long double>(x[d]);
        }
        z[k] = acc;
    }
    return z;
}

inline std::vector<long double> softmax_ld(const std::vector<long double>& z) {
    long double zmax = z[0];
    for (long double v : z) zmax = std::max(zmax, v);
    long double sum = 0.0L;
    std::vector<long double> p(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) {
        p[k] = std::exp(z[k] - zmax);
        sum += p[k];
    }
    for (long double& v : p) v /= sum;
    return p;
}

inline std::vector<long double> softmax_ld(const std::vector<double>& z) {
    return softmax_ld(std::vector<long double>(z.begin(), z.end()));
}

// Per-sample negative log likelihood, long-double log-sum-exp.
inline long double sample_nll_ld(const svb::WeightMatrix& w, const std::vector<double>& x,
                                 std::uint32_t label) {
    std::vector<long double> z = logits_ld(w, x);
    long double zmax = z[0];
    for (long double v : z) zmax = std::max(zmax, v);
    long double sum = 0.0L;
    for (long double v : z) sum += std::exp(v - zmax);
    return zmax + std::log(sum) - z[label];
}

inline long double mean_nll_ld(const svb::WeightMatrix& w,
                               const std::vector<svb::LabeledSample>& data) {
    long double total = 0.0L;
    for (const auto& s : data) {
        total += sample_nll_ld(w, dense_features(s.features), s.label);
    }
    return total / static_cast<long double>(data.size());
}

// Central finite differences of the per-sample NLL with respect to W.
inline std::vector<double> fd_gradient(const svb::WeightMatrix& w, const svb::LabeledSample& s,
                                       double h) {
    const std::vector<double> x = dense_features(s.features);
    std::vector<double> grad(static_cast<std::size_t>(w.num_classes()) * w.num_features());
    svb::WeightMatrix probe = w;
    for (std::uint32_t k = 0; k < w.num_classes(); ++k) {
        for (std::uint32_t d = 0; d < w.num_features(); ++d) {
            const double saved = probe.at(k, d);
            probe.at(k, d) = saved + h;
            const long double up = sample_nll_ld(probe, x, s.label);
            probe.at(k, d) = saved - h;
            const long double down = sample_nll_ld(probe, x, s.label);
            probe.at(k, d) = saved;
            grad[static_cast<std::size_t>(k) * w.num_features() + d] =
                static_cast<double>((up - down) / (2.0L * h));
        }
    }
    return grad;
}

// One dense SGD step, its own arithmetic order: W[k][d] -= eta * (residual * x[d]).
inline svb::WeightMatrix dense_sgd_step(const svb::WeightMatrix& w, const svb::LabeledSample& s,
                                        double eta) {
    const std::vector<double> x = dense_features(s.features);
    std::vector<long double> z = logits_ld(w, x);
    std::vector<long double> pi = softmax_ld(z);
    svb::WeightMatrix next = w;
    for (std::uint32_t k = 0; k < w.num_classes(); ++k) {
        const double residual =
            static_cast<double>(pi[k]) - (k == s.label ? 1.0 : 0.0);
        for (std::uint32_t d = 0; d < w.num_features(); ++d) {
            next.at(k, d) -= eta * (residual * x[d]);
        }
    }
    return next;
}

// Uniform random dense problem instance for property tests.
struct RandomInstance {
    svb::WeightMatrix weights;
    svb::LabeledSample sample;
};

inline RandomInstance random_instance(svb::SplitMix64& rng, std::uint32_t max_classes,
                                      std::uint32_t max_features) {
    const std::uint32_t k_count = 2 + static_cast<std::uint32_t>(rng.next_below(max_classes - 1));
    const std::uint32_t d_count = 2 + static_cast<std::uint32_t>(rng.next_below(max_features - 1));
    svb::WeightMatrix w(k_count, d_count);
    for (std::uint32_t k = 0; k < k_count; ++k) {
        for (std::uint32_t d = 0; d < d_count; ++d) {
            w.at(k, d) = 2.0 * rng.next_double() - 1.0;
        }
    }
    svb::LabeledSample s;
    s.features.dim = d_count;
    for (std::uint32_t d = 0; d < d_count; ++d) {
        if (rng.next_double() < 0.7) {
            s.features.indices.push_back(d);
            s.features.values.push_back(2.0 * rng.next_double() - 1.0);
        }
    }
    if (s.features.indices.empty()) {
        s.features.indices.push_back(0);
        s.features.values.push_back(1.0);
    }
    s.label = static_cast<std::uint32_t>(rng.next_below(k_count));
    return RandomInstance{std::move(w), std::move(s)};
}

}  // namespace oracle
