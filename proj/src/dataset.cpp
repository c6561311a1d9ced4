#include "svb/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "svb/errors.hpp"

namespace svb {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::uint32_t parse_u32(std::string_view tok, std::size_t line, const char* what) {
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ParseError("line " + std::to_string(line) + ": bad " + what + " '" +
                             std::string(tok) + "'",
                         line);
    }
    return v;
}

double parse_f64(std::string_view tok, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line) + ": bad value '" + std::string(tok) +
                             "'",
                         line);
    }
    return v;
}

void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

}  // namespace

Dataset load_libsvm(const std::string& path, std::optional<std::uint32_t> expected_classes,
                    std::optional<std::uint32_t> expected_features) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    Dataset ds;
    std::uint32_t max_index = 0;
    bool any_index = false;
    std::uint32_t max_label = 0;

    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line = trim(raw);
        if (line.empty() || line.front() == '#') continue;

        LabeledSample sample;
        std::size_t pos = line.find(' ');
        std::string_view label_tok = line.substr(0, pos);
        sample.label = parse_u32(label_tok, lineno, "label");
        max_label = std::max(max_label, sample.label);
        if (expected_classes && sample.label >= *expected_classes) {
            throw ParseError("line " + std::to_string(lineno) + ": label " +
                                 std::to_string(sample.label) + " >= class count " +
                                 std::to_string(*expected_classes),
                             lineno);
        }

        std::uint32_t prev_index = 0;
        bool first = true;
        while (pos != std::string_view::npos) {
            std::size_t start = pos + 1;
            pos = line.find(' ', start);
            std::string_view tok = pos == std::string_view::npos
                                       ? line.substr(start)
                                       : line.substr(start, pos - start);
            if (tok.empty()) continue;
            std::size_t colon = tok.find(':');
            if (colon == std::string_view::npos) {
                throw ParseError("line " + std::to_string(lineno) + ": expected idx:val, got '" +
                                     std::string(tok) + "'",
                                 lineno);
            }
            std::uint32_t idx = parse_u32(tok.substr(0, colon), lineno, "feature index");
            double val = parse_f64(tok.substr(colon + 1), lineno);
            if (!first && idx <= prev_index) {
                throw ParseError("line " + std::to_string(lineno) +
                                     ": feature indices not strictly increasing at " +
                                     std::to_string(idx),
                                 lineno);
            }
            if (expected_features && idx >= *expected_features) {
                throw ParseError("line " + std::to_string(lineno) + ": feature index " +
                                     std::to_string(idx) + " >= feature count " +
                                     std::to_string(*expected_features),
                                 lineno);
            }
            prev_index = idx;
            first = false;
            max_index = std::max(max_index, idx);
            any_index = true;
            sample.features.indices.push_back(idx);
            sample.features.values.push_back(val);
        }
        ds.samples.push_back(std::move(sample));
    }
    if (ds.samples.empty()) {
        throw ParseError("'" + path + "' contains no samples");
    }

    ds.num_classes = expected_classes.value_or(max_label + 1);
    ds.num_features = expected_features.value_or(any_index ? max_index + 1 : 1);
    for (auto& s : ds.samples) s.features.dim = ds.num_features;
    return ds;
}

void save_libsvm(const Dataset& ds, const std::string& path) {
    std::string out;
    for (const LabeledSample& s : ds.samples) {
        out += std::to_string(s.label);
        for (std::size_t i = 0; i < s.features.indices.size(); ++i) {
            out += ' ';
            out += std::to_string(s.features.indices[i]);
            out += ':';
            append_number(out, s.features.values[i]);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << out) || !f.flush()) {
        throw IoError("cannot write '" + path + "'");
    }
}

Shard partition(const Dataset& ds, std::uint32_t num_workers, std::uint32_t worker_id) {
    const std::size_t n = ds.samples.size();
    if (num_workers == 0 || num_workers > n) {
        throw DimensionError("worker count must be in [1, sample count]", num_workers, n);
    }
    if (worker_id >= num_workers) {
        throw DimensionError("worker id out of range", worker_id, num_workers);
    }
    Shard shard;
    shard.worker_id = static_cast<std::uint16_t>(worker_id);
    for (std::size_t i = worker_id; i < n; i += num_workers) {
        shard.sample_indices.push_back(static_cast<std::uint32_t>(i));
    }
    return shard;
}

SyntheticProblem gen_synthetic(std::uint32_t num_classes, std::uint32_t num_features,
                               std::uint32_t num_samples, std::uint64_t seed, double margin) {
    if (num_classes < 2 || num_features < num_classes || num_samples < num_classes) {
        throw DimensionError("gen_synthetic requires K >= 2, D >= K, N >= K", num_classes,
                             num_features);
    }
    if (!(margin > 0.0) || !std::isfinite(margin)) {
        throw NumericError("margin must be positive and finite");
    }
    SplitMix64 rng(seed);

    WeightMatrix planted(num_classes, num_features);
    for (std::uint32_t k = 0; k < num_classes; ++k) {
        double* wk = planted.row(k);
        double norm_sq = 0.0;
        for (std::uint32_t d = 0; d < num_features; ++d) {
            wk[d] = rng.next_normal();
            norm_sq += wk[d] * wk[d];
        }
        const double scale = margin / std::sqrt(norm_sq);
        for (std::uint32_t d = 0; d < num_features; ++d) wk[d] *= scale;
    }

    const double noise = 1.0 / std::sqrt(static_cast<double>(num_features));
    Dataset ds;
    ds.num_classes = num_classes;
    ds.num_features = num_features;
    ds.samples.reserve(num_samples);
    std::vector<double> x(num_features);
    for (std::uint32_t i = 0; i < num_samples; ++i) {
        const std::uint32_t k = static_cast<std::uint32_t>(rng.next_below(num_classes));
        const double* center = planted.row(k);
        for (std::uint32_t d = 0; d < num_features; ++d) {
            x[d] = center[d] + noise * rng.next_normal();
        }
        LabeledSample s;
        s.features = SparseVector::from_dense(x);
        s.label = predict(planted, s.features);
        ds.samples.push_back(std::move(s));
    }
    return SyntheticProblem{std::move(ds), std::move(planted)};
}

SampleStream::SampleStream(const Shard& shard, std::uint64_t seed)
    : indices_(shard.sample_indices), rng_(seed) {
    if (indices_.empty()) {
        throw Error("sample stream over an empty shard");
    }
}

std::uint32_t SampleStream::next() {
    return indices_[rng_.next_below(indices_.size())];
}

}  // namespace svb
