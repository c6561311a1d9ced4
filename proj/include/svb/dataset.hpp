#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "svb/mlr.hpp"
#include "svb/rng.hpp"

namespace svb {

struct Dataset {
    std::uint32_t num_features = 0;  // D
    std::uint32_t num_classes = 0;   // K
    std::vector<LabeledSample> samples;

    std::size_t size() const noexcept { return samples.size(); }
};

// Read-only view of a worker's slice of a dataset.
struct Shard {
    std::uint16_t worker_id = 0;
    std::vector<std::uint32_t> sample_indices;

    std::size_t size() const noexcept { return sample_indices.size(); }
};

// LIBSVM-style text: "label idx:val idx:val ...", 0-based labels and feature
// indices, UTF-8, LF. D is inferred as 1 + max index and K as 1 + max label
// unless overridden. Malformed lines are reported with their line number.
Dataset load_libsvm(const std::string& path,
                    std::optional<std::uint32_t> expected_classes = std::nullopt,
                    std::optional<std::uint32_t> expected_features = std::nullopt);

// Values are printed with shortest round-trip precision.
void save_libsvm(const Dataset& ds, const std::string& path);

// Sample i belongs to worker (i mod num_workers); round-robin keeps the
// label mix of each shard close to the dataset's.
Shard partition(const Dataset& ds, std::uint32_t num_workers, std::uint32_t worker_id);

struct SyntheticProblem {
    Dataset data;
    WeightMatrix planted;
};

// Draws K well-separated class centers (random unit directions scaled by
// margin), samples features around them with N(0, 1/D) coordinate noise and
// labels every point by the planted model's argmax. Fully determined by seed.
SyntheticProblem gen_synthetic(std::uint32_t num_classes, std::uint32_t num_features,
                               std::uint32_t num_samples, std::uint64_t seed, double margin);

// Infinite uniform-with-replacement stream of dataset-level sample indices
// over one shard, reproducible from its seed.
class SampleStream {
public:
    SampleStream(const Shard& shard, std::uint64_t seed);

    std::uint32_t next();

private:
    std::vector<std::uint32_t> indices_;
    SplitMix64 rng_;
};

}  // namespace svb
