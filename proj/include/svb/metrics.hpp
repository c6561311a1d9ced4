#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "svb/mlr.hpp"
#include "svb/transport.hpp"

namespace svb {

struct Snapshot {
    std::uint64_t wall_ms = 0;  // since run start
    std::uint64_t step = 0;     // local step index
    double loss = 0.0;
    double accuracy = 0.0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
};

struct RunMetrics {
    std::vector<Snapshot> snapshots;
};

Snapshot take_snapshot(const WeightMatrix& replica, std::span<const LabeledSample> eval_set,
                       const ByteCounters& counters, std::uint64_t wall_ms, std::uint64_t step);

// Header "wall_ms,step,loss,accuracy,bytes_sent,bytes_received", one row per
// snapshot, reals with round-trip-safe precision, LF line endings.
void write_csv(const RunMetrics& metrics, const std::string& path);

RunMetrics read_csv(const std::string& path);

}  // namespace svb
