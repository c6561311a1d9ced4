#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "svb/dataset.hpp"
#include "svb/errors.hpp"
#include "svb/metrics.hpp"
#include "svb/mlr.hpp"
#include "svb/protocol.hpp"
#include "svb/transport.hpp"

namespace svb {

enum class Mode { svb, cps, serial };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct TrainingConfig {
    double eta0 = 0.1;
    double decay = 0.0;                  // eta(t) = eta0 / (1 + decay * t)
    std::uint64_t steps = 1000;          // local SGD steps per worker
    std::uint64_t eval_every = 100;
    double epsilon_u = 0.0;              // u sparsification threshold, 0 = off
    Mode mode = Mode::serial;
    bool lockstep = false;
    std::uint64_t seed = 1;
    std::size_t queue_capacity = 1024;
    std::uint64_t cps_tau = 1;           // pull cadence of the CPS baseline

    void validate() const;
};

double eta(std::uint64_t t, const TrainingConfig& cfg);

// Per-worker sample stream seed; identical across modes so equivalence
// tests can force identical draws.
inline std::uint64_t worker_stream_seed(std::uint64_t seed, std::uint16_t worker_id) {
    return derive_seed(seed, worker_id);
}

// One training participant: a parameter replica, a shard and a sample
// stream. Pure state machine; scheduling and locking live in the drivers.
class Worker {
public:
    Worker(std::uint16_t id, const Dataset& data, Shard shard, const TrainingConfig& cfg);

    // Draws a sample, computes the sufficient vectors with eta(t), applies
    // the update to the local replica through the same reconstruction path
    // receivers use, and returns the message bound for the output queue.
    SvMessage local_step();

    // Applies a peer's rank-1 update; rejects duplicate (sender, clock).
    void apply_remote(const SvMessage& msg);

    std::uint16_t id() const noexcept { return id_; }
    const WeightMatrix& replica() const noexcept { return replica_; }
    std::uint64_t local_clock() const noexcept { return clock_; }
    std::uint64_t applied_remote() const noexcept { return applied_remote_; }

private:
    std::uint16_t id_;
    const Dataset& data_;
    Shard shard_;
    TrainingConfig cfg_;
    WeightMatrix replica_;
    SampleStream stream_;
    std::uint64_t clock_ = 0;
    std::uint64_t applied_remote_ = 0;
    std::unordered_map<std::uint16_t, std::uint64_t> remote_clocks_;
};

struct WorkerResult {
    WeightMatrix weights;
    RunMetrics metrics;
    ByteCounters counters;
    std::uint64_t applied_local = 0;
    std::uint64_t applied_remote = 0;
};

// Run failure carrying whatever snapshots were taken before the fault.
class RunError : public Error {
public:
    RunError(std::string what, RunMetrics partial)
        : Error(std::move(what)), partial_(std::move(partial)) {}
    const RunMetrics& partial_metrics() const noexcept { return partial_; }

private:
    RunMetrics partial_;
};

// Instrumentation hooks for the deterministic lockstep schedule.
struct LockstepObserver {
    // After the sender applied its own step and broadcast the message.
    std::function<void(const SvMessage&, const WeightMatrix& sender_replica)> on_local_step;
    // After `receiver` applied the decoded message.
    std::function<void(std::uint16_t receiver, const SvMessage&, const WeightMatrix& receiver_replica)>
        on_remote_apply;
};

// Serial SGD on the whole dataset; identical update path to a 1-worker mesh.
WorkerResult run_serial(const Dataset& data, const TrainingConfig& cfg,
                        const Dataset* eval_data = nullptr);

// Peer mesh over in-process loopback. lockstep=true runs a deterministic
// round-robin schedule on one thread; otherwise each worker runs the three
// activities (local update, remote update, communication) on its own threads.
std::vector<WorkerResult> run_svb(const Dataset& data, const TrainingConfig& cfg,
                                  std::uint16_t num_workers, const Dataset* eval_data = nullptr,
                                  LockstepObserver* observer = nullptr);

// One worker's three-activity runtime over an externally built transport
// (the multi-process TCP path). Always asynchronous.
WorkerResult run_svb_worker(const Dataset& data, const TrainingConfig& cfg,
                            std::uint16_t self_id, std::uint16_t num_workers, Transport& link,
                            const Dataset* eval_data = nullptr);

// Single-process reference: one weight matrix, the per-worker sample streams
// interleaved in round order through plain compute/apply calls. The bit-exact
// target for lockstep SVB and lockstep CPS.
WeightMatrix interleaved_reference(const Dataset& data, const TrainingConfig& cfg,
                                   std::uint16_t num_workers);

}  // namespace svb
