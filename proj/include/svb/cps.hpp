#pragma once

#include <cstdint>
#include <vector>

#include "svb/dataset.hpp"
#include "svb/mlr.hpp"
#include "svb/protocol.hpp"
#include "svb/transport.hpp"
#include "svb/worker.hpp"

namespace svb {

// Centralized parameter server baseline: workers push dense gradient
// matrices, the server adds them to the global matrix, and workers pull the
// full matrix back every tau steps.

// Server-side state machine, transport-agnostic so the deterministic
// lockstep driver and the threaded/TCP poll loops share one implementation.
class CpsServer {
public:
    CpsServer(std::uint32_t num_classes, std::uint32_t num_features, std::uint16_t num_workers,
              std::uint16_t server_id);

    // Handles one inbound message, replying through `link` when the message
    // is a pull request. Returns false once every worker has shut down.
    bool handle(const Message& msg, Transport& link);

    const WeightMatrix& weights() const noexcept { return weights_; }
    bool finished() const noexcept { return done_workers_ >= num_workers_; }

private:
    WeightMatrix weights_;
    std::uint16_t num_workers_;
    std::uint16_t server_id_;
    std::uint16_t done_workers_ = 0;
    std::uint64_t clock_ = 0;
};

// Poll loop over `link` until every worker signalled shutdown; returns the
// final global matrix.
WeightMatrix cps_server_run(Transport& link, std::uint32_t num_classes,
                            std::uint32_t num_features, std::uint16_t num_workers);

// Worker-side runtime. Each step computes the rank-1 update, materializes it
// as a dense gradient matrix, pushes it to the server, applies it locally,
// and every tau steps replaces the replica with a freshly pulled matrix.
class CpsWorker {
public:
    CpsWorker(std::uint16_t id, const Dataset& data, Shard shard, const TrainingConfig& cfg,
              std::uint16_t server_id);

    // One push (+ periodic pull, spinning on poll until the parameter
    // matrix arrives). The threaded drivers use this composite form.
    void step(Transport& link);

    // Granular pieces for the lockstep driver, which services the server
    // between calls instead of spinning.
    MatrixMessage push_step();
    bool wants_pull() const;
    ControlMessage make_pull_request() const;
    void adopt(const MatrixMessage& parameters);

    // Sends the shutdown control to the server.
    void finish(Transport& link);

    const WeightMatrix& replica() const noexcept { return replica_; }
    std::uint16_t id() const noexcept { return id_; }
    std::uint64_t local_clock() const noexcept { return clock_; }

private:
    void pull(Transport& link);

    std::uint16_t id_;
    const Dataset& data_;
    Shard shard_;
    TrainingConfig cfg_;
    std::uint16_t server_id_;
    WeightMatrix replica_;
    SampleStream stream_;
    std::uint64_t clock_ = 0;
};

// Single-process CPS experiment over loopback. lockstep=true serializes
// workers round-robin (tau forced by cfg.cps_tau); otherwise the server and
// each worker run on their own threads. Returns the server's final matrix
// plus per-worker results.
struct CpsRunResult {
    WeightMatrix server_weights;
    std::vector<WorkerResult> workers;
};

CpsRunResult run_cps(const Dataset& data, const TrainingConfig& cfg, std::uint16_t num_workers,
                     const Dataset* eval_data = nullptr);

// One CPS worker's full run over an externally built link (the multi-process
// TCP path): steps with push/pull, snapshots, shutdown.
WorkerResult run_cps_worker(const Dataset& data, const TrainingConfig& cfg,
                            std::uint16_t self_id, std::uint16_t num_workers,
                            std::uint16_t server_id, Transport& link,
                            const Dataset* eval_data = nullptr);

}  // namespace svb
