#include "svb/worker.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>
#include <utility>

#include "svb/queue.hpp"

namespace svb {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ms_since(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
}

}  // namespace

Mode parse_mode(const std::string& name) {
    if (name == "svb") return Mode::svb;
    if (name == "cps") return Mode::cps;
    if (name == "serial") return Mode::serial;
    throw ConfigError("unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
    switch (mode) {
        case Mode::svb: return "svb";
        case Mode::cps: return "cps";
        case Mode::serial: return "serial";
    }
    return "?";
}

void TrainingConfig::validate() const {
    if (!(eta0 > 0.0) || !std::isfinite(eta0)) throw ConfigError("eta0 must be positive");
    if (decay < 0.0 || !std::isfinite(decay)) throw ConfigError("decay must be nonnegative");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (eval_every < 1) throw ConfigError("eval-every must be >= 1");
    if (epsilon_u < 0.0 || !std::isfinite(epsilon_u)) {
        throw ConfigError("epsilon-u must be nonnegative");
    }
    if (queue_capacity < 1) throw ConfigError("queue capacity must be >= 1");
    if (cps_tau < 1) throw ConfigError("cps pull cadence must be >= 1");
}

double eta(std::uint64_t t, const TrainingConfig& cfg) {
    return cfg.eta0 / (1.0 + cfg.decay * static_cast<double>(t));
}

Worker::Worker(std::uint16_t id, const Dataset& data, Shard shard, const TrainingConfig& cfg)
    : id_(id),
      data_(data),
      shard_(std::move(shard)),
      cfg_(cfg),
      replica_(data.num_classes, data.num_features),
      stream_(shard_, worker_stream_seed(cfg.seed, id)) {}

SvMessage Worker::local_step() {
    const double step_size = eta(clock_, cfg_);
    const LabeledSample& sample = data_.samples[stream_.next()];
    SufficientVectorPair sv = compute_sv(replica_, sample, step_size);

    SvMessage msg;
    msg.sender_id = id_;
    msg.clock = clock_ + 1;
    if (cfg_.epsilon_u > 0.0) {
        msg.u_sparse = true;
        msg.u_coded = sparsify(sv.u, cfg_.epsilon_u);
    } else {
        msg.u_dense = std::move(sv.u);
    }
    msg.v = std::move(sv.v);

    // Apply through the message's own reconstruction so the local delta is
    // bit-identical to what every receiver computes.
    apply_sv(replica_, msg.to_pair());
    ++clock_;
    return msg;
}

void Worker::apply_remote(const SvMessage& msg) {
    if (msg.sender_id == id_) {
        throw TransportError("worker " + std::to_string(id_) + " received its own message", id_);
    }
    if (msg.num_classes() != replica_.num_classes() ||
        msg.num_features() != replica_.num_features()) {
        throw DimensionError("remote update shape mismatch", msg.num_classes(),
                             replica_.num_classes());
    }
    const std::uint64_t last = remote_clocks_[msg.sender_id];
    if (msg.clock <= last) {
        throw DuplicateUpdateError("duplicate update from sender " +
                                       std::to_string(msg.sender_id) + " at clock " +
                                       std::to_string(msg.clock),
                                   msg.sender_id, msg.clock);
    }
    apply_sv(replica_, msg.to_pair());
    remote_clocks_[msg.sender_id] = msg.clock;
    ++applied_remote_;
}

namespace {

std::span<const LabeledSample> eval_span(const Dataset& data, const Dataset* eval_data) {
    const Dataset& ds = eval_data ? *eval_data : data;
    return std::span<const LabeledSample>(ds.samples);
}

// Deterministic round-robin schedule on one thread: in every round each
// worker takes one local step and all peers apply it before the next worker
// moves. Replicas stay bit-identical across workers at round boundaries.
std::vector<WorkerResult> run_lockstep(const Dataset& data, const TrainingConfig& cfg,
                                       std::uint16_t num_workers, const Dataset* eval_data,
                                       LockstepObserver* observer) {
    LoopbackHub hub(num_workers);
    std::vector<Worker> workers;
    std::vector<std::unique_ptr<Transport>> links;
    workers.reserve(num_workers);
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        workers.emplace_back(p, data, partition(data, num_workers, p), cfg);
        links.push_back(hub.endpoint(p));
    }

    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    std::vector<RunMetrics> metrics(num_workers);
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        metrics[p].snapshots.push_back(
            take_snapshot(workers[p].replica(), eval, links[p]->counters(), ms_since(start), 0));
    }

    for (std::uint64_t round = 0; round < cfg.steps; ++round) {
        for (std::uint16_t p = 0; p < num_workers; ++p) {
            SvMessage msg = workers[p].local_step();
            links[p]->broadcast(Message(msg));
            if (observer && observer->on_local_step) {
                observer->on_local_step(msg, workers[p].replica());
            }
            for (std::uint16_t q = 0; q < num_workers; ++q) {
                if (q == p) continue;
                for (Message& received : links[q]->poll()) {
                    const auto& sv = std::get<SvMessage>(received);
                    workers[q].apply_remote(sv);
                    if (observer && observer->on_remote_apply) {
                        observer->on_remote_apply(q, sv, workers[q].replica());
                    }
                }
            }
        }
        const std::uint64_t done = round + 1;
        if (done % cfg.eval_every == 0 || done == cfg.steps) {
            for (std::uint16_t p = 0; p < num_workers; ++p) {
                metrics[p].snapshots.push_back(take_snapshot(
                    workers[p].replica(), eval, links[p]->counters(), ms_since(start), done));
            }
        }
    }

    std::vector<WorkerResult> results;
    results.reserve(num_workers);
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        results.push_back(WorkerResult{workers[p].replica(), std::move(metrics[p]),
                                       links[p]->counters(), workers[p].local_clock(),
                                       workers[p].applied_remote()});
    }
    return results;
}

// One worker's async runtime: the three activities of the worker design.
struct AsyncRuntime {
    AsyncRuntime(std::uint16_t id, const Dataset& data, Shard shard, const TrainingConfig& cfg,
                 Transport& link)
        : worker(id, data, std::move(shard), cfg),
          transport(link),
          input(cfg.queue_capacity),
          output(cfg.queue_capacity) {}

    Worker worker;
    Transport& transport;
    BoundedQueue<Message> input;
    BoundedQueue<Message> output;
    std::mutex replica_mu;
    std::atomic<bool> local_done{false};
    std::atomic<bool> remote_done{false};
    std::atomic<bool> failed{false};
    RunMetrics metrics;
    std::mutex metrics_mu;
    std::exception_ptr fault;
    std::mutex fault_mu;
    std::function<void()> fail_group;  // closes every runtime's queues

    void record_fault() {
        {
            std::lock_guard lock(fault_mu);
            if (!fault) fault = std::current_exception();
        }
        if (fail_group) fail_group();
    }

    void shut_down() {
        failed.store(true);
        input.close();
        output.close();
    }
};

void async_local_loop(AsyncRuntime& rt, const TrainingConfig& cfg,
                      std::span<const LabeledSample> eval, Clock::time_point start) {
    try {
        {
            std::lock_guard lock(rt.replica_mu);
            Snapshot s = take_snapshot(rt.worker.replica(), eval, rt.transport.counters(),
                                       ms_since(start), 0);
            std::lock_guard mlock(rt.metrics_mu);
            rt.metrics.snapshots.push_back(s);
        }
        for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
            SvMessage msg;
            {
                std::lock_guard lock(rt.replica_mu);
                msg = rt.worker.local_step();
            }
            if (!rt.output.push(Message(std::move(msg)))) {
                rt.local_done.store(true);  // queue closed by a fault elsewhere
                return;
            }
            if (t % cfg.eval_every == 0 || t == cfg.steps) {
                std::lock_guard lock(rt.replica_mu);
                Snapshot s = take_snapshot(rt.worker.replica(), eval, rt.transport.counters(),
                                           ms_since(start), t);
                std::lock_guard mlock(rt.metrics_mu);
                rt.metrics.snapshots.push_back(s);
            }
        }
        rt.output.push(Message(ControlMessage{rt.worker.id(), rt.worker.local_clock(),
                                              kControlShutdown}));
        rt.local_done.store(true);
    } catch (...) {
        rt.local_done.store(true);
        rt.record_fault();
    }
}

void async_remote_loop(AsyncRuntime& rt, std::uint16_t num_workers) {
    try {
        std::uint16_t done_peers = 0;
        while (done_peers + 1 < num_workers) {
            auto item = rt.input.pop();
            if (!item) return;  // closed by a fault
            if (const auto* ctrl = std::get_if<ControlMessage>(&*item)) {
                if (ctrl->code == kControlShutdown) ++done_peers;
                continue;
            }
            std::lock_guard lock(rt.replica_mu);
            rt.worker.apply_remote(std::get<SvMessage>(*item));
        }
    } catch (...) {
        rt.record_fault();
    }
    rt.remote_done.store(true);
}

void async_comm_loop(AsyncRuntime& rt) {
    try {
        bool flushed = false;
        while (!rt.failed.load()) {
            bool idle = true;
            while (auto msg = rt.output.try_pop()) {
                rt.transport.broadcast(*msg);
                idle = false;
            }
            if (rt.local_done.load() && rt.output.size() == 0) flushed = true;
            for (Message& msg : rt.transport.poll()) {
                if (!rt.input.push(std::move(msg))) return;
                idle = false;
            }
            if (flushed && rt.remote_done.load()) return;
            if (idle) std::this_thread::sleep_for(std::chrono::microseconds(50));
        }
    } catch (...) {
        rt.record_fault();
        rt.remote_done.store(true);
    }
}

std::vector<WorkerResult> run_async(const Dataset& data, const TrainingConfig& cfg,
                                    std::uint16_t num_workers, const Dataset* eval_data) {
    LoopbackHub hub(num_workers);
    std::vector<std::unique_ptr<Transport>> links;
    std::vector<std::unique_ptr<AsyncRuntime>> runtimes;
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        links.push_back(hub.endpoint(p));
        runtimes.push_back(std::make_unique<AsyncRuntime>(
            p, data, partition(data, num_workers, p), cfg, *links[p]));
    }
    // A fault anywhere unblocks every thread of every worker.
    for (auto& rt : runtimes) {
        rt->fail_group = [&runtimes] {
            for (auto& other : runtimes) other->shut_down();
        };
    }

    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    std::vector<std::thread> threads;
    for (auto& rt : runtimes) {
        threads.emplace_back(async_local_loop, std::ref(*rt), std::cref(cfg), eval, start);
        threads.emplace_back(async_remote_loop, std::ref(*rt), num_workers);
        threads.emplace_back(async_comm_loop, std::ref(*rt));
    }
    for (auto& t : threads) t.join();

    for (auto& rt : runtimes) {
        if (rt->fault) {
            RunMetrics partial;
            {
                std::lock_guard lock(rt->metrics_mu);
                partial = rt->metrics;
            }
            try {
                std::rethrow_exception(rt->fault);
            } catch (const std::exception& e) {
                throw RunError(std::string("worker ") + std::to_string(rt->worker.id()) +
                                   " failed: " + e.what(),
                               std::move(partial));
            }
        }
    }

    std::vector<WorkerResult> results;
    for (auto& rt : runtimes) {
        Snapshot final_snapshot =
            take_snapshot(rt->worker.replica(), eval, rt->transport.counters(),
                          ms_since(start), rt->worker.local_clock());
        rt->metrics.snapshots.push_back(final_snapshot);
        results.push_back(WorkerResult{rt->worker.replica(), std::move(rt->metrics),
                                       rt->transport.counters(), rt->worker.local_clock(),
                                       rt->worker.applied_remote()});
    }
    return results;
}

}  // namespace

WorkerResult run_serial(const Dataset& data, const TrainingConfig& cfg,
                        const Dataset* eval_data) {
    cfg.validate();
    Worker worker(0, data, partition(data, 1, 0), cfg);
    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    const ByteCounters zero{};

    RunMetrics metrics;
    metrics.snapshots.push_back(take_snapshot(worker.replica(), eval, zero, ms_since(start), 0));
    for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
        worker.local_step();
        if (t % cfg.eval_every == 0 || t == cfg.steps) {
            metrics.snapshots.push_back(
                take_snapshot(worker.replica(), eval, zero, ms_since(start), t));
        }
    }
    return WorkerResult{worker.replica(), std::move(metrics), zero, worker.local_clock(), 0};
}

std::vector<WorkerResult> run_svb(const Dataset& data, const TrainingConfig& cfg,
                                  std::uint16_t num_workers, const Dataset* eval_data,
                                  LockstepObserver* observer) {
    cfg.validate();
    if (num_workers == 0) throw ConfigError("need at least one worker");
    if (observer && !cfg.lockstep) {
        throw ConfigError("step observers require the lockstep schedule");
    }
    if (cfg.lockstep) {
        return run_lockstep(data, cfg, num_workers, eval_data, observer);
    }
    return run_async(data, cfg, num_workers, eval_data);
}

WorkerResult run_svb_worker(const Dataset& data, const TrainingConfig& cfg,
                            std::uint16_t self_id, std::uint16_t num_workers, Transport& link,
                            const Dataset* eval_data) {
    cfg.validate();
    if (num_workers == 0 || self_id >= num_workers) {
        throw ConfigError("worker id " + std::to_string(self_id) + " out of range for " +
                          std::to_string(num_workers) + " workers");
    }
    AsyncRuntime rt(self_id, data, partition(data, num_workers, self_id), cfg, link);
    rt.fail_group = [&rt] { rt.shut_down(); };

    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    std::thread local(async_local_loop, std::ref(rt), std::cref(cfg), eval, start);
    std::thread remote(async_remote_loop, std::ref(rt), num_workers);
    std::thread comm(async_comm_loop, std::ref(rt));
    local.join();
    remote.join();
    comm.join();

    if (rt.fault) {
        RunMetrics partial;
        {
            std::lock_guard lock(rt.metrics_mu);
            partial = rt.metrics;
        }
        try {
            std::rethrow_exception(rt.fault);
        } catch (const std::exception& e) {
            throw RunError(std::string("worker ") + std::to_string(self_id) + " failed: " +
                               e.what(),
                           std::move(partial));
        }
    }

    rt.metrics.snapshots.push_back(take_snapshot(rt.worker.replica(), eval,
                                                 rt.transport.counters(), ms_since(start),
                                                 rt.worker.local_clock()));
    return WorkerResult{rt.worker.replica(), std::move(rt.metrics), rt.transport.counters(),
                        rt.worker.local_clock(), rt.worker.applied_remote()};
}

WeightMatrix interleaved_reference(const Dataset& data, const TrainingConfig& cfg,
                                   std::uint16_t num_workers) {
    cfg.validate();
    WeightMatrix w(data.num_classes, data.num_features);
    std::vector<SampleStream> streams;
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        streams.emplace_back(partition(data, num_workers, p), worker_stream_seed(cfg.seed, p));
    }
    for (std::uint64_t round = 0; round < cfg.steps; ++round) {
        for (std::uint16_t p = 0; p < num_workers; ++p) {
            const LabeledSample& sample = data.samples[streams[p].next()];
            SufficientVectorPair sv = compute_sv(w, sample, eta(round, cfg));
            if (cfg.epsilon_u > 0.0) {
                sv.u = sparsify(sv.u, cfg.epsilon_u).to_dense();
            }
            apply_sv(w, sv);
        }
    }
    return w;
}

}  // namespace svb
