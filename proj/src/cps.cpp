#include "svb/cps.hpp"

#include <chrono>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>

namespace svb {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t ms_since(Clock::time_point start) {
    return static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start).count());
}

}  // namespace

CpsServer::CpsServer(std::uint32_t num_classes, std::uint32_t num_features,
                     std::uint16_t num_workers, std::uint16_t server_id)
    : weights_(num_classes, num_features), num_workers_(num_workers), server_id_(server_id) {}

bool CpsServer::handle(const Message& msg, Transport& link) {
    if (const auto* mm = std::get_if<MatrixMessage>(&msg)) {
        if (mm->kind != MessageKind::gradient_push) {
            throw TransportError("parameter server expected a gradient push", mm->sender_id);
        }
        if (mm->num_classes != weights_.num_classes() ||
            mm->num_features != weights_.num_features()) {
            throw DimensionError("gradient shape mismatch at server", mm->num_classes,
                                 weights_.num_classes());
        }
        auto cells = weights_.values();
        for (std::size_t i = 0; i < cells.size(); ++i) {
            cells[i] += mm->values[i];
        }
    } else if (const auto* cm = std::get_if<ControlMessage>(&msg)) {
        if (cm->code == kControlPullRequest) {
            MatrixMessage reply;
            reply.sender_id = server_id_;
            reply.clock = ++clock_;
            reply.kind = MessageKind::parameter_push;
            reply.num_classes = weights_.num_classes();
            reply.num_features = weights_.num_features();
            reply.values.assign(weights_.values().begin(), weights_.values().end());
            link.send(cm->sender_id, Message(std::move(reply)));
        } else if (cm->code == kControlShutdown) {
            ++done_workers_;
        }
    } else {
        throw TransportError("unexpected sufficient-vector message at parameter server");
    }
    return !finished();
}

WeightMatrix cps_server_run(Transport& link, std::uint32_t num_classes,
                            std::uint32_t num_features, std::uint16_t num_workers) {
    CpsServer server(num_classes, num_features, num_workers, link.self_id());
    while (!server.finished()) {
        bool idle = true;
        for (Message& msg : link.poll()) {
            server.handle(msg, link);
            idle = false;
        }
        if (idle) std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
    return server.weights();
}

CpsWorker::CpsWorker(std::uint16_t id, const Dataset& data, Shard shard,
                     const TrainingConfig& cfg, std::uint16_t server_id)
    : id_(id),
      data_(data),
      shard_(std::move(shard)),
      cfg_(cfg),
      server_id_(server_id),
      replica_(data.num_classes, data.num_features),
      stream_(shard_, worker_stream_seed(cfg.seed, id)) {}

MatrixMessage CpsWorker::push_step() {
    const double step_size = eta(clock_, cfg_);
    const LabeledSample& sample = data_.samples[stream_.next()];
    SufficientVectorPair sv = compute_sv(replica_, sample, step_size);

    MatrixMessage grad;
    grad.sender_id = id_;
    grad.clock = clock_ + 1;
    grad.kind = MessageKind::gradient_push;
    grad.num_classes = replica_.num_classes();
    grad.num_features = replica_.num_features();
    grad.values.assign(static_cast<std::size_t>(grad.num_classes) * grad.num_features, 0.0);
    for (std::uint32_t k = 0; k < grad.num_classes; ++k) {
        const double uk = sv.u[k];
        if (uk == 0.0) continue;
        double* row = grad.values.data() + static_cast<std::size_t>(k) * grad.num_features;
        for (std::size_t i = 0; i < sv.v.indices.size(); ++i) {
            row[sv.v.indices[i]] = uk * sv.v.values[i];
        }
    }

    apply_sv(replica_, sv);
    ++clock_;
    return grad;
}

bool CpsWorker::wants_pull() const { return clock_ % cfg_.cps_tau == 0; }

ControlMessage CpsWorker::make_pull_request() const {
    return ControlMessage{id_, clock_, kControlPullRequest};
}

void CpsWorker::adopt(const MatrixMessage& parameters) {
    if (parameters.kind != MessageKind::parameter_push ||
        parameters.num_classes != replica_.num_classes() ||
        parameters.num_features != replica_.num_features()) {
        throw DimensionError("pulled matrix does not match replica shape",
                             parameters.num_classes, replica_.num_classes());
    }
    auto cells = replica_.values();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        cells[i] = parameters.values[i];
    }
}

void CpsWorker::pull(Transport& link) {
    link.send(server_id_, Message(make_pull_request()));
    for (;;) {
        for (Message& msg : link.poll()) {
            if (const auto* mm = std::get_if<MatrixMessage>(&msg)) {
                adopt(*mm);
                return;
            }
            throw TransportError("cps worker expected a parameter matrix", id_);
        }
        std::this_thread::sleep_for(std::chrono::microseconds(50));
    }
}

void CpsWorker::step(Transport& link) {
    MatrixMessage grad = push_step();
    link.send(server_id_, Message(std::move(grad)));
    if (wants_pull()) pull(link);
}

void CpsWorker::finish(Transport& link) {
    link.send(server_id_, Message(ControlMessage{id_, clock_, kControlShutdown}));
}

namespace {

std::span<const LabeledSample> eval_span(const Dataset& data, const Dataset* eval_data) {
    const Dataset& ds = eval_data ? *eval_data : data;
    return std::span<const LabeledSample>(ds.samples);
}

// Full worker run over an established link: snapshots, steps, shutdown.
WorkerResult run_cps_worker_over(CpsWorker& worker, const TrainingConfig& cfg, Transport& link,
                                 std::span<const LabeledSample> eval, Clock::time_point start) {
    RunMetrics metrics;
    metrics.snapshots.push_back(
        take_snapshot(worker.replica(), eval, link.counters(), ms_since(start), 0));
    for (std::uint64_t t = 1; t <= cfg.steps; ++t) {
        worker.step(link);
        if (t % cfg.eval_every == 0 || t == cfg.steps) {
            metrics.snapshots.push_back(
                take_snapshot(worker.replica(), eval, link.counters(), ms_since(start), t));
        }
    }
    worker.finish(link);
    return WorkerResult{worker.replica(), std::move(metrics), link.counters(),
                        worker.local_clock(), 0};
}

// Deterministic rotation. Each worker's turn pulls the current global
// matrix first, so updates are computed from the state containing every
// earlier update in the forced global order; with tau=1 the trajectory is
// bit-identical to lockstep SVB and the interleaved serial reference.
CpsRunResult run_cps_lockstep(const Dataset& data, const TrainingConfig& cfg,
                              std::uint16_t num_workers, const Dataset* eval_data) {
    const std::uint16_t server_id = num_workers;
    LoopbackHub hub(static_cast<std::uint16_t>(num_workers + 1));
    auto server_link = hub.endpoint(server_id);
    CpsServer server(data.num_classes, data.num_features, num_workers, server_id);

    std::vector<CpsWorker> workers;
    std::vector<std::unique_ptr<Transport>> links;
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        workers.emplace_back(p, data, partition(data, num_workers, p), cfg, server_id);
        links.push_back(hub.endpoint(p));
    }

    auto service_server = [&] {
        for (Message& msg : server_link->poll()) server.handle(msg, *server_link);
    };
    auto pull_now = [&](std::uint16_t p) {
        links[p]->send(server_id, Message(workers[p].make_pull_request()));
        service_server();
        for (Message& msg : links[p]->poll()) {
            workers[p].adopt(std::get<MatrixMessage>(msg));
        }
    };

    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    std::vector<RunMetrics> metrics(num_workers);
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        metrics[p].snapshots.push_back(
            take_snapshot(workers[p].replica(), eval, links[p]->counters(), ms_since(start), 0));
    }

    for (std::uint64_t round = 0; round < cfg.steps; ++round) {
        for (std::uint16_t p = 0; p < num_workers; ++p) {
            if (workers[p].wants_pull()) pull_now(p);
            MatrixMessage grad = workers[p].push_step();
            links[p]->send(server_id, Message(std::move(grad)));
            service_server();
        }
        const std::uint64_t done = round + 1;
        if (done % cfg.eval_every == 0 || done == cfg.steps) {
            for (std::uint16_t p = 0; p < num_workers; ++p) {
                metrics[p].snapshots.push_back(take_snapshot(
                    workers[p].replica(), eval, links[p]->counters(), ms_since(start), done));
            }
        }
    }

    // Final pulls so every replica equals the completed global matrix.
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        pull_now(p);
        workers[p].finish(*links[p]);
    }
    service_server();

    CpsRunResult result{server.weights(), {}};
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        result.workers.push_back(WorkerResult{workers[p].replica(), std::move(metrics[p]),
                                              links[p]->counters(), workers[p].local_clock(), 0});
    }
    return result;
}

CpsRunResult run_cps_async(const Dataset& data, const TrainingConfig& cfg,
                           std::uint16_t num_workers, const Dataset* eval_data) {
    const std::uint16_t server_id = num_workers;
    LoopbackHub hub(static_cast<std::uint16_t>(num_workers + 1));
    auto server_link = hub.endpoint(server_id);

    std::vector<CpsWorker> workers;
    std::vector<std::unique_ptr<Transport>> links;
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        workers.emplace_back(p, data, partition(data, num_workers, p), cfg, server_id);
        links.push_back(hub.endpoint(p));
    }

    const auto eval = eval_span(data, eval_data);
    const auto start = Clock::now();
    std::mutex fault_mu;
    std::exception_ptr fault;
    auto record = [&](std::exception_ptr e) {
        std::lock_guard lock(fault_mu);
        if (!fault) fault = e;
    };

    WeightMatrix server_weights(data.num_classes, data.num_features);
    std::thread server_thread([&] {
        try {
            server_weights = cps_server_run(*server_link, data.num_classes, data.num_features,
                                            num_workers);
        } catch (...) {
            record(std::current_exception());
        }
    });

    std::vector<std::optional<WorkerResult>> results(num_workers);
    std::vector<std::thread> worker_threads;
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        worker_threads.emplace_back([&, p] {
            try {
                results[p] = run_cps_worker_over(workers[p], cfg, *links[p], eval, start);
            } catch (...) {
                record(std::current_exception());
                // Unblock the server's shutdown count.
                try {
                    workers[p].finish(*links[p]);
                } catch (...) {
                }
            }
        });
    }
    for (auto& t : worker_threads) t.join();
    server_thread.join();

    if (fault) {
        try {
            std::rethrow_exception(fault);
        } catch (const std::exception& e) {
            throw RunError(std::string("cps run failed: ") + e.what(), RunMetrics{});
        }
    }

    CpsRunResult result{std::move(server_weights), {}};
    for (std::uint16_t p = 0; p < num_workers; ++p) {
        result.workers.push_back(std::move(*results[p]));
    }
    return result;
}

}  // namespace

CpsRunResult run_cps(const Dataset& data, const TrainingConfig& cfg, std::uint16_t num_workers,
                     const Dataset* eval_data) {
    cfg.validate();
    if (num_workers == 0) throw ConfigError("need at least one worker");
    if (cfg.lockstep) {
        return run_cps_lockstep(data, cfg, num_workers, eval_data);
    }
    return run_cps_async(data, cfg, num_workers, eval_data);
}

WorkerResult run_cps_worker(const Dataset& data, const TrainingConfig& cfg,
                            std::uint16_t self_id, std::uint16_t num_workers,
                            std::uint16_t server_id, Transport& link,
                            const Dataset* eval_data) {
    cfg.validate();
    if (num_workers == 0 || self_id >= num_workers) {
        throw ConfigError("worker id " + std::to_string(self_id) + " out of range for " +
                          std::to_string(num_workers) + " workers");
    }
    CpsWorker worker(self_id, data, partition(data, num_workers, self_id), cfg, server_id);
    return run_cps_worker_over(worker, cfg, link, eval_span(data, eval_data), Clock::now());
}

}  // namespace svb
