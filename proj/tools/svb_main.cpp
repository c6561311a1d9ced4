#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svb/cps.hpp"
#include "svb/dataset.hpp"
#include "svb/errors.hpp"
#include "svb/metrics.hpp"
#include "svb/model_io.hpp"
#include "svb/tcp.hpp"
#include "svb/worker.hpp"

namespace {

using svb::ConfigError;

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct TrainSpec {
    svb::TrainingConfig cfg;
    std::string mode = "serial";
    std::string role = "peer";
    std::uint32_t workers = 1;
    std::string data_path;
    std::string eval_path;
    std::string peers;
    std::string listen;
    std::int32_t worker_id = -1;
    std::string out_csv;
    std::string out_model;
    std::uint32_t synth_classes = 0;
    std::uint32_t synth_features = 0;
    std::uint32_t synth_samples = 0;
    double synth_margin = 3.0;
    std::uint64_t synth_seed = 42;
};

svb::PeerAddress parse_address(const std::string& text, std::uint16_t worker_id) {
    const std::size_t colon = text.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
        throw ConfigError("bad address '" + text + "', expected host:port");
    }
    svb::PeerAddress addr;
    addr.worker_id = worker_id;
    addr.host = text.substr(0, colon);
    unsigned long port = 0;
    try {
        port = std::stoul(text.substr(colon + 1));
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + text + "'");
    }
    if (port == 0 || port > 65535) {
        throw ConfigError("port out of range in '" + text + "'");
    }
    addr.port = static_cast<std::uint16_t>(port);
    return addr;
}

std::vector<svb::PeerAddress> parse_peer_list(const std::string& text) {
    std::vector<svb::PeerAddress> peers;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t comma = text.find(',', start);
        std::string item = comma == std::string::npos ? text.substr(start)
                                                      : text.substr(start, comma - start);
        if (!item.empty()) {
            peers.push_back(parse_address(item, static_cast<std::uint16_t>(peers.size())));
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (peers.empty()) throw ConfigError("empty peer list");
    return peers;
}

// Flag > config file > default: config values fill only options the command
// line left untouched.
void overlay_config_file(CLI::App& app, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config '" + path + "': " + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config '" + path + "' must be a JSON object");

    for (const auto& [key, value] : doc.items()) {
        CLI::Option* opt = nullptr;
        try {
            opt = app.get_option("--" + key);
        } catch (const CLI::OptionNotFound&) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
        if (opt->count() > 0) continue;  // explicit flag wins
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_boolean()) {
            if (!value.get<bool>()) continue;  // absent flag
            text = "true";
        } else {
            text = value.dump();
        }
        try {
            opt->add_result(text);
            opt->run_callback();
        } catch (const CLI::Error& e) {
            throw ConfigError("config: bad value for '" + key + "': " + e.what());
        }
    }
}

svb::Dataset load_train_data(const TrainSpec& spec) {
    if (!spec.data_path.empty()) {
        return svb::load_libsvm(spec.data_path);
    }
    if (spec.synth_classes > 0 || spec.synth_features > 0 || spec.synth_samples > 0) {
        if (spec.synth_classes == 0 || spec.synth_features == 0 || spec.synth_samples == 0) {
            throw ConfigError("synthetic data needs --synth-classes, --synth-features and "
                              "--synth-samples");
        }
        return svb::gen_synthetic(spec.synth_classes, spec.synth_features, spec.synth_samples,
                                  spec.synth_seed, spec.synth_margin)
            .data;
    }
    throw ConfigError("no training data: pass --data or the --synth-* options");
}

std::string suffixed(const std::string& path, std::uint16_t worker) {
    return path + ".w" + std::to_string(worker);
}

void write_outputs(const TrainSpec& spec, const svb::WorkerResult& result, bool plain_paths,
                   std::uint16_t worker) {
    if (!spec.out_csv.empty()) {
        svb::write_csv(result.metrics, plain_paths ? spec.out_csv : suffixed(spec.out_csv, worker));
    }
    if (!spec.out_model.empty()) {
        svb::save_model(result.weights,
                        plain_paths ? spec.out_model : suffixed(spec.out_model, worker));
    }
}

void validate_train_spec(const TrainSpec& spec) {
    const svb::Mode mode = svb::parse_mode(spec.mode);
    if (spec.role != "peer" && spec.role != "server" && spec.role != "cps-worker") {
        throw ConfigError("unknown role '" + spec.role + "'");
    }
    if (spec.role != "peer" && mode != svb::Mode::cps) {
        throw ConfigError("role '" + spec.role + "' requires --mode cps");
    }
    if (mode == svb::Mode::serial) {
        if (spec.workers != 1) throw ConfigError("serial mode runs exactly one worker");
        if (!spec.peers.empty() || !spec.listen.empty()) {
            throw ConfigError("serial mode takes no peer addresses");
        }
    }
    if (mode == svb::Mode::svb && !spec.peers.empty() && spec.cfg.lockstep) {
        throw ConfigError("lockstep runs in the single-process harness only");
    }
    if (spec.workers == 0) throw ConfigError("need at least one worker");
    spec.cfg.validate();
}

int cmd_train(TrainSpec spec) {
    const svb::Mode mode = svb::parse_mode(spec.mode);
    spec.cfg.mode = mode;

    // Unresolvable or malformed inputs are configuration problems.
    svb::Dataset data = [&] {
        try {
            svb::Dataset ds = load_train_data(spec);
            if (!spec.eval_path.empty()) {
                // probe now so a bad path fails before training starts
                svb::load_libsvm(spec.eval_path, ds.num_classes, ds.num_features);
            }
            return ds;
        } catch (const svb::IoError& e) {
            throw ConfigError(e.what());
        } catch (const svb::ParseError& e) {
            throw ConfigError(e.what());
        }
    }();
    std::optional<svb::Dataset> eval_data;
    if (!spec.eval_path.empty()) {
        eval_data = svb::load_libsvm(spec.eval_path, data.num_classes, data.num_features);
    }
    const svb::Dataset* eval_ptr = eval_data ? &*eval_data : nullptr;

    if (mode == svb::Mode::serial) {
        svb::WorkerResult result = run_serial(data, spec.cfg, eval_ptr);
        write_outputs(spec, result, true, 0);
        const svb::Snapshot& last = result.metrics.snapshots.back();
        std::cout << "serial done: steps=" << result.applied_local
                  << " loss=" << format_double(last.loss)
                  << " accuracy=" << format_double(last.accuracy) << "\n";
        return 0;
    }

    if (mode == svb::Mode::svb) {
        if (spec.peers.empty()) {
            // Single-process harness: all workers over loopback.
            auto results = run_svb(data, spec.cfg, static_cast<std::uint16_t>(spec.workers),
                                   eval_ptr);
            for (std::uint16_t p = 0; p < results.size(); ++p) {
                write_outputs(spec, results[p], false, p);
            }
            write_outputs(spec, results[0], true, 0);
            const svb::Snapshot& last = results[0].metrics.snapshots.back();
            std::cout << "svb done: workers=" << spec.workers
                      << " loss=" << format_double(last.loss)
                      << " accuracy=" << format_double(last.accuracy)
                      << " bytes_sent=" << last.bytes_sent << "\n";
            return 0;
        }
        std::vector<svb::PeerAddress> peers = parse_peer_list(spec.peers);
        std::uint16_t self_id;
        if (spec.worker_id >= 0) {
            self_id = static_cast<std::uint16_t>(spec.worker_id);
        } else if (!spec.listen.empty()) {
            svb::PeerAddress self = parse_address(spec.listen, 0);
            std::size_t found = peers.size();
            for (std::size_t i = 0; i < peers.size(); ++i) {
                if (peers[i].host == self.host && peers[i].port == self.port) found = i;
            }
            if (found == peers.size()) {
                throw ConfigError("--listen address not present in --peers list");
            }
            self_id = static_cast<std::uint16_t>(found);
        } else {
            throw ConfigError("TCP mesh needs --worker-id or --listen to identify this worker");
        }
        if (spec.workers != peers.size()) {
            throw ConfigError("--workers must equal the peer list length");
        }
        auto link = svb::make_tcp_mesh(peers, self_id);
        svb::WorkerResult result = run_svb_worker(
            data, spec.cfg, self_id, static_cast<std::uint16_t>(peers.size()), *link, eval_ptr);
        write_outputs(spec, result, true, self_id);
        const svb::Snapshot& last = result.metrics.snapshots.back();
        std::cout << "svb worker " << self_id << " done: loss=" << format_double(last.loss)
                  << " accuracy=" << format_double(last.accuracy)
                  << " bytes_sent=" << last.bytes_sent
                  << " bytes_received=" << last.bytes_received << "\n";
        return 0;
    }

    // CPS.
    const std::uint16_t num_workers = static_cast<std::uint16_t>(spec.workers);
    const std::uint16_t server_id = num_workers;
    if (spec.role == "peer") {
        svb::CpsRunResult result = run_cps(data, spec.cfg, num_workers, eval_ptr);
        for (std::uint16_t p = 0; p < result.workers.size(); ++p) {
            write_outputs(spec, result.workers[p], false, p);
        }
        if (!spec.out_model.empty()) svb::save_model(result.server_weights, spec.out_model);
        if (!spec.out_csv.empty()) svb::write_csv(result.workers[0].metrics, spec.out_csv);
        const double final_loss =
            svb::nll_loss(result.server_weights,
                          eval_ptr ? std::span<const svb::LabeledSample>(eval_ptr->samples)
                                   : std::span<const svb::LabeledSample>(data.samples));
        std::cout << "cps done: workers=" << spec.workers
                  << " server_loss=" << format_double(final_loss) << "\n";
        return 0;
    }
    if (spec.role == "server") {
        if (spec.listen.empty()) throw ConfigError("cps server needs --listen");
        svb::PeerAddress self = parse_address(spec.listen, server_id);
        auto link = svb::make_tcp_server(self, num_workers);
        svb::WeightMatrix weights =
            svb::cps_server_run(*link, data.num_classes, data.num_features, num_workers);
        if (!spec.out_model.empty()) svb::save_model(weights, spec.out_model);
        std::cout << "cps server done: workers=" << spec.workers << "\n";
        return 0;
    }
    // cps-worker
    if (spec.peers.empty()) throw ConfigError("cps worker needs --peers <server host:port>");
    if (spec.worker_id < 0) throw ConfigError("cps worker needs --worker-id");
    std::vector<svb::PeerAddress> servers = parse_peer_list(spec.peers);
    if (servers.size() != 1) throw ConfigError("cps worker takes exactly one server address");
    servers[0].worker_id = server_id;
    auto link = svb::make_tcp_client(servers[0], static_cast<std::uint16_t>(spec.worker_id));
    svb::WorkerResult result =
        run_cps_worker(data, spec.cfg, static_cast<std::uint16_t>(spec.worker_id), num_workers,
                       server_id, *link, eval_ptr);
    write_outputs(spec, result, true, static_cast<std::uint16_t>(spec.worker_id));
    const svb::Snapshot& last = result.metrics.snapshots.back();
    std::cout << "cps worker " << spec.worker_id << " done: loss=" << format_double(last.loss)
              << " accuracy=" << format_double(last.accuracy) << "\n";
    return 0;
}

int cmd_gen_data(std::uint32_t classes, std::uint32_t features, std::uint32_t samples,
                 std::uint64_t seed, double margin, const std::string& out,
                 std::string out_model) {
    svb::SyntheticProblem problem = svb::gen_synthetic(classes, features, samples, seed, margin);
    svb::save_libsvm(problem.data, out);
    if (out_model.empty()) out_model = out + ".model";
    svb::save_model(problem.planted, out_model);
    const double planted_accuracy =
        svb::accuracy(problem.planted, std::span<const svb::LabeledSample>(problem.data.samples));
    std::cout << "wrote " << samples << " samples to " << out << " (planted model " << out_model
              << ", accuracy " << format_double(planted_accuracy) << ")\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path) {
    svb::WeightMatrix model = svb::load_model(model_path);
    svb::Dataset data =
        svb::load_libsvm(data_path, model.num_classes(), model.num_features());
    const auto samples = std::span<const svb::LabeledSample>(data.samples);
    std::cout << "loss=" << format_double(svb::nll_loss(model, samples))
              << " accuracy=" << format_double(svb::accuracy(model, samples)) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed multiclass logistic regression trainer with sufficient-vector "
                 "broadcasting"};
    app.require_subcommand(1);

    // train
    TrainSpec spec;
    std::string config_path;
    CLI::App* train = app.add_subcommand("train", "Run a training experiment");
    train->add_option("--mode", spec.mode, "svb | cps | serial")->default_str("serial");
    train->add_option("--workers", spec.workers, "number of workers M");
    train->add_option("--role", spec.role, "peer | server | cps-worker");
    train->add_option("--peers", spec.peers,
                      "comma-separated host:port list (all SVB peers in worker-id order, or the "
                      "CPS server)");
    train->add_option("--listen", spec.listen, "this endpoint's host:port");
    train->add_option("--worker-id", spec.worker_id, "this worker's id (TCP modes)");
    train->add_option("--data", spec.data_path, "LIBSVM training file");
    train->add_option("--eval-path", spec.eval_path, "held-out LIBSVM file for metrics");
    train->add_option("--eta0", spec.cfg.eta0, "initial step size");
    train->add_option("--decay", spec.cfg.decay, "step-size decay");
    train->add_option("--steps", spec.cfg.steps, "local SGD steps per worker");
    train->add_option("--eval-every", spec.cfg.eval_every, "steps between metric snapshots");
    train->add_option("--epsilon-u", spec.cfg.epsilon_u, "u sparsification threshold");
    train->add_flag("--lockstep", spec.cfg.lockstep, "deterministic round-based schedule");
    train->add_option("--seed", spec.cfg.seed, "sample-stream seed");
    train->add_option("--queue-capacity", spec.cfg.queue_capacity, "SV queue capacity");
    train->add_option("--cps-tau", spec.cfg.cps_tau, "CPS pull cadence");
    train->add_option("--out-csv", spec.out_csv, "metrics CSV path");
    train->add_option("--out-model", spec.out_model, "final model path");
    train->add_option("--synth-classes", spec.synth_classes, "synthetic data: classes");
    train->add_option("--synth-features", spec.synth_features, "synthetic data: features");
    train->add_option("--synth-samples", spec.synth_samples, "synthetic data: samples");
    train->add_option("--synth-margin", spec.synth_margin, "synthetic data: margin");
    train->add_option("--synth-seed", spec.synth_seed, "synthetic data: seed");
    train->add_option("--config", config_path, "JSON config file (kebab-case keys)");

    // gen-data
    std::uint32_t gen_classes = 10, gen_features = 50, gen_samples = 2000;
    std::uint64_t gen_seed = 42;
    double gen_margin = 3.0;
    std::string gen_out, gen_out_model;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic LIBSVM benchmark");
    gen->add_option("--classes", gen_classes, "K")->check(CLI::PositiveNumber);
    gen->add_option("--features", gen_features, "D")->check(CLI::PositiveNumber);
    gen->add_option("--samples", gen_samples, "N")->check(CLI::PositiveNumber);
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--margin", gen_margin, "class separation margin");
    gen->add_option("--out", gen_out, "output LIBSVM path")->required();
    gen->add_option("--out-model", gen_out_model, "planted model path (default <out>.model)");

    // eval
    std::string eval_model, eval_data;
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a model file on a dataset");
    eval->add_option("--model", eval_model, "model path")->required();
    eval->add_option("--data", eval_data, "LIBSVM path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return 0;  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (train->parsed()) {
            if (!config_path.empty()) overlay_config_file(*train, config_path);
            validate_train_spec(spec);
        }
    } catch (const svb::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    if (train->parsed()) {
        try {
            return cmd_train(std::move(spec));
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;  // runtime failure
        }
    }
    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_classes, gen_features, gen_samples, gen_seed, gen_margin,
                                gen_out, gen_out_model);
        }
        if (eval->parsed()) return cmd_eval(eval_model, eval_data);
    } catch (const svb::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
