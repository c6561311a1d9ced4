#include "svb/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "svb/errors.hpp"

namespace svb {

namespace {

constexpr std::string_view kCsvHeader = "wall_ms,step,loss,accuracy,bytes_sent,bytes_received";

void append_number(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

template <typename T>
T parse_field(std::string_view tok, std::size_t line) {
    T v{};
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size()) {
        throw ParseError("line " + std::to_string(line) + ": bad field '" + std::string(tok) +
                             "'",
                         line);
    }
    return v;
}

}  // namespace

Snapshot take_snapshot(const WeightMatrix& replica, std::span<const LabeledSample> eval_set,
                       const ByteCounters& counters, std::uint64_t wall_ms, std::uint64_t step) {
    Snapshot s;
    s.wall_ms = wall_ms;
    s.step = step;
    s.loss = nll_loss(replica, eval_set);
    s.accuracy = accuracy(replica, eval_set);
    s.bytes_sent = counters.bytes_sent;
    s.bytes_received = counters.bytes_received;
    return s;
}

void write_csv(const RunMetrics& metrics, const std::string& path) {
    std::string out(kCsvHeader);
    out += '\n';
    for (const Snapshot& s : metrics.snapshots) {
        out += std::to_string(s.wall_ms);
        out += ',';
        out += std::to_string(s.step);
        out += ',';
        append_number(out, s.loss);
        out += ',';
        append_number(out, s.accuracy);
        out += ',';
        out += std::to_string(s.bytes_sent);
        out += ',';
        out += std::to_string(s.bytes_received);
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f || !(f << out) || !f.flush()) {
        throw IoError("cannot write '" + path + "'");
    }
}

RunMetrics read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    RunMetrics metrics;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != kCsvHeader) {
                throw ParseError("unexpected CSV header '" + line + "'", 1);
            }
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest = line;
        while (true) {
            std::size_t comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 6) {
            throw ParseError("line " + std::to_string(lineno) + ": expected 6 fields", lineno);
        }
        Snapshot s;
        s.wall_ms = parse_field<std::uint64_t>(fields[0], lineno);
        s.step = parse_field<std::uint64_t>(fields[1], lineno);
        s.loss = parse_field<double>(fields[2], lineno);
        s.accuracy = parse_field<double>(fields[3], lineno);
        s.bytes_sent = parse_field<std::uint64_t>(fields[4], lineno);
        s.bytes_received = parse_field<std::uint64_t>(fields[5], lineno);
        metrics.snapshots.push_back(s);
    }
    return metrics;
}

}  // namespace svb
