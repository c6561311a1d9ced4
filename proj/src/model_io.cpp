#include "svb/model_io.hpp"

#include <cmath>
#include <fstream>
#include <vector>

#include "svb/errors.hpp"
#include "svb/protocol.hpp"

namespace svb {

void save_model(const WeightMatrix& w, const std::string& path) {
    MatrixMessage msg;
    msg.sender_id = 0;
    msg.clock = 0;
    msg.kind = MessageKind::parameter_push;
    msg.num_classes = w.num_classes();
    msg.num_features = w.num_features();
    msg.values.assign(w.values().begin(), w.values().end());
    const std::vector<std::uint8_t> bytes = encode(Message(std::move(msg)));

    std::ofstream f(path, std::ios::binary);
    if (!f || !f.write(reinterpret_cast<const char*>(bytes.data()),
                       static_cast<std::streamsize>(bytes.size()))) {
        throw IoError("cannot write model '" + path + "'");
    }
}

WeightMatrix load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot open model '" + path + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    Message msg = decode(bytes);
    const auto* mm = std::get_if<MatrixMessage>(&msg);
    if (!mm || mm->kind != MessageKind::parameter_push) {
        throw ParseError("'" + path + "' is not a parameter matrix file");
    }
    WeightMatrix w(mm->num_classes, mm->num_features);
    auto cells = w.values();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!std::isfinite(mm->values[i])) {
            throw ParseError("model '" + path + "' contains a non-finite value");
        }
        cells[i] = mm->values[i];
    }
    return w;
}

}  // namespace svb
