#pragma once

#include <string>

#include "svb/mlr.hpp"

namespace svb {

// Model files reuse the parameter-matrix wire encoding: one encoded
// parameter-push message, nothing else.
void save_model(const WeightMatrix& w, const std::string& path);
WeightMatrix load_model(const std::string& path);

}  // namespace svb
