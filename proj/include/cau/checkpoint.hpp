#pragma once

#include <string>

#include "cau/model.hpp"

namespace cau {

struct Checkpoint {
    ParamVector params;
    HyperParams hp;
};

// Binary little-endian checkpoint: magic "CAU1", u32 |V|, u32 d, u32 L, then
// the flat parameter vector as raw doubles. A JSON sidecar at path + ".json"
// records the full hyperparameters and seed.
void save_checkpoint(const ParamVector& p, const HyperParams& hp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace cau
