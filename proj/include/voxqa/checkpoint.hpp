#pragma once

// Parameter checkpoints: a text manifest (name, shape, payload offset)
// followed by a raw little-endian float32 payload. Loading requires an
// exact name/shape match with the receiving parameter list.

#include <cstdint>
#include <string>
#include <vector>

#include "voxqa/nn.hpp"

namespace voxqa {

void save_checkpoint(const std::vector<nn::Parameter<float>>& params, const std::string& path);

// Copies stored values into `params`; every stored entry must match a
// parameter by name and shape, and every parameter must be present.
void load_checkpoint(std::vector<nn::Parameter<float>>& params, const std::string& path);

// FNV-1a digest over names and raw value bytes; used to assert that frozen
// models stayed bitwise unchanged.
std::uint64_t param_digest(const std::vector<nn::Parameter<float>>& params);

} // namespace voxqa
