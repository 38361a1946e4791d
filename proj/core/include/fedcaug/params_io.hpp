#pragma once

#include <map>
#include <string>

#include "fedcaug/model.hpp"

namespace fedcaug::nn {

// Flat binary checkpoint format:
//   magic "FCAW", version u32, tensor count u32,
//   then per tensor: name length u32 + UTF-8 name, rank u32, dims u32[],
//   payload as little-endian 32-bit floats. All integers little-endian.
void save_params(const ModelParams& params, const std::string& path);

// Loads a checkpoint and binds it to `arch`, validating names and shapes.
ModelParams load_params(const std::string& path, const Architecture& arch);

// Raw tensor map without an architecture binding.
std::map<std::string, Tensor> load_raw_tensors(const std::string& path);

}  // namespace fedcaug::nn
