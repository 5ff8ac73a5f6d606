#pragma once

#include "infkit/model.hpp"
#include "infkit/types.hpp"

#include <string>

namespace infkit {

// Binary checkpoint layout (little-endian):
//   magic "GIFC" | u32 version | u32 tensor count |
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims... |
//               f64 values (row-major)
// A .json sibling format mirrors the same content for inspection.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);

void save_checkpoint_json(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint_json(const std::string& path);

// Dispatch on a ".json" suffix.
void save_checkpoint_auto(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint_auto(const std::string& path);

// Confirms the tensors in `params` are exactly the ones the model defines.
void check_checkpoint_matches(const ParamVector& params, const ModelSpec& spec);

}  // namespace infkit
