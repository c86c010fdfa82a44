#pragma once

#include <map>
#include <string>

#include "sspix/nn.hpp"

namespace sspix {

/// Binary container for parameters, buffers, and a free-form JSON metadata
/// block. Doubles are stored raw little-endian, so save -> load round-trips
/// bit-exactly.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::string& meta_json);

struct LoadedCheckpoint {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> buffers;
  std::string meta_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copies loaded values into an existing store by name; throws when the
/// tensor sets differ in size, a name is missing, or a shape disagrees.
void restore_into(const LoadedCheckpoint& ckpt, ParamStore& store);

}  // namespace sspix
