#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace sspix {

uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);

/// Writes <out_dir>/manifest.json recording the invoked command line, the
/// fully resolved configuration, and a content hash per produced artifact.
/// Deliberately timestamp-free so identical runs produce identical manifests.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& resolved_config,
                    const std::vector<std::string>& artifact_paths);

}  // namespace sspix
