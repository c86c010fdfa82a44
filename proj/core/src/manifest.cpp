#include "sspix/manifest.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sspix/png_io.hpp"

namespace sspix {

uint64_t fnv1a64_file(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("cannot hash, file not found: " + path);
  uint64_t h = 14695981039346656037ull;
  unsigned char buf[65536];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, f)) > 0)
    for (size_t i = 0; i < n; ++i) {
      h ^= buf[i];
      h *= 1099511628211ull;
    }
  std::fclose(f);
  return h;
}

std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& resolved_config,
                    const std::vector<std::string>& artifact_paths) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& p : artifact_paths) {
    std::string key = fs::relative(p, out_dir).generic_string();
    if (key.empty() || key.rfind("..", 0) == 0) key = fs::path(p).filename().string();
    artifacts[key] = hash_hex(fnv1a64_file(p));
  }
  nlohmann::json m;
  m["command"] = command;
  m["config"] = resolved_config;
  m["artifacts"] = artifacts;
  std::ofstream out(fs::path(out_dir) / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + out_dir);
  out << m.dump(2) << "\n";
}

}  // namespace sspix
