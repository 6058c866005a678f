#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dpr/errors.hpp"

namespace dpr {

inline constexpr const char* kArtifactVersion = "0.1.0";

/// FNV-1a over raw bytes; stable digest for identical inputs.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string digest_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return data;
}

/// Provenance record written next to every command's outputs. Wall-clock
/// lives only here, never in the reports themselves, so reports stay
/// byte-identical across reruns.
struct RunManifest {
  std::string command;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string version = kArtifactVersion;
  long wall_ms = 0;
  std::vector<std::string> outputs;
};

inline void write_manifest(const RunManifest& m, const std::string& path) {
  nlohmann::json j{{"command", m.command},     {"config_digest", m.config_digest},
                   {"seed", m.seed},           {"version", m.version},
                   {"wall_ms", m.wall_ms},     {"outputs", m.outputs}};
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write manifest '" + path + "'");
  os << j.dump(2) << "\n";
}

}  // namespace dpr
