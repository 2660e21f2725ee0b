#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sl/common.hpp"

namespace sl {

/// Provenance record every command leaves behind: what ran, from which config
/// and seed, over which files, and fingerprints of everything it wrote. The
/// timestamp lives here and nowhere else, so all other outputs stay
/// byte-reproducible.
struct RunManifest {
  std::string command;
  std::string config_path;
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::pair<std::string, std::string>> outputs;  // path, fnv1a64 hex
  std::string timestamp;

  void add_output(const std::string& path) { outputs.emplace_back(path, file_fingerprint(path)); }
};

inline std::string utc_now_iso8601() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_run_manifest(const std::string& dir, RunManifest m) {
  if (m.timestamp.empty()) m.timestamp = utc_now_iso8601();
  nlohmann::json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["seed"] = m.seed;
  j["inputs"] = m.inputs;
  auto outs = nlohmann::json::array();
  for (const auto& [path, fp] : m.outputs) {
    nlohmann::json o;
    o["path"] = path;
    o["fingerprint"] = fp;
    outs.push_back(o);
  }
  j["outputs"] = outs;
  j["timestamp"] = m.timestamp;
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/run_manifest.json", j.dump(2) + "\n");
}

}  // namespace sl
