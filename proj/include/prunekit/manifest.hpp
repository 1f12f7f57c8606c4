#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace prunekit {

std::string_view tool_version();

// Lowercase hex SHA-256 of a file's bytes. Throws FormatError if unreadable.
std::string sha256_file(const std::filesystem::path& path);

// ISO-8601 UTC with second resolution, e.g. "2024-01-31T12:00:00Z".
std::string utc_timestamp(std::chrono::system_clock::time_point t);

struct InputDigest {
  std::string path;
  std::uint64_t bytes = 0;
  std::string sha256;
};

// Reproducibility record written next to the outputs of every
// artifact-producing command.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();  // fully resolved flags
  nlohmann::json seeds = nlohmann::json::object();   // every derived sub-seed
  std::vector<InputDigest> inputs;
  std::vector<std::string> outputs;
  nlohmann::json timings = nlohmann::json::array();
  std::string started_utc;
  std::string finished_utc;

  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path) { outputs.push_back(path.string()); }

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace prunekit
