#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace loadshed::cli {

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Record of one CLI invocation, written next to its outputs.
struct RunArtifact {
  std::string command;  ///< argv joined with spaces
  std::string subcommand;
  unsigned long long seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  int exit_code = 0;

  /// Writes `<dir>/<subcommand>.run.json` and returns its path.
  std::filesystem::path write(const std::filesystem::path& dir) const;
};

}  // namespace loadshed::cli
