#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace debias::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kManifestSchema = "debias.manifest.v1";
inline constexpr std::string_view kManifestName = "manifest.json";

// Process exit codes. Library errors map to kErrorBase + ErrorCode.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitReproMismatch = 3;
inline constexpr int kExitInternal = 4;
inline constexpr int kExitErrorBase = 10;

// Runs one command with its fully resolved configuration, writing every
// artifact plus manifest.json into out_dir. `primary` overrides the file name
// of the command's main artifact (empty keeps the default). Returns the
// manifest.
nlohmann::json Execute(const std::string& command, const nlohmann::json& config, const std::filesystem::path& out_dir,
                       const std::string& primary = "");

// Re-executes a manifest into out_dir and compares every output hash.
// Returns the names of artifacts whose bytes differ.
std::vector<std::string> Rerun(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir);

// Default configuration of a command before any config file or flag.
nlohmann::json DefaultConfig(const std::string& command, const std::string& preset = "desk");

// Figures from previously written data files; no model access.
std::vector<std::filesystem::path> WriteReport(const std::vector<std::filesystem::path>& inputs,
                                               const std::filesystem::path& out_dir);

int Main(int argc, char** argv);

}  // namespace debias::cli
