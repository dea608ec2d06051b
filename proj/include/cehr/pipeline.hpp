#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

/// Subcommand implementations shared by the C API and the command line.
/// Each takes a JSON configuration and returns a run manifest whose
/// "counters" member holds the command's report.
namespace cehr::pipeline {

using nlohmann::json;

/// Commands: encode, decode, validate, train, generate, evaluate, forecast, demo.
/// Throws Error(InvalidArgument) for unknown commands, missing keys or
/// referenced paths that do not exist; other error codes signal data faults.
json run(std::string_view command, const json& config);

std::vector<std::string> commands();

/// FNV-1a 64-bit hash of the canonical config dump, excluding "threads" and "manifest".
std::string config_hash(const json& config);
/// FNV-1a 64-bit over file bytes; directories hash their sorted regular files.
std::string fingerprint(const std::filesystem::path& path);

}  // namespace cehr::pipeline
