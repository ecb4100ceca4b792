#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "tbd/detector.hpp"
#include "tbd/scene.hpp"

namespace tbd::io {

/// Malformed, truncated or inconsistent checkpoint / scene documents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ParameterSet& params);
ParameterSet parameters_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const toy::DetectorNet& net);
toy::DetectorNet detector_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const std::vector<toy::SyntheticScene>& scenes);
std::vector<toy::SyntheticScene> scenes_from_json(const nlohmann::json& doc);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
/// Parses a file; I/O and syntax failures become FormatError naming the path.
nlohmann::json read_json(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const toy::DetectorNet& net);
toy::DetectorNet load_checkpoint(const std::filesystem::path& path);
void save_scenes(const std::filesystem::path& path, const std::vector<toy::SyntheticScene>& scenes);
std::vector<toy::SyntheticScene> load_scenes(const std::filesystem::path& path);

}  // namespace tbd::io
