#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "tbd/scene.hpp"
#include "tbd/trainer.hpp"

namespace tbd::cli {

/// Unknown key, wrong type or out-of-range value; the message names the key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  std::uint64_t seed = 1;
  toy::ScenarioSpec scenario;
  int train_scenes = 128;
  int eval_scenes = 200;

  int teacher_width = 64;
  int student_width = 16;
  int context_radius = 3;
  int teacher_steps = 1000;
  toy::TrainingConfig training;  // student / distillation run

  double score_threshold = 0.8;  // harmony table: predictions scoring above this are counted
  double high_band = 0.8;        // harmony table: top IoU band
  double error_floor = 0.3;
  int gradcheck_points = 20;

  std::string out = "run";
  std::string data;       // training scenes; generated from the scenario when empty
  std::string eval_data;  // held-out scenes; generated when empty
  std::string teacher;    // teacher checkpoint
};

nlohmann::json to_json(const RunConfig& c);

/// Defaults, then the file (if any), then `overrides`; every layer is checked
/// for unknown keys and types, and the result for ranges.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides);
RunConfig resolve_config(const nlohmann::json& layer);

/// "on" | "off" | "fixed:<cls>,<reg>" applied to the distillation settings.
void apply_twg(const std::string& spec, toy::DistillConfig& d);
std::string twg_string(const toy::DistillConfig& d);

}  // namespace tbd::cli
