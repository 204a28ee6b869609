#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dasam/data/synthetic.hpp"
#include "dasam/evaluation/protocols.hpp"
#include "dasam/losses/losses.hpp"
#include "dasam/model/config.hpp"
#include "dasam/training/trainer.hpp"
#include "json.hpp"

namespace dasam::service {

struct DataSection {
  data::SyntheticSceneConfig scene;
  int count = 100;
  /// Fraction of generated scenes (the last ones) written to test/.
  double test_fraction = 0.0;
};

struct EvalSection {
  std::vector<int> clicks{1, 3, 5};
  /// "gt" or a detector file path.
  std::string boxes = "gt";
  int trials = 5;
  int images_per_trial = 4;
  int warmup = 1;
};

struct ServeSection {
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 4;
};

/// Whole-application settings, one section per subsystem.
///
/// Precedence: built-in defaults < config file < environment. Environment
/// overrides are named DASAM_<SECTION>__<KEY>[__<SUBKEY>...], e.g.
/// DASAM_TRAIN__LR=3e-4 or DASAM_MODEL__ENCODER__HEADS=2. Values are parsed
/// as JSON when the target is not a string (so DASAM_EVAL__CLICKS=[1,3]).
///
/// The model section names a preset ("toy" by default) from presets.json;
/// any other model keys override that preset field by field. Loss weights
/// live in [loss] only.
struct AppConfig {
  DataSection data;
  model::ModelConfig model;
  training::TrainConfig train;  // train.weights mirrors [loss]
  losses::LossWeights loss;
  EvalSection eval;
  ServeSection serve;

  nlohmann::json to_json() const;
};

using Environment = std::map<std::string, std::string>;

/// Snapshot of the process environment.
Environment process_environment();

/// Builds and validates the config. Unknown keys, wrong types, unparsable
/// environment values and every validation failure are collected and
/// thrown together as one ConfigError.
AppConfig parse_app_config(const nlohmann::json& document, const Environment& env = {},
                           const std::filesystem::path& config_dir = model::default_config_dir());

/// Reads `path` (JSON) if given, then applies the environment.
AppConfig load_app_config(const std::optional<std::filesystem::path>& path, const Environment& env,
                          const std::filesystem::path& config_dir = model::default_config_dir());

}  // namespace dasam::service
