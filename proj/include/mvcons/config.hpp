#pragma once

#include <string>

#include <json.hpp>

#include "mvcons/augment.hpp"
#include "mvcons/nn.hpp"
#include "mvcons/training.hpp"

namespace mvcons {

struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    AugmentSpec augment;
};

// Strict parse: unknown keys raise ConfigError naming the offending key.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& source_name);
ExperimentConfig load_config_file(const std::string& path);

nlohmann::json config_to_json(const ExperimentConfig& cfg);

}  // namespace mvcons
