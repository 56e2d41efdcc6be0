#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mdam/train/trainer.hpp"

namespace mdam::harness {

/// Every TrainerConfig field as (name, text) pairs, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const train::TrainerConfig& config);

/// Sets one field by name. Throws ConfigError on unknown keys or bad values.
void set_config_value(train::TrainerConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; blank lines and lines starting with '#' are
/// ignored. Keys not present keep their value from `base`.
train::TrainerConfig parse_config(std::istream& in, train::TrainerConfig base);
train::TrainerConfig load_config(const std::string& path, train::TrainerConfig base);
std::string format_config(const train::TrainerConfig& config);

}  // namespace mdam::harness
