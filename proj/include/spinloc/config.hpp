#pragma once

#include <stdexcept>
#include <string>

#include "spinloc/simengine.hpp"

namespace spinloc {

// Configuration failures carry the JSON field path (or line:column for
// syntax errors) in the message.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Parses and validates a scenario file. Angles appear in the file in
// degrees (keys suffixed _deg); unknown keys are rejected.
ScenarioConfig load_scenario(const std::string& path);
ScenarioConfig parse_scenario(const std::string& text, const std::string& origin);

// The effective configuration with every default filled in, as JSON text.
std::string describe_scenario(const ScenarioConfig& config);

}  // namespace spinloc
