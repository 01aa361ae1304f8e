#pragma once

#include <iosfwd>
#include <string>

#include "inrun/experiments.hpp"

namespace inrun {

/// Sectioned key=value text:
///
///   [experiment]
///   name = fidelity
///   seed = 7
///
/// `#` starts a comment. Every key of ExperimentConfig is accepted exactly
/// once; unknown keys and duplicates are errors naming the key and line.
/// `experiment.name` is required. Keys left out take their defaults, and each
/// default is echoed to `log` when one is given.
ExperimentConfig parse_config(std::istream& in, const std::string& name = "<config>", std::ostream* log = nullptr);
ExperimentConfig parse_config_file(const std::string& path, std::ostream* log = nullptr);

/// Canonical text form listing every key; parse_config reads it back to an equal config.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace inrun
