#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "plumeseek/experiments.hpp"

namespace plumeseek {

struct SimulateOptions {
    Method method = Method::AttPfp;
    FieldKind field = FieldKind::Gas;
    std::size_t episodes = 1;
    // Particle snapshot interval in steps; the final belief is always written.
    int snapshot_every = 10;
};

struct RunConfig {
    RunConfig();

    ExperimentConfig experiment;
    SimulateOptions simulate;
    std::string output_dir = "out";
    std::string presets_path;  // empty: the shipped preset table
};

// Values given on the command line, applied after the file and the environment.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    std::optional<int> workers;
    std::vector<std::string> assignments;  // "section.key=value", value parsed as JSON when possible
};

// Layering: defaults < file < PLUMESEEK_WORKERS < overrides. Unknown keys and type mismatches
// raise UsageError naming the key path. An empty path means defaults only.
RunConfig parse_config(const std::string& path, const ConfigOverrides& overrides = {});
RunConfig parse_config_text(const std::string& json_text, const ConfigOverrides& overrides = {});

// Fully resolved configuration, in the same layout the parser accepts.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace plumeseek
