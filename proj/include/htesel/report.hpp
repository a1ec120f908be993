#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "htesel/harness.hpp"
#include "htesel/selectors.hpp"

namespace htesel {

using json = nlohmann::json;

/// Reads and parses a JSON file. Missing or malformed files throw ConfigError
/// naming the path.
json load_json_file(const std::filesystem::path& path);

/// Experiment settings from a config object. Top-level `alpha`, `lambda`,
/// `inner_folds`, `bootstrap_draws` apply to every selector unless the
/// selector entry overrides them. Unknown keys throw ConfigError.
ExperimentConfig experiment_config_from_json(const json& j);
json to_json(const ExperimentConfig& config);

CltConfig clt_config_from_json(const json& j);
/// Grid and settings from the `stability` block (plus shared dgp keys).
StabilityConfig stability_config_from_json(const json& j, std::vector<std::size_t>& n_grid);

json to_json(const SelectionResult& result);
json to_json(const ExperimentReport& report);
json to_json(const CltReport& report);
json to_json(const StabilityReport& report);
json sweep_to_json(SweepAxis axis, const std::vector<double>& values,
                   const std::vector<ExperimentReport>& reports);

/// `rep,selector,candidate,statistic,critical,accepted`; failed repetitions
/// contribute no rows (they are listed in report.json).
void write_per_rep_csv(std::ostream& out, const ExperimentReport& report);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// report.json, per_rep.csv and metadata.json under `dir`. Only
/// metadata.json carries wall-clock information.
void write_experiment(const ExperimentReport& report, const std::filesystem::path& dir,
                      const json& metadata);

}  // namespace htesel
