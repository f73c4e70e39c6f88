#pragma once

// File formats:
//   rate CSV      header `well,time_days,rate_m3d`, one constant step per row
//   pressure CSV  header `well,time_days,pressure_bar[,weight]`, weight
//                 defaults to 1.0
//   scenario TOML well list with roles, optional per-well p0_bar, optional
//                 `injection_sign`, optional [cumulative_reference] table

#include <string>
#include <vector>

#include "wellflow/well_data.hpp"

namespace wellflow {

struct ScenarioConfig {
  std::vector<Well> wells;
  std::map<std::string, double> p0_bar;
  // "negative_in_file" (default): injector rates are stored as given.
  // "positive_in_file": injector rates are negated on load.
  std::string injection_sign = "negative_in_file";
  std::optional<Scenario::CumulativeReference> cumulative_reference;
};

ScenarioConfig load_scenario_config(const std::string& toml_path);

Scenario load_scenario(const std::vector<std::string>& rate_csv_paths,
                       const std::vector<std::string>& pressure_csv_paths,
                       const ScenarioConfig& config);

/// Canonical writers; load(write(x)) reproduces steps and samples bit-exactly.
void write_rate_csv(const std::string& path, const std::map<std::string, RateHistory>& rates);
void write_pressure_csv(const std::string& path,
                        const std::map<std::string, PressureSeries>& pressures);
void write_scenario_config(const std::string& path, const ScenarioConfig& config);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace wellflow
