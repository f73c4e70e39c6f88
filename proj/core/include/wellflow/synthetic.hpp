#pragma once

// Synthetic multi-well scenarios with known ground truth: analytic
// homogeneous-reservoir responses (or a CRM-form model) drive exact forward
// pressures, then configurable gaussian pressure noise and mean-one
// log-normal per-step rate corruption produce the "recorded" dataset.

#include <cstdint>
#include <optional>

#include "wellflow/bridge.hpp"
#include "wellflow/convolution.hpp"
#include "wellflow/crm.hpp"
#include "wellflow/utr.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

struct SyntheticWell {
  std::string name;
  WellRole role = WellRole::producer;
  double x_m = 0.0;
  double y_m = 0.0;
};

struct RateScheduleSpec {
  int steps = 12;
  double amplitude_min_m3d = 40.0;  // magnitudes; sign follows the role
  double amplitude_max_m3d = 160.0;
  double shut_in_probability = 0.0;
};

struct SyntheticSpec {
  std::vector<SyntheticWell> wells;
  ReservoirParams reservoir;            // analytic ground truth
  std::optional<CrmModel> crm_source;   // CRM-form ground truth instead
  std::map<std::string, RateHistory> explicit_rates;  // overrides the generator
  RateScheduleSpec schedule;
  double span_days = 365.0;
  double pressure_sample_dt_days = 1.0;
  double pressure_noise_std_bar = 0.0;
  double rate_corruption_std = 0.0;  // std of the mean-one log-normal factor
  double p0_bar = 200.0;
  bool emit_p0 = true;  // whether the scenario discloses p0
  std::uint64_t seed = 0;
  int nodes_per_decade = 8;  // encoding grid for the analytic responses
};

struct GroundTruth {
  DeconvolutionModel model;
  std::map<std::string, RateHistory> true_rates;
  std::optional<CrmModel> crm;
};

std::pair<Scenario, GroundTruth> generate_scenario(const SyntheticSpec& spec);

}  // namespace wellflow
