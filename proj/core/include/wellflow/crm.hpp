#pragma once

// Capacitance-resistance model (CRM/ICRM): per-producer time constant tau and
// capacitance gamma plus a producer x injector connectivity table, fitted
// under the physical constraints tau, gamma >= 0, 0 <= f <= 1 and per-injector
// column sums bounded by (or pinned to) one.

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wellflow/fit_report.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

struct CrmModel {
  std::vector<std::string> producers;
  std::vector<std::string> injectors;
  std::vector<double> tau_days;          // per producer
  std::vector<double> gamma_m3_per_bar;  // per producer
  Eigen::MatrixXd connectivity;          // producers x injectors

  int producer_index(const std::string& name) const;
  int injector_index(const std::string& name) const;
  /// J_n = gamma_n / tau_n
  double productivity_index(int producer) const;

  /// Throws unless tau, gamma >= 0, f in [0,1] and column sums <= 1
  /// (== 1 in strict mode) hold exactly.
  void validate(bool strict_allocation = false, double tol = 1e-9) const;
  /// Clamps away numerical constraint violations so validate() passes exactly.
  void project_constraints(bool strict_allocation = false);
};

enum class CrmFitMode { rate_fit, pressure_fit, icrm_fit, weighted_combo };

struct CrmFitOptions {
  CrmFitMode mode = CrmFitMode::rate_fit;
  bool strict_allocation = false;  // column sums == 1 instead of <= 1
  double combo_rate_weight = 1.0;  // weighted_combo: rate-residual weight
  double combo_icrm_weight = 1.0;  // weighted_combo: cumulative-residual weight
  double tau_min_days = 0.01;
  double tau_max_factor = 10.0;  // tau_max = factor * history span
  int tau_grid_points = 48;      // coarse log-grid scan before refinement
  double tau_rel_tol = 1e-8;     // golden-section stop
  int max_coupling_sweeps = 8;
  // Producer-producer interference extension: pairs producers linearly the
  // same way as injectors. Off by default.
  bool producer_interference = false;
  double variation_threshold = 0.05;
  // q(0) convention: 0 for a stationary start; when the data begins
  // mid-production set this to use the first recorded rate instead.
  bool assume_running_start = false;
};

/// Exact per-step integration of the CRM rate equation: injection constant
/// and bottomhole pressure linear inside each step of the union grid.
/// Returned histories hold the exact q(t_k) values at the step starts.
std::map<std::string, RateHistory> crm_simulate_rates(
    const CrmModel& m, const std::map<std::string, RateHistory>& injections,
    const std::map<std::string, PressureSeries>& bhp, const std::map<std::string, double>& q0,
    const std::vector<double>& times);

/// Explicit pressure form:
/// p(t) = p(0) - (tau/gamma) [q(t-) - q(0)] - Q_up(t)/gamma + sum_m f Q_down_m(t)/gamma.
/// The rate enters as its left limit, matching the Heaviside convention
/// theta(0) = 0 of the convolution path.
std::map<std::string, PressureSeries> crm_simulate_pressure(
    const CrmModel& m, const std::map<std::string, RateHistory>& production,
    const std::map<std::string, RateHistory>& injections,
    const std::map<std::string, double>& p_start, const std::vector<double>& times,
    const std::map<std::string, double>& q0 = {});

std::pair<std::optional<CrmModel>, FitReport> crm_fit(const Scenario& training,
                                                      const CrmFitOptions& opt = {});

/// Formation pressure reconstruction p_r(t) = p_wf(t) + q(t)/J at the
/// bottomhole sample times.
PressureSeries formation_pressure(const CrmModel& m, const PressureSeries& bhp,
                                  const RateHistory& rate, const std::string& producer);

}  // namespace wellflow
