#pragma once

// Multiwell deconvolution: fits initial pressures, the UTR matrix and
// optional per-step rate corrections to a rate/pressure history by
// minimizing the weighted squared misfit plus regularization, using a
// differential-evolution global stage over coarse parameters followed by a
// Levenberg-damped Gauss-Newton refinement over all node values.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>

#include "wellflow/convolution.hpp"
#include "wellflow/fit_report.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

struct MdcvOptions {
  // objective weights (multiply the per-sample trust weights)
  double pressure_weight = 1.0;
  double rate_weight = 1.0;
  double lambda_curvature = 1e-3;   // (second differences of z)^2 penalty
  double lambda_cumulative = 0.0;   // group-cumulative anchor penalty
  std::pair<double, double> correction_band{0.7, 1.3};
  bool fit_rate_corrections = false;

  // nullopt: every (observer with pressure data) x (source with rates) pair
  std::optional<std::vector<std::pair<std::string, std::string>>> active_pairs;
  int nodes_per_decade = 6;
  // nullopt: [smallest pressure sample spacing, history span]
  std::optional<std::pair<double, double>> node_time_range;

  int de_population = 32;
  int de_generations = 80;
  double de_weight = 0.7;     // differential weight F
  double de_crossover = 0.9;  // crossover probability CR
  int gn_max_iterations = 60;
  double stop_rel_tol = 1e-8;
  std::uint64_t seed = 0;

  double variation_threshold = 0.05;
  bool force = false;  // fit even when the variation check fails
  // nullopt: per-well [min observed p, min + 2 * observed pressure span]
  std::optional<std::pair<double, double>> p0_bounds;
};

/// Weighted objective of a model on a scenario:
///   sum_n sum_a w_p (p_model - p~)^2 + sum_n sum_b w_q (q_model - q~)^2
///   + lambda_c * sum (second differences of z)^2
///   + lambda_q * sum (model group cumulative - reference)^2
double objective_value(const DeconvolutionModel& model, const Scenario& data,
                       const MdcvOptions& opt);

/// The fit's parameter space: p0 for wells without a known value, diagonal
/// jumps, node values z per active pair, and per-step correction factors.
/// Exposed so tests can cross-check the analytic Jacobian and the CRM-subset
/// containment property.
class MdcvProblem {
 public:
  MdcvProblem(const Scenario& training, const MdcvOptions& opt);
  ~MdcvProblem();
  MdcvProblem(MdcvProblem&&) noexcept;

  int parameter_count() const;
  const std::vector<double>& node_times() const;

  /// Model -> parameter vector. The model's UTRs must either share the
  /// problem's node grid or have constant slope (at most one node).
  Eigen::VectorXd encode(const DeconvolutionModel& model) const;
  DeconvolutionModel decode(const Eigen::VectorXd& x) const;

  Eigen::VectorXd residuals(const Eigen::VectorXd& x) const;
  void residuals_and_jacobian(const Eigen::VectorXd& x, Eigen::VectorXd* r,
                              Eigen::MatrixXd* jac) const;
  double objective(const Eigen::VectorXd& x) const;

 private:
  friend std::pair<std::optional<DeconvolutionModel>, FitReport> deconvolve(const Scenario&,
                                                                            const MdcvOptions&);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::pair<std::optional<DeconvolutionModel>, FitReport> deconvolve(const Scenario& training,
                                                                   const MdcvOptions& opt = {});

/// Materializes the model's per-step corrections on the scenario's histories.
std::map<std::string, RateHistory> correct_rates(const DeconvolutionModel& model,
                                                 const Scenario& s);

/// Rate-control prediction: corrected history extended with the future steps.
std::map<std::string, PressureSeries> predict_pressure(
    const DeconvolutionModel& model, const Scenario& history,
    const std::map<std::string, RateHistory>& future_rates, const std::vector<double>& times);

/// Pressure-control prediction: target pressures drive the controlled wells,
/// every other well keeps its (corrected) recorded history.
std::map<std::string, RateHistory> predict_rates(
    const DeconvolutionModel& model, const Scenario& history,
    const std::map<std::string, PressureSeries>& targets);

}  // namespace wellflow
