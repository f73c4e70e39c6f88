#pragma once

// Forward engine built on the multiwell convolution equation: with
// piecewise-constant rates the Stieltjes convolution of each UTR with the
// rate history collapses to a finite superposition sum, so both simulation
// directions are exact -- there is no quadrature anywhere in this path.
//
//   rate control:      p_n(t) = p_0n - sum_m sum_{t_k < t} dq_mk p_u,nm(t - t_k)
//   pressure control:  time-marching lower-triangular solve for the rate steps
//                      that reproduce target pressures at the step ends

#include <map>
#include <span>
#include <string>
#include <vector>

#include "wellflow/utr.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

struct DeconvolutionModel {
  std::vector<std::string> wells;  // canonical ordering for the UTR matrix
  std::vector<double> p0_bar;      // initial formation pressure per well
  UtrMatrix utrs;
  // Per-well, per-step multiplicative rate corrections; empty vector = identity.
  std::map<std::string, std::vector<double>> rate_corrections;
  std::pair<double, double> correction_band{0.7, 1.3};

  int index_of(const std::string& name) const;
  /// Applies this model's correction factors (identity when none stored).
  RateHistory corrected_rates(const std::string& name, const RateHistory& recorded) const;
  void validate() const;
};

enum class SuperpositionForm {
  direct,      // Eq. form: sum of dq_k * p_u(t - t_k)
  derivative,  // equivalent form via the UTR derivative; jump contributes jump*q(t-)
};

/// Drawdown contribution of one source history through one response at time t
/// (the inner sum of the convolution equation), direct form.
double superpose_drawdown(const Utr& utr, const RateHistory& rates, double t);

/// Bottomhole pressure of one well at the given query times (rate control).
std::vector<double> simulate_pressure_well(const DeconvolutionModel& model,
                                           const std::map<std::string, RateHistory>& rates,
                                           const std::string& observer,
                                           std::span<const double> times,
                                           SuperpositionForm form = SuperpositionForm::direct);

/// All wells on a shared query grid.
std::map<std::string, PressureSeries> simulate_pressure(
    const DeconvolutionModel& model, const std::map<std::string, RateHistory>& rates,
    std::span<const double> times, SuperpositionForm form = SuperpositionForm::direct);

struct PressureControlOptions {
  double condition_limit = 1e12;  // per-step system guard
};

struct PressureControlInfeasible : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rates that reproduce the target pressures (pressure control). All target
/// series must share one time grid; each controlled well gets one unknown
/// rate step per grid interval, solved by marching forward in time.
/// `past_controlled` holds already-known history of the controlled wells; the
/// marching starts after it ends.
std::map<std::string, RateHistory> simulate_rates(
    const DeconvolutionModel& model, const std::map<std::string, PressureSeries>& targets,
    const std::map<std::string, RateHistory>& fixed_rates = {},
    const std::map<std::string, RateHistory>& past_controlled = {},
    const PressureControlOptions& opt = {});

}  // namespace wellflow
