#pragma once

// Canonical data model for multi-well rate/pressure histories.
//
// Unit conventions, used throughout the library:
//   time      days
//   pressure  bar
//   rate      m3/day, signed: production > 0, injection < 0
//
// Rates are piecewise-constant step functions with q(t <= 0) = 0. Each
// recorded step (t_k, q_k) holds on [t_k, t_{k+1}) and the last step holds
// indefinitely, which is what superposition memory requires when predicting
// past the recorded span.

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wellflow {

enum class WellRole { producer, injector };

std::string to_string(WellRole role);
WellRole well_role_from_string(const std::string& s);

struct Well {
  std::string name;
  WellRole role = WellRole::producer;
};

/// Piecewise-constant signed flowrate history.
class RateHistory {
 public:
  struct Step {
    double t = 0.0;  // step start, days
    double q = 0.0;  // m3/day, signed
  };

  RateHistory() = default;
  explicit RateHistory(std::vector<Step> steps);

  const std::vector<Step>& steps() const { return steps_; }
  bool empty() const { return steps_.empty(); }
  std::size_t size() const { return steps_.size(); }

  /// q(t) with each step holding on [t_k, t_{k+1}); 0 before the first step.
  double value_at(double t) const;
  /// Left limit q(t-); differs from value_at exactly at step starts.
  double value_before(double t) const;
  /// Exact cumulative integral of the step function on [0, t].
  double cumulative(double t) const;
  /// Start time of the last step (0 for an empty history).
  double end_time() const;
  double max_abs() const;

  /// Signed step increments dq_k (first increment is measured from 0).
  std::vector<double> increments() const;

  /// Per-step multiplicative scaling; factors.size() must equal size().
  RateHistory scaled(std::span<const double> factors) const;

  /// Appends steps that start at or after end_time().
  RateHistory extended(const RateHistory& future) const;

 private:
  std::vector<Step> steps_;
  std::vector<double> cum_;  // cumulative integral at step starts
};

/// Sampled bottomhole pressure with per-sample trust weights.
class PressureSeries {
 public:
  struct Sample {
    double t = 0.0;  // days
    double p = 0.0;  // bar
    double w = 1.0;  // trust weight >= 0
  };

  PressureSeries() = default;
  explicit PressureSeries(std::vector<Sample> samples);

  const std::vector<Sample>& samples() const { return samples_; }
  bool empty() const { return samples_.empty(); }
  std::size_t size() const { return samples_.size(); }

  std::vector<double> times() const;
  std::vector<double> values() const;

  /// Linear interpolation between samples, constant beyond the ends.
  double interpolate(double t) const;

 private:
  std::vector<Sample> samples_;
};

/// A complete multi-well dataset: roles, rates, pressures and optional
/// initial-pressure / reference-cumulative side information.
struct Scenario {
  std::vector<Well> wells;  // declaration order is the canonical well order
  std::map<std::string, RateHistory> rates;
  std::map<std::string, PressureSeries> pressures;
  std::map<std::string, double> p0_bar;  // optional per-well initial pressure

  struct CumulativeReference {
    std::vector<double> t_days;         // month-end times
    std::vector<double> cumulative_m3;  // group production cumulative at t
  };
  std::optional<CumulativeReference> cumulative_reference;

  const Well* find(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 if unknown
  std::vector<std::string> well_names() const;
  std::vector<std::string> producers() const;
  std::vector<std::string> injectors() const;

  /// Latest time seen in any rate step or pressure sample.
  double span() const;

  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

/// Training/validation partition request.
struct SplitSpec {
  enum class Mode { train_then_validate, interval_list };
  Mode mode = Mode::train_then_validate;
  double boundary_days = 0.0;  // train: [0, boundary), validate: [boundary, end]
  // interval_list mode: training intervals [a, b); validation is the
  // complement of their union within the data span.
  std::vector<std::pair<double, double>> train_intervals;

  static SplitSpec at(double boundary);
  static SplitSpec intervals(std::vector<std::pair<double, double>> train);
};

/// Pressure samples are partitioned between the two scenarios; both keep the
/// complete rate histories so superposition from t = 0 stays exact.
std::pair<Scenario, Scenario> split_dataset(const Scenario& s, const SplitSpec& spec);

/// Data-quality flags per well plus the overall verdict.
struct QcReport {
  struct WellFlags {
    bool pressure_resolution_ok = true;  // smallest nonzero increment <= 1 bar
    bool sampling_rate_ok = true;        // median sample spacing <= 1 hour
    int rate_variation_events = 0;       // step-to-step changes above threshold
    double max_relative_amplitude = 0.0;
    bool no_variation = false;
  };
  enum class Verdict { pass, warn, fail };

  std::map<std::string, WellFlags> wells;
  std::optional<double> cumulative_deviation;  // fraction vs reference
  Verdict verdict = Verdict::pass;
};

std::string to_string(QcReport::Verdict v);

struct QcOptions {
  double pressure_resolution_bar = 1.0;
  double sampling_interval_days = 1.0 / 24.0;  // one hour
  double variation_threshold = 0.05;           // fraction of max |q| per well
  double cumulative_tolerance = 0.30;
};

/// Pure function of the scenario: identical input gives an identical report.
/// A rate-variation event is a change between consecutive recorded steps with
/// |dq| above threshold * max|q|; the initial rise from zero is not counted,
/// so a never-changing nonzero rate reports no_variation.
QcReport qc_report(const Scenario& s, const QcOptions& opt = {});

}  // namespace wellflow
