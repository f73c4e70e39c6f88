#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace wellflow {

/// Outcome of a model fit: objective trace, quality metrics and diagnostics.
struct FitReport {
  enum class Status { converged, budget_exhausted, ill_posed, no_variation };

  Status status = Status::converged;
  std::vector<double> objective_trace;  // non-increasing over accepted steps
  double final_rmsd = 0.0;              // bar (pressure fits) or m3/day (rate fits)
  std::optional<double> final_r2;       // absent when the data has no variance
  std::map<std::string, std::vector<double>> residuals;  // per well, per sample
  std::map<std::string, double> per_well_objective;
  int near_null_directions = 0;  // near-zero curvature directions at the solution
  int de_evaluations = 0;
  int gn_iterations = 0;
  double wall_time_seconds = 0.0;  // informational; never serialized
};

std::string to_string(FitReport::Status s);

}  // namespace wellflow
