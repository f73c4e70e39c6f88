#pragma once

// Cross-validation machinery: RMSD / R2 metrics, blind train-validate runs
// for either engine, the split-rehearsal loop on synthetic twins, and the
// inner-fold tuning of the regularization weights.

#include <optional>
#include <variant>

#include "wellflow/crm.hpp"
#include "wellflow/mdcv.hpp"
#include "wellflow/synthetic.hpp"
#include "wellflow/well_data.hpp"

namespace wellflow {

struct Metrics {
  double rmsd = 0.0;
  std::optional<double> r2;  // absent when the actual series has no variance
  int n_points = 0;
};

/// rmsd = sqrt(mean squared residual); r2 = 1 - SS_res / SS_tot.
Metrics metrics(std::span<const double> predicted, std::span<const double> actual);

enum class ValidationVerdict { validated, failed, no_validation_conditions };
std::string to_string(ValidationVerdict v);

struct ValidationReport {
  double rmsd = 0.0;
  std::optional<double> r2;
  int n_points = 0;
  std::map<std::string, Metrics> per_well;
  ValidationVerdict verdict = ValidationVerdict::failed;
  double threshold_r2 = 0.9;
  FitReport training_report;
};

enum class Engine { mdcv, crm };

struct CrossValidateOptions {
  Engine engine = Engine::mdcv;
  MdcvOptions mdcv;
  CrmFitOptions crm;
  double threshold_r2 = 0.9;
};

using TrainedModel = std::variant<std::monostate, DeconvolutionModel, CrmModel>;

/// Train on the training partition, predict the held-out quantity on the
/// validation sample times (pressure for mdcv, producer rates for crm) and
/// grade against the threshold. Validation pressures never reach the
/// training objective.
std::pair<TrainedModel, ValidationReport> cross_validate(const Scenario& s, const SplitSpec& split,
                                                         const CrossValidateOptions& opt);

struct RehearsalResult {
  std::optional<SplitSpec> chosen_split;
  ValidationVerdict verdict = ValidationVerdict::no_validation_conditions;
  std::vector<ValidationReport> attempts;  // one per candidate tried
};

/// Steps the synthetic rehearsal loop: generate the twin scenario once, then
/// try candidate splits until one validates or the budget runs out.
RehearsalResult rehearse_split(const SyntheticSpec& spec,
                               const std::vector<SplitSpec>& candidates,
                               const CrossValidateOptions& opt, int max_iterations = 0);

struct BootstrapOptions {
  int n_folds = 3;
  std::vector<double> lambda_curvature_grid{0.0, 1e-4, 1e-2, 1.0};
  std::vector<double> lambda_cumulative_grid{0.0};
};

/// Contiguous-in-time inner folds (serially correlated residuals rule out
/// random resampling); returns the options with the best mean inner-fold r2,
/// smaller lambdas winning ties.
MdcvOptions bootstrap_tune(const Scenario& training, const MdcvOptions& base,
                           const BootstrapOptions& boot = {});

}  // namespace wellflow
