#include "wellflow/validation.hpp"

#include <cmath>
#include <limits>

namespace wellflow {

Metrics metrics(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size())
    throw std::invalid_argument("metrics: series length mismatch");
  if (predicted.size() < 2) throw std::invalid_argument("metrics: need at least two points");
  Metrics m;
  m.n_points = static_cast<int>(actual.size());
  double ss_res = 0.0;
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double r = predicted[i] - actual[i];
    ss_res += r * r;
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  m.rmsd = std::sqrt(ss_res / static_cast<double>(actual.size()));
  if (ss_tot > 0.0) m.r2 = 1.0 - ss_res / ss_tot;
  return m;
}

std::string to_string(ValidationVerdict v) {
  switch (v) {
    case ValidationVerdict::validated: return "validated";
    case ValidationVerdict::failed: return "failed";
    case ValidationVerdict::no_validation_conditions: return "no_validation_conditions";
  }
  return "?";
}

namespace {

// pooled metrics: residuals aggregated over wells, SS_tot around per-well means
void pool(const std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>& series,
          ValidationReport* report) {
  double ss_res = 0.0;
  double ss_tot = 0.0;
  int n = 0;
  for (const auto& [well, pa] : series) {
    const auto& [pred, act] = pa;
    if (act.size() >= 2) report->per_well[well] = metrics(pred, act);
    double mean = 0.0;
    for (double v : act) mean += v;
    mean /= static_cast<double>(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) {
      ss_res += (pred[i] - act[i]) * (pred[i] - act[i]);
      ss_tot += (act[i] - mean) * (act[i] - mean);
      ++n;
    }
  }
  report->n_points = n;
  report->rmsd = n ? std::sqrt(ss_res / n) : 0.0;
  if (ss_tot > 0.0) report->r2 = 1.0 - ss_res / ss_tot;
}

}  // namespace

std::pair<TrainedModel, ValidationReport> cross_validate(const Scenario& s, const SplitSpec& split,
                                                         const CrossValidateOptions& opt) {
  ValidationReport report;
  report.threshold_r2 = opt.threshold_r2;

  auto [train, validate] = split_dataset(s, split);

  // predicted-vs-actual per well on the validation samples
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> series;
  TrainedModel trained;

  if (opt.engine == Engine::mdcv) {
    auto [model, fit] = deconvolve(train, opt.mdcv);
    report.training_report = fit;
    if (!model) {
      report.verdict = ValidationVerdict::no_validation_conditions;
      return {trained, report};
    }
    trained = *model;
    for (const auto& [well, ps] : validate.pressures) {
      if (ps.empty()) continue;
      // rate inputs are controls: the full (corrected) histories drive the
      // prediction, only the held-out pressure samples are compared
      const std::vector<double> pred =
          simulate_pressure_well(*model, s.rates, well, ps.times());
      series[well] = {pred, ps.values()};
    }
  } else {
    auto [model, fit] = crm_fit(train, opt.crm);
    report.training_report = fit;
    if (!model) {
      report.verdict = ValidationVerdict::no_validation_conditions;
      return {trained, report};
    }
    trained = *model;
    // rate prediction under measured BHP and injection from t = 0, graded on
    // the validation-window record times
    std::map<std::string, RateHistory> injections;
    for (const std::string& inj : model->injectors) injections[inj] = s.rates.at(inj);
    for (const std::string& prod : model->producers) {
      const RateHistory& recorded = s.rates.at(prod);
      std::vector<double> eval_times;
      std::vector<double> actual;
      for (const auto& st : recorded.steps()) {
        const bool in_train = split.mode == SplitSpec::Mode::train_then_validate
                                  ? st.t < split.boundary_days
                                  : [&] {
                                      for (const auto& [a, b] : split.train_intervals)
                                        if (st.t >= a && st.t < b) return true;
                                      return false;
                                    }();
        if (!in_train && st.t > 0.0) {
          eval_times.push_back(st.t);
          actual.push_back(st.q);
        }
      }
      if (eval_times.size() < 2) continue;
      const auto sim = crm_simulate_rates(*model, injections, {{prod, s.pressures.at(prod)}},
                                          {{prod, 0.0}}, eval_times);
      std::vector<double> pred;
      for (double t : eval_times) pred.push_back(sim.at(prod).value_at(t));
      series[prod] = {pred, actual};
    }
  }

  if (series.empty()) {
    report.verdict = ValidationVerdict::no_validation_conditions;
    return {trained, report};
  }
  pool(series, &report);
  report.verdict = (report.r2 && *report.r2 >= opt.threshold_r2) ? ValidationVerdict::validated
                                                                 : ValidationVerdict::failed;
  return {trained, report};
}

RehearsalResult rehearse_split(const SyntheticSpec& spec,
                               const std::vector<SplitSpec>& candidates,
                               const CrossValidateOptions& opt, int max_iterations) {
  if (candidates.empty()) throw std::invalid_argument("no candidate splits");
  RehearsalResult result;
  auto [scenario, truth] = generate_scenario(spec);

  const std::size_t budget = max_iterations > 0
                                 ? std::min<std::size_t>(candidates.size(),
                                                         static_cast<std::size_t>(max_iterations))
                                 : candidates.size();
  for (std::size_t i = 0; i < budget; ++i) {
    ValidationReport rep;
    try {
      rep = cross_validate(scenario, candidates[i], opt).second;
    } catch (const std::invalid_argument&) {
      // e.g. a candidate boundary outside the sampled span: count the attempt
      rep.verdict = ValidationVerdict::failed;
    }
    result.attempts.push_back(rep);
    if (rep.verdict == ValidationVerdict::validated) {
      result.chosen_split = candidates[i];
      result.verdict = ValidationVerdict::validated;
      return result;
    }
  }
  result.verdict = ValidationVerdict::no_validation_conditions;
  return result;
}

MdcvOptions bootstrap_tune(const Scenario& training, const MdcvOptions& base,
                           const BootstrapOptions& boot) {
  if (boot.n_folds < 2) throw std::invalid_argument("bootstrap needs at least two folds");
  if (boot.lambda_curvature_grid.empty() || boot.lambda_cumulative_grid.empty())
    throw std::invalid_argument("empty lambda grid");

  // contiguous fold windows over the sampled pressure span
  double t_lo = std::numeric_limits<double>::infinity();
  double t_hi = -std::numeric_limits<double>::infinity();
  for (const auto& [well, ps] : training.pressures) {
    if (ps.empty()) continue;
    t_lo = std::min(t_lo, ps.samples().front().t);
    t_hi = std::max(t_hi, ps.samples().back().t);
  }
  if (!(t_hi > t_lo)) throw std::invalid_argument("training span too short for folds");
  const double width = (t_hi - t_lo) / boot.n_folds;

  MdcvOptions best = base;
  double best_score = -std::numeric_limits<double>::infinity();
  bool first = true;
  for (double lc : boot.lambda_curvature_grid) {
    for (double lq : boot.lambda_cumulative_grid) {
      MdcvOptions trial = base;
      trial.lambda_curvature = lc;
      trial.lambda_cumulative = lq;
      double score = 0.0;
      int scored = 0;
      for (int fold = 0; fold < boot.n_folds; ++fold) {
        const double a = t_lo + fold * width;
        const double b = fold + 1 == boot.n_folds ? t_hi + 1.0 : t_lo + (fold + 1) * width;
        // inner validation window [a, b); training keeps the complement
        std::vector<std::pair<double, double>> train_iv;
        if (a > t_lo) train_iv.push_back({t_lo - 1.0, a});
        if (b < t_hi + 1.0) train_iv.push_back({b, t_hi + 1.0});
        CrossValidateOptions cv;
        cv.engine = Engine::mdcv;
        cv.mdcv = trial;
        cv.threshold_r2 = 0.0;
        try {
          const ValidationReport rep =
              cross_validate(training, SplitSpec::intervals(train_iv), cv).second;
          if (rep.r2) {
            score += *rep.r2;
            ++scored;
          }
        } catch (const std::invalid_argument&) {
          // degenerate fold (no samples on one side): skip it
        }
      }
      if (scored == 0) continue;
      score /= scored;
      // strict improvement keeps the smallest lambda on ties
      if (first || score > best_score + 1e-12) {
        best_score = score;
        best = trial;
        first = false;
      }
    }
  }
  if (first) throw std::invalid_argument("bootstrap folds are degenerate");
  return best;
}

}  // namespace wellflow
