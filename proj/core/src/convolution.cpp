#include "wellflow/convolution.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace wellflow {

int DeconvolutionModel::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < wells.size(); ++i)
    if (wells[i] == name) return static_cast<int>(i);
  return -1;
}

RateHistory DeconvolutionModel::corrected_rates(const std::string& name,
                                                const RateHistory& recorded) const {
  auto it = rate_corrections.find(name);
  if (it == rate_corrections.end() || it->second.empty()) return recorded;
  return recorded.scaled(it->second);
}

void DeconvolutionModel::validate() const {
  if (wells.size() != p0_bar.size())
    throw std::invalid_argument("model p0 count does not match well count");
  if (utrs.size() != static_cast<int>(wells.size()))
    throw std::invalid_argument("UTR matrix size does not match well count");
  for (double p : p0_bar)
    if (!std::isfinite(p)) throw std::invalid_argument("non-finite p0 in model");
  for (const auto& [well, factors] : rate_corrections) {
    if (index_of(well) < 0)
      throw std::invalid_argument("rate correction for unknown well '" + well + "'");
    for (double f : factors) {
      if (f < correction_band.first - 1e-12 || f > correction_band.second + 1e-12)
        throw std::invalid_argument("rate correction factor outside the configured band");
    }
  }
}

double superpose_drawdown(const Utr& utr, const RateHistory& rates, double t) {
  double acc = 0.0;
  const auto& steps = rates.steps();
  double prev_q = 0.0;
  for (const auto& step : steps) {
    if (step.t >= t) break;
    const double dq = step.q - prev_q;
    prev_q = step.q;
    if (dq != 0.0) acc += dq * utr.value(t - step.t);
  }
  return acc;
}

namespace {

double pair_drawdown_direct(const Utr& utr, const RateHistory& rates, double t) {
  return superpose_drawdown(utr, rates, t);
}

// same quantity via the derivative form: jump * q(t-) plus per-step smooth
// differences (the Dirac part of the self-response derivative is carried
// symbolically by the jump, never sampled)
double pair_drawdown_derivative(const Utr& utr, const RateHistory& rates, double t) {
  const auto& steps = rates.steps();
  double acc = utr.jump() * rates.value_before(t);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    if (steps[k].t >= t) break;
    if (steps[k].q == 0.0) continue;
    const double upper = utr.smooth(t - steps[k].t);
    const double lower =
        (k + 1 < steps.size() && steps[k + 1].t < t) ? utr.smooth(t - steps[k + 1].t) : 0.0;
    acc += steps[k].q * (upper - lower);
  }
  return acc;
}

}  // namespace

std::vector<double> simulate_pressure_well(const DeconvolutionModel& model,
                                           const std::map<std::string, RateHistory>& rates,
                                           const std::string& observer,
                                           std::span<const double> times, SuperpositionForm form) {
  const int n = model.index_of(observer);
  if (n < 0) throw std::invalid_argument("observer well '" + observer + "' not in model");
  for (double t : times)
    if (t < 0.0) throw std::invalid_argument("query time before t = 0");

  std::vector<double> p(times.size(), model.p0_bar[static_cast<std::size_t>(n)]);
  for (const auto& [source, recorded] : rates) {
    const int m = model.index_of(source);
    if (m < 0) throw std::invalid_argument("rate history for well '" + source + "' not in model");
    if (!model.utrs.active(n, m)) {
      // An inactive pair is an identically-zero response only by declaration;
      // a *missing* response for a well that has rates and a modeled observer
      // is fine -- the mask is the single source of truth.
      continue;
    }
    const Utr& utr = model.utrs.at(n, m);
    if (utr.is_zero()) continue;
    const RateHistory corrected = model.corrected_rates(source, recorded);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double draw = form == SuperpositionForm::direct
                              ? pair_drawdown_direct(utr, corrected, times[i])
                              : pair_drawdown_derivative(utr, corrected, times[i]);
      p[i] -= draw;
    }
  }
  return p;
}

std::map<std::string, PressureSeries> simulate_pressure(
    const DeconvolutionModel& model, const std::map<std::string, RateHistory>& rates,
    std::span<const double> times, SuperpositionForm form) {
  std::map<std::string, PressureSeries> out;
  for (const std::string& well : model.wells) {
    const std::vector<double> p = simulate_pressure_well(model, rates, well, times, form);
    std::vector<PressureSeries::Sample> samples(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) samples[i] = {times[i], p[i], 1.0};
    out[well] = PressureSeries(std::move(samples));
  }
  return out;
}

std::map<std::string, RateHistory> simulate_rates(
    const DeconvolutionModel& model, const std::map<std::string, PressureSeries>& targets,
    const std::map<std::string, RateHistory>& fixed_rates,
    const std::map<std::string, RateHistory>& past_controlled,
    const PressureControlOptions& opt) {
  if (targets.empty()) throw std::invalid_argument("no pressure targets given");

  std::vector<std::string> controlled;
  std::vector<int> controlled_idx;
  const std::vector<double> grid = targets.begin()->second.times();
  if (grid.empty()) throw std::invalid_argument("empty pressure target series");
  for (const auto& [well, series] : targets) {
    const int n = model.index_of(well);
    if (n < 0) throw std::invalid_argument("controlled well '" + well + "' not in model");
    if (series.times() != grid)
      throw std::invalid_argument("pressure targets must share one time grid");
    controlled.push_back(well);
    controlled_idx.push_back(n);
  }
  const int nc = static_cast<int>(controlled.size());

  double march_start = 0.0;
  std::map<std::string, std::vector<RateHistory::Step>> solution;
  for (const std::string& well : controlled) {
    auto it = past_controlled.find(well);
    if (it != past_controlled.end() && !it->second.empty()) {
      solution[well] = it->second.steps();
      march_start = std::max(march_start, it->second.end_time());
    } else {
      solution[well] = {};
    }
  }
  if (grid.front() <= march_start)
    throw std::invalid_argument("pressure targets must start after the known rate history");

  Eigen::MatrixXd a(nc, nc);
  Eigen::VectorXd b(nc);
  double prev_time = march_start;
  for (std::size_t step = 0; step < grid.size(); ++step) {
    const double t = grid[step];
    const double dt = t - prev_time;
    a.setZero();

    // known contributions: fixed wells plus already-solved controlled steps
    for (int r = 0; r < nc; ++r) {
      const int n = controlled_idx[static_cast<std::size_t>(r)];
      double known = 0.0;
      for (const auto& [source, rh] : fixed_rates) {
        const int m = model.index_of(source);
        if (m < 0) throw std::invalid_argument("fixed-rate well '" + source + "' not in model");
        if (model.utrs.active(n, m))
          known += pair_drawdown_direct(model.utrs.at(n, m),
                                        model.corrected_rates(source, rh), t);
      }
      for (int c = 0; c < nc; ++c) {
        const int m = controlled_idx[static_cast<std::size_t>(c)];
        if (!model.utrs.active(n, m)) continue;
        const Utr& utr = model.utrs.at(n, m);
        const auto& steps = solution[controlled[static_cast<std::size_t>(c)]];
        double prev_q = 0.0;
        for (const auto& s : steps) {
          const double dq = s.q - prev_q;
          prev_q = s.q;
          if (dq != 0.0) known += dq * utr.value(t - s.t);
        }
        // the unknown step starts at prev_time; subtracting the "stays at
        // prev_q" baseline makes it enter as (q_new - prev_q)
        a(r, c) = utr.value(dt);
        known -= prev_q * a(r, c);
      }
      const double target = targets.at(controlled[static_cast<std::size_t>(r)])
                                .samples()[step]
                                .p;
      b(r) = model.p0_bar[static_cast<std::size_t>(n)] - target - known;
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(nc - 1);
    if (!(smin > 0.0) || smax / smin > opt.condition_limit)
      throw PressureControlInfeasible(
          "pressure-control step system is singular or ill-conditioned at t = " +
          std::to_string(t));
    const Eigen::VectorXd q_new = svd.solve(b);

    for (int c = 0; c < nc; ++c)
      solution[controlled[static_cast<std::size_t>(c)]].push_back(
          {prev_time, q_new(c)});
    prev_time = t;
  }

  std::map<std::string, RateHistory> out;
  for (const std::string& well : controlled) out[well] = RateHistory(std::move(solution[well]));
  return out;
}

}  // namespace wellflow
