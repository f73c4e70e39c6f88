#include "wellflow/synthetic.hpp"

#include <cmath>
#include <random>

namespace wellflow {

namespace {

double distance(const SyntheticWell& a, const SyntheticWell& b) {
  return std::hypot(a.x_m - b.x_m, a.y_m - b.y_m);
}

}  // namespace

std::pair<Scenario, GroundTruth> generate_scenario(const SyntheticSpec& spec) {
  if (spec.wells.empty()) throw std::invalid_argument("synthetic spec has no wells");
  if (!(spec.span_days > 0.0)) throw std::invalid_argument("span must be positive");
  if (spec.pressure_noise_std_bar < 0.0 || spec.rate_corruption_std < 0.0)
    throw std::invalid_argument("noise levels must be >= 0");

  std::mt19937_64 rng(spec.seed);
  GroundTruth truth;

  Scenario s;
  for (const SyntheticWell& w : spec.wells) s.wells.push_back({w.name, w.role});
  s.validate();  // catches duplicate names early

  // ground-truth model
  if (spec.crm_source) {
    truth.crm = spec.crm_source;
    std::map<std::string, double> p0;
    for (const std::string& prod : spec.crm_source->producers) p0[prod] = spec.p0_bar;
    for (const std::string& inj : spec.crm_source->injectors) p0[inj] = spec.p0_bar;
    truth.model = crm_to_mdcv(*spec.crm_source, p0);
    for (const std::string& name : truth.model.wells) {
      if (!s.find(name))
        throw std::invalid_argument("CRM source well '" + name + "' not in the well list");
    }
  } else {
    spec.reservoir.validate();
    const int n = static_cast<int>(spec.wells.size());
    truth.model.wells.reserve(spec.wells.size());
    for (const SyntheticWell& w : spec.wells) truth.model.wells.push_back(w.name);
    truth.model.p0_bar.assign(spec.wells.size(), spec.p0_bar);
    truth.model.utrs = UtrMatrix(n);
    LogGridSpec grid;
    grid.t_min_days = std::min(spec.pressure_sample_dt_days, 1.0) * 1e-2;
    grid.t_max_days = spec.span_days * 1.2;
    grid.nodes_per_decade = spec.nodes_per_decade;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const auto& wi = spec.wells[static_cast<std::size_t>(i)];
        const auto& wj = spec.wells[static_cast<std::size_t>(j)];
        if (i == j) {
          truth.model.utrs.set(i, j, analytic_utr(spec.reservoir, spec.reservoir.well_radius_m, grid));
          continue;
        }
        const double d = distance(wi, wj);
        if (d <= spec.reservoir.well_radius_m)
          throw std::invalid_argument("overlapping well coordinates: '" + wi.name + "' and '" +
                                      wj.name + "'");
        truth.model.utrs.set(i, j, analytic_utr(spec.reservoir, d, grid));
      }
    }
  }

  // true rates: explicit or generated stepwise schedules
  std::uniform_real_distribution<double> amp(spec.schedule.amplitude_min_m3d,
                                             spec.schedule.amplitude_max_m3d);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (const SyntheticWell& w : spec.wells) {
    auto it = spec.explicit_rates.find(w.name);
    if (it != spec.explicit_rates.end()) {
      truth.true_rates[w.name] = it->second;
      continue;
    }
    const int steps = std::max(1, spec.schedule.steps);
    std::vector<RateHistory::Step> sv;
    sv.reserve(static_cast<std::size_t>(steps));
    const double dt = spec.span_days / steps;
    for (int k = 0; k < steps; ++k) {
      double q = amp(rng);
      if (uni(rng) < spec.schedule.shut_in_probability) q = 0.0;
      if (w.role == WellRole::injector) q = -q;
      sv.push_back({k * dt, q});
    }
    truth.true_rates[w.name] = RateHistory(std::move(sv));
  }

  // pressures from the true rates, then noise
  std::vector<double> sample_times;
  for (double t = spec.pressure_sample_dt_days; t <= spec.span_days * (1.0 + 1e-12);
       t += spec.pressure_sample_dt_days)
    sample_times.push_back(t);
  if (sample_times.empty()) throw std::invalid_argument("no pressure sample times inside the span");

  std::normal_distribution<double> noise(0.0, 1.0);
  // CRM-form truth does not model injector pressure, so only wells with an
  // active self-response get a gauge
  for (const SyntheticWell& w : spec.wells) {
    const int idx = truth.model.index_of(w.name);
    if (idx < 0 || !truth.model.utrs.active(idx, idx)) {
      s.pressures[w.name] = PressureSeries();
      continue;
    }
    const std::vector<double> p =
        simulate_pressure_well(truth.model, truth.true_rates, w.name, sample_times);
    std::vector<PressureSeries::Sample> samples(sample_times.size());
    for (std::size_t i = 0; i < sample_times.size(); ++i) {
      const double eps =
          spec.pressure_noise_std_bar > 0.0 ? spec.pressure_noise_std_bar * noise(rng) : 0.0;
      samples[i] = {sample_times[i], p[i] + eps, 1.0};
    }
    s.pressures[w.name] = PressureSeries(std::move(samples));
  }

  // recorded rates: true rates times mean-one log-normal corruption
  double sigma = 0.0;
  double mu_ln = 0.0;
  if (spec.rate_corruption_std > 0.0) {
    const double s2 = std::log(1.0 + spec.rate_corruption_std * spec.rate_corruption_std);
    sigma = std::sqrt(s2);
    mu_ln = -0.5 * s2;
  }
  for (const SyntheticWell& w : spec.wells) {
    const RateHistory& true_rh = truth.true_rates.at(w.name);
    if (spec.rate_corruption_std <= 0.0) {
      s.rates[w.name] = true_rh;
      continue;
    }
    std::vector<double> factors(true_rh.size());
    for (double& f : factors) f = std::exp(mu_ln + sigma * noise(rng));
    s.rates[w.name] = true_rh.scaled(factors);
  }

  if (spec.emit_p0) {
    for (const SyntheticWell& w : spec.wells) {
      const int idx = truth.model.index_of(w.name);
      if (idx >= 0) s.p0_bar[w.name] = truth.model.p0_bar[static_cast<std::size_t>(idx)];
    }
  }

  s.validate();
  return {std::move(s), std::move(truth)};
}

}  // namespace wellflow
