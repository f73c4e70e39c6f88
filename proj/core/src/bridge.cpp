#include "wellflow/bridge.hpp"

#include <cmath>

namespace wellflow {

DeconvolutionModel crm_to_mdcv(const CrmModel& m, const std::map<std::string, double>& p0) {
  m.validate(false);
  DeconvolutionModel model;
  const std::size_t np = m.producers.size();
  const std::size_t ni = m.injectors.size();
  model.wells.reserve(np + ni);
  for (const std::string& w : m.producers) model.wells.push_back(w);
  for (const std::string& w : m.injectors) model.wells.push_back(w);
  model.p0_bar.resize(np + ni, 0.0);
  for (std::size_t n = 0; n < np; ++n) {
    auto it = p0.find(m.producers[n]);
    if (it != p0.end()) model.p0_bar[n] = it->second;
  }
  for (std::size_t j = 0; j < ni; ++j) {
    auto it = p0.find(m.injectors[j]);
    if (it != p0.end()) model.p0_bar[np + j] = it->second;
  }

  model.utrs = UtrMatrix(static_cast<int>(np + ni));
  for (std::size_t n = 0; n < np; ++n) {
    const double tau = m.tau_days[n];
    const double gamma = m.gamma_m3_per_bar[n];
    model.utrs.set(static_cast<int>(n), static_cast<int>(n),
                   crm_utr(tau, gamma, 0.0, UtrPairKind::self));
    // offset producers never interfere in the CRM form
    for (std::size_t p = 0; p < np; ++p) {
      if (p != n) model.utrs.deactivate(static_cast<int>(n), static_cast<int>(p));
    }
    for (std::size_t j = 0; j < ni; ++j) {
      const double f = m.connectivity(static_cast<long>(n), static_cast<long>(j));
      if (f > 0.0) {
        model.utrs.set(static_cast<int>(n), static_cast<int>(np + j),
                       crm_utr(0.0, gamma, f, UtrPairKind::from_injector));
      } else {
        model.utrs.deactivate(static_cast<int>(n), static_cast<int>(np + j));
      }
    }
  }
  return model;
}

EquivalenceReport equivalence_check(const CrmModel& m, const Scenario& s, double tolerance,
                                    const std::vector<double>& fallback_times) {
  EquivalenceReport report;
  report.tolerance = tolerance;

  std::map<std::string, double> p0;
  for (const std::string& prod : m.producers) {
    auto it = s.p0_bar.find(prod);
    p0[prod] = it == s.p0_bar.end() ? 0.0 : it->second;
  }
  const DeconvolutionModel conv = crm_to_mdcv(m, p0);

  std::map<std::string, RateHistory> production;
  std::map<std::string, RateHistory> injection;
  for (const std::string& prod : m.producers) {
    auto it = s.rates.find(prod);
    if (it != s.rates.end()) production[prod] = it->second;
  }
  for (const std::string& inj : m.injectors) {
    auto it = s.rates.find(inj);
    if (it != s.rates.end()) injection[inj] = it->second;
  }

  for (const std::string& prod : m.producers) {
    std::vector<double> times;
    auto pit = s.pressures.find(prod);
    if (pit != s.pressures.end() && !pit->second.empty()) {
      times = pit->second.times();
    } else {
      times = fallback_times;
    }
    if (times.empty()) continue;

    const std::vector<double> via_convolution =
        simulate_pressure_well(conv, s.rates, prod, times, SuperpositionForm::direct);
    const auto via_crm = crm_simulate_pressure(m, production, injection, p0, times);
    const auto& crm_samples = via_crm.at(prod).samples();

    auto& series = report.per_well[prod];
    series.reserve(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double a = via_convolution[i];
      const double b = crm_samples[i].p;
      const double diff = std::abs(a - b);
      const double rel = diff == 0.0 ? 0.0 : diff / std::max(std::abs(a), std::abs(b));
      series.emplace_back(times[i], rel);
      report.max_relative_deviation = std::max(report.max_relative_deviation, rel);
    }
  }
  report.pass = report.max_relative_deviation <= tolerance;
  return report;
}

}  // namespace wellflow
