#include "wellflow/well_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace wellflow {

std::string to_string(WellRole role) {
  return role == WellRole::producer ? "producer" : "injector";
}

WellRole well_role_from_string(const std::string& s) {
  if (s == "producer") return WellRole::producer;
  if (s == "injector") return WellRole::injector;
  throw std::invalid_argument("unknown well role '" + s + "'");
}

RateHistory::RateHistory(std::vector<Step> steps) : steps_(std::move(steps)) {
  double prev = -std::numeric_limits<double>::infinity();
  for (const Step& s : steps_) {
    if (!std::isfinite(s.t) || !std::isfinite(s.q))
      throw std::invalid_argument("rate step with non-finite entry");
    if (s.t < 0.0)
      throw std::invalid_argument("rate step before t = 0 violates q(t<=0) = 0");
    if (s.t <= prev) {
      throw std::invalid_argument(
          s.t == prev ? "duplicate rate timestamp" : "non-monotone rate time");
    }
    prev = s.t;
  }
  cum_.resize(steps_.size(), 0.0);
  for (std::size_t k = 1; k < steps_.size(); ++k) {
    cum_[k] = cum_[k - 1] + steps_[k - 1].q * (steps_[k].t - steps_[k - 1].t);
  }
}

namespace {
// Index of the step holding at time t (steps hold on [t_k, t_{k+1})),
// or -1 when t is before the first step.
int step_index(const std::vector<RateHistory::Step>& steps, double t) {
  auto it = std::upper_bound(steps.begin(), steps.end(), t,
                             [](double v, const RateHistory::Step& s) { return v < s.t; });
  return static_cast<int>(it - steps.begin()) - 1;
}
}  // namespace

double RateHistory::value_at(double t) const {
  if (t <= 0.0 && !(t == 0.0 && !steps_.empty() && steps_.front().t == 0.0)) return 0.0;
  const int k = step_index(steps_, t);
  return k < 0 ? 0.0 : steps_[static_cast<std::size_t>(k)].q;
}

double RateHistory::value_before(double t) const {
  if (t <= 0.0) return 0.0;
  int k = step_index(steps_, t);
  if (k >= 0 && steps_[static_cast<std::size_t>(k)].t == t) --k;  // exact step start: left limit
  return k < 0 ? 0.0 : steps_[static_cast<std::size_t>(k)].q;
}

double RateHistory::cumulative(double t) const {
  if (t <= 0.0 || steps_.empty()) return 0.0;
  const int k = step_index(steps_, t);
  if (k < 0) return 0.0;
  const auto ku = static_cast<std::size_t>(k);
  return cum_[ku] + steps_[ku].q * (t - steps_[ku].t);
}

double RateHistory::end_time() const { return steps_.empty() ? 0.0 : steps_.back().t; }

double RateHistory::max_abs() const {
  double m = 0.0;
  for (const Step& s : steps_) m = std::max(m, std::abs(s.q));
  return m;
}

std::vector<double> RateHistory::increments() const {
  std::vector<double> dq(steps_.size());
  double prev = 0.0;
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    dq[k] = steps_[k].q - prev;
    prev = steps_[k].q;
  }
  return dq;
}

RateHistory RateHistory::scaled(std::span<const double> factors) const {
  if (factors.size() != steps_.size())
    throw std::invalid_argument("correction factor count does not match step count");
  std::vector<Step> out = steps_;
  for (std::size_t k = 0; k < out.size(); ++k) out[k].q *= factors[k];
  return RateHistory(std::move(out));
}

RateHistory RateHistory::extended(const RateHistory& future) const {
  if (future.empty()) return *this;
  if (!steps_.empty() && future.steps_.front().t < end_time())
    throw std::invalid_argument("future rate steps overlap the recorded history");
  std::vector<Step> out = steps_;
  for (const Step& s : future.steps_) {
    if (!out.empty() && s.t == out.back().t)
      throw std::invalid_argument("future rate step duplicates the last recorded time");
    out.push_back(s);
  }
  return RateHistory(std::move(out));
}

PressureSeries::PressureSeries(std::vector<Sample> samples) : samples_(std::move(samples)) {
  double prev = -std::numeric_limits<double>::infinity();
  for (const Sample& s : samples_) {
    if (!std::isfinite(s.t) || !std::isfinite(s.p))
      throw std::invalid_argument("pressure sample with non-finite entry");
    if (s.w < 0.0 || !std::isfinite(s.w))
      throw std::invalid_argument("pressure trust weight must be finite and >= 0");
    if (s.t <= prev) {
      throw std::invalid_argument(
          s.t == prev ? "duplicate pressure timestamp" : "non-monotone pressure time");
    }
    prev = s.t;
  }
}

std::vector<double> PressureSeries::times() const {
  std::vector<double> t(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) t[i] = samples_[i].t;
  return t;
}

std::vector<double> PressureSeries::values() const {
  std::vector<double> p(samples_.size());
  for (std::size_t i = 0; i < samples_.size(); ++i) p[i] = samples_[i].p;
  return p;
}

double PressureSeries::interpolate(double t) const {
  if (samples_.empty()) throw std::invalid_argument("interpolating an empty pressure series");
  if (t <= samples_.front().t) return samples_.front().p;
  if (t >= samples_.back().t) return samples_.back().p;
  auto it = std::lower_bound(samples_.begin(), samples_.end(), t,
                             [](const Sample& s, double v) { return s.t < v; });
  const Sample& hi = *it;
  const Sample& lo = *(it - 1);
  const double a = (t - lo.t) / (hi.t - lo.t);
  return lo.p + a * (hi.p - lo.p);
}

const Well* Scenario::find(const std::string& name) const {
  for (const Well& w : wells)
    if (w.name == name) return &w;
  return nullptr;
}

int Scenario::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < wells.size(); ++i)
    if (wells[i].name == name) return static_cast<int>(i);
  return -1;
}

std::vector<std::string> Scenario::well_names() const {
  std::vector<std::string> names;
  names.reserve(wells.size());
  for (const Well& w : wells) names.push_back(w.name);
  return names;
}

std::vector<std::string> Scenario::producers() const {
  std::vector<std::string> names;
  for (const Well& w : wells)
    if (w.role == WellRole::producer) names.push_back(w.name);
  return names;
}

std::vector<std::string> Scenario::injectors() const {
  std::vector<std::string> names;
  for (const Well& w : wells)
    if (w.role == WellRole::injector) names.push_back(w.name);
  return names;
}

double Scenario::span() const {
  double t = 0.0;
  for (const auto& [name, rh] : rates)
    if (!rh.empty()) t = std::max(t, rh.end_time());
  for (const auto& [name, ps] : pressures)
    if (!ps.empty()) t = std::max(t, ps.samples().back().t);
  return t;
}

void Scenario::validate() const {
  std::set<std::string> seen;
  for (const Well& w : wells) {
    if (w.name.empty()) throw std::invalid_argument("well with empty name");
    if (!seen.insert(w.name).second)
      throw std::invalid_argument("duplicate well name '" + w.name + "'");
  }
  for (const Well& w : wells) {
    if (!rates.count(w.name))
      throw std::invalid_argument("well '" + w.name + "' has no rate history");
  }
  for (const auto& [name, rh] : rates) {
    if (!find(name)) throw std::invalid_argument("rate history for undeclared well '" + name + "'");
  }
  for (const auto& [name, ps] : pressures) {
    if (!find(name))
      throw std::invalid_argument("pressure series for undeclared well '" + name + "'");
  }
  for (const auto& [name, p0] : p0_bar) {
    if (!find(name)) throw std::invalid_argument("p0 for undeclared well '" + name + "'");
    if (!std::isfinite(p0)) throw std::invalid_argument("non-finite p0 for well '" + name + "'");
  }
  if (cumulative_reference) {
    const auto& cr = *cumulative_reference;
    if (cr.t_days.size() != cr.cumulative_m3.size())
      throw std::invalid_argument("cumulative reference times/volumes length mismatch");
    if (!std::is_sorted(cr.t_days.begin(), cr.t_days.end()))
      throw std::invalid_argument("cumulative reference times must be sorted");
  }
}

SplitSpec SplitSpec::at(double boundary) {
  SplitSpec s;
  s.mode = Mode::train_then_validate;
  s.boundary_days = boundary;
  return s;
}

SplitSpec SplitSpec::intervals(std::vector<std::pair<double, double>> train) {
  SplitSpec s;
  s.mode = Mode::interval_list;
  s.train_intervals = std::move(train);
  return s;
}

namespace {
bool in_training(const SplitSpec& spec, double t) {
  if (spec.mode == SplitSpec::Mode::train_then_validate) return t < spec.boundary_days;
  for (const auto& [a, b] : spec.train_intervals)
    if (t >= a && t < b) return true;
  return false;
}
}  // namespace

std::pair<Scenario, Scenario> split_dataset(const Scenario& s, const SplitSpec& spec) {
  if (spec.mode == SplitSpec::Mode::interval_list) {
    for (const auto& [a, b] : spec.train_intervals)
      if (!(a < b)) throw std::invalid_argument("empty or inverted training interval");
  }
  Scenario train = s;
  Scenario validate = s;
  std::size_t n_train = 0;
  std::size_t n_validate = 0;
  for (const auto& [name, ps] : s.pressures) {
    std::vector<PressureSeries::Sample> tr;
    std::vector<PressureSeries::Sample> va;
    for (const auto& sample : ps.samples()) {
      (in_training(spec, sample.t) ? tr : va).push_back(sample);
    }
    n_train += tr.size();
    n_validate += va.size();
    train.pressures[name] = PressureSeries(std::move(tr));
    validate.pressures[name] = PressureSeries(std::move(va));
  }
  if (n_train == 0) throw std::invalid_argument("split produced an empty training partition");
  if (n_validate == 0) throw std::invalid_argument("split produced an empty validation partition");
  return {std::move(train), std::move(validate)};
}

std::string to_string(QcReport::Verdict v) {
  switch (v) {
    case QcReport::Verdict::pass: return "pass";
    case QcReport::Verdict::warn: return "warn";
    case QcReport::Verdict::fail: return "fail";
  }
  return "?";
}

QcReport qc_report(const Scenario& s, const QcOptions& opt) {
  QcReport report;
  bool any_warn = false;
  int wells_with_rates = 0;
  int wells_without_variation = 0;

  for (const Well& w : s.wells) {
    QcReport::WellFlags flags;

    auto pit = s.pressures.find(w.name);
    if (pit != s.pressures.end() && pit->second.size() >= 2) {
      const auto& samples = pit->second.samples();
      double min_increment = std::numeric_limits<double>::infinity();
      std::vector<double> dts;
      dts.reserve(samples.size() - 1);
      for (std::size_t i = 1; i < samples.size(); ++i) {
        const double dp = std::abs(samples[i].p - samples[i - 1].p);
        if (dp > 0.0) min_increment = std::min(min_increment, dp);
        dts.push_back(samples[i].t - samples[i - 1].t);
      }
      if (std::isfinite(min_increment))
        flags.pressure_resolution_ok = min_increment <= opt.pressure_resolution_bar;
      std::nth_element(dts.begin(), dts.begin() + static_cast<long>(dts.size() / 2), dts.end());
      const double median_dt = dts[dts.size() / 2];
      flags.sampling_rate_ok = median_dt <= opt.sampling_interval_days * (1.0 + 1e-12);
    }

    const RateHistory& rh = s.rates.at(w.name);
    const double qmax = rh.max_abs();
    if (!rh.empty() && qmax > 0.0) {
      ++wells_with_rates;
      const auto& steps = rh.steps();
      for (std::size_t k = 1; k < steps.size(); ++k) {
        const double dq = std::abs(steps[k].q - steps[k - 1].q);
        flags.max_relative_amplitude = std::max(flags.max_relative_amplitude, dq / qmax);
        if (dq > opt.variation_threshold * qmax) ++flags.rate_variation_events;
      }
      flags.no_variation = flags.rate_variation_events == 0;
      if (flags.no_variation) ++wells_without_variation;
    }

    if (!flags.pressure_resolution_ok || !flags.sampling_rate_ok || flags.no_variation)
      any_warn = true;
    report.wells[w.name] = flags;
  }

  if (s.cumulative_reference && !s.cumulative_reference->t_days.empty()) {
    double worst = 0.0;
    for (std::size_t j = 0; j < s.cumulative_reference->t_days.size(); ++j) {
      const double t = s.cumulative_reference->t_days[j];
      const double ref = s.cumulative_reference->cumulative_m3[j];
      double model = 0.0;
      for (const std::string& name : s.producers()) model += s.rates.at(name).cumulative(t);
      if (ref != 0.0) worst = std::max(worst, std::abs(model - ref) / std::abs(ref));
    }
    report.cumulative_deviation = worst;
    if (worst > opt.cumulative_tolerance) any_warn = true;
  }

  // Rates that never vary anywhere leave nothing for either engine to train
  // on; that is the one fatal condition. Anything else is a warning.
  if (wells_with_rates > 0 && wells_without_variation == wells_with_rates) {
    report.verdict = QcReport::Verdict::fail;
  } else if (any_warn) {
    report.verdict = QcReport::Verdict::warn;
  } else {
    report.verdict = QcReport::Verdict::pass;
  }
  return report;
}

}  // namespace wellflow
