#include "wellflow/crm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>

#include "wellflow/nnls.hpp"

namespace wellflow {

int CrmModel::producer_index(const std::string& name) const {
  for (std::size_t i = 0; i < producers.size(); ++i)
    if (producers[i] == name) return static_cast<int>(i);
  return -1;
}

int CrmModel::injector_index(const std::string& name) const {
  for (std::size_t i = 0; i < injectors.size(); ++i)
    if (injectors[i] == name) return static_cast<int>(i);
  return -1;
}

double CrmModel::productivity_index(int producer) const {
  const double tau = tau_days[static_cast<std::size_t>(producer)];
  const double gamma = gamma_m3_per_bar[static_cast<std::size_t>(producer)];
  if (tau == 0.0) return std::numeric_limits<double>::infinity();
  return gamma / tau;
}

void CrmModel::validate(bool strict_allocation, double tol) const {
  const auto np = producers.size();
  const auto ni = injectors.size();
  if (tau_days.size() != np || gamma_m3_per_bar.size() != np)
    throw std::invalid_argument("CRM parameter vectors do not match producer count");
  if (connectivity.rows() != static_cast<long>(np) || connectivity.cols() != static_cast<long>(ni))
    throw std::invalid_argument("CRM connectivity shape mismatch");
  for (std::size_t n = 0; n < np; ++n) {
    if (!(tau_days[n] >= 0.0)) throw std::invalid_argument("tau must be >= 0");
    if (!(gamma_m3_per_bar[n] >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  }
  for (long m = 0; m < connectivity.cols(); ++m) {
    double col = 0.0;
    for (long n = 0; n < connectivity.rows(); ++n) {
      const double f = connectivity(n, m);
      if (f < 0.0 || f > 1.0) throw std::invalid_argument("connectivity outside [0, 1]");
      col += f;
    }
    if (col > 1.0 + tol) throw std::invalid_argument("connectivity column sum exceeds 1");
    if (strict_allocation && std::abs(col - 1.0) > tol)
      throw std::invalid_argument("strict allocation requires column sums of exactly 1");
  }
}

void CrmModel::project_constraints(bool strict_allocation) {
  for (double& tau : tau_days) tau = std::max(tau, 0.0);
  for (double& g : gamma_m3_per_bar) g = std::max(g, 0.0);
  for (long m = 0; m < connectivity.cols(); ++m) {
    double col = 0.0;
    for (long n = 0; n < connectivity.rows(); ++n) {
      connectivity(n, m) = std::clamp(connectivity(n, m), 0.0, 1.0);
      col += connectivity(n, m);
    }
    if (col > 1.0 || (strict_allocation && col > 0.0 && col != 1.0)) {
      for (long n = 0; n < connectivity.rows(); ++n) connectivity(n, m) /= col;
    }
  }
}

namespace {

std::vector<double> union_grid(const CrmModel& m,
                               const std::map<std::string, RateHistory>& injections,
                               const std::map<std::string, PressureSeries>& bhp, double t_end,
                               const std::vector<double>& extra) {
  std::set<double> pts;
  pts.insert(0.0);
  for (const std::string& inj : m.injectors) {
    auto it = injections.find(inj);
    if (it == injections.end()) continue;
    for (const auto& s : it->second.steps())
      if (s.t < t_end) pts.insert(s.t);
  }
  for (const auto& [well, series] : bhp) {
    for (const auto& s : series.samples())
      if (s.t <= t_end) pts.insert(s.t);
  }
  for (double t : extra)
    if (t <= t_end) pts.insert(t);
  pts.insert(t_end);
  return {pts.begin(), pts.end()};
}

}  // namespace

std::map<std::string, RateHistory> crm_simulate_rates(
    const CrmModel& m, const std::map<std::string, RateHistory>& injections,
    const std::map<std::string, PressureSeries>& bhp, const std::map<std::string, double>& q0,
    const std::vector<double>& times) {
  if (times.empty()) throw std::invalid_argument("no query times");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0.0) throw std::invalid_argument("negative query time");
    if (i > 0 && times[i] <= times[i - 1])
      throw std::invalid_argument("query times must increase");
  }
  const double t_end = times.back();
  const std::vector<double> grid = union_grid(m, injections, bhp, t_end, times);

  std::map<std::string, RateHistory> out;
  for (std::size_t n = 0; n < m.producers.size(); ++n) {
    const std::string& name = m.producers[n];
    const double tau = m.tau_days[n];
    const double gamma = m.gamma_m3_per_bar[n];
    auto pit = bhp.find(name);
    if (pit == bhp.end() || pit->second.empty())
      throw std::invalid_argument("missing bottomhole pressure for producer '" + name + "'");
    const PressureSeries& p = pit->second;

    auto support = [&](double t) {
      double s = 0.0;
      for (std::size_t j = 0; j < m.injectors.size(); ++j) {
        const double f = m.connectivity(static_cast<long>(n), static_cast<long>(j));
        if (f == 0.0) continue;
        auto it = injections.find(m.injectors[j]);
        if (it == injections.end()) continue;
        s += f * -it->second.value_at(t);  // stored injection is negative
      }
      return s;
    };

    auto q0_it = q0.find(name);
    double q = q0_it == q0.end() ? 0.0 : q0_it->second;

    std::vector<RateHistory::Step> steps;
    std::size_t next_query = 0;
    auto emit = [&](double t, double value) {
      while (next_query < times.size() && times[next_query] == t) {
        steps.push_back({t, value});
        ++next_query;
      }
    };
    emit(grid.front(), q);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
      const double dt = grid[k + 1] - grid[k];
      const double dpdt = (p.interpolate(grid[k + 1]) - p.interpolate(grid[k])) / dt;
      const double forcing = support(grid[k]) - gamma * dpdt;
      if (tau > 0.0) {
        const double decay = std::exp(-dt / tau);
        q = q * decay + (1.0 - decay) * forcing;
      } else {
        q = forcing;  // algebraic limit of the rate equation
      }
      emit(grid[k + 1], q);
    }
    out[name] = RateHistory(std::move(steps));
  }
  return out;
}

std::map<std::string, PressureSeries> crm_simulate_pressure(
    const CrmModel& m, const std::map<std::string, RateHistory>& production,
    const std::map<std::string, RateHistory>& injections,
    const std::map<std::string, double>& p_start, const std::vector<double>& times,
    const std::map<std::string, double>& q0) {
  std::map<std::string, PressureSeries> out;
  for (std::size_t n = 0; n < m.producers.size(); ++n) {
    const std::string& name = m.producers[n];
    const double tau = m.tau_days[n];
    const double gamma = m.gamma_m3_per_bar[n];
    if (!(gamma > 0.0))
      throw std::invalid_argument("pressure form requires gamma > 0 for producer '" + name + "'");
    const RateHistory& prod = production.count(name) ? production.at(name) : RateHistory();
    auto q0_it = q0.find(name);
    const double q_initial = q0_it == q0.end() ? 0.0 : q0_it->second;
    const double p_init = p_start.at(name);

    std::vector<PressureSeries::Sample> samples;
    samples.reserve(times.size());
    for (double t : times) {
      double inj_support = 0.0;
      for (std::size_t j = 0; j < m.injectors.size(); ++j) {
        const double f = m.connectivity(static_cast<long>(n), static_cast<long>(j));
        if (f == 0.0) continue;
        auto it = injections.find(m.injectors[j]);
        if (it == injections.end()) continue;
        inj_support += f * -it->second.cumulative(t);  // Q_down >= 0
      }
      const double p = p_init - tau / gamma * (prod.value_before(t) - q_initial) -
                       prod.cumulative(t) / gamma + inj_support / gamma;
      samples.push_back({t, p, 1.0});
    }
    out[name] = PressureSeries(std::move(samples));
  }
  return out;
}

PressureSeries formation_pressure(const CrmModel& m, const PressureSeries& bhp,
                                  const RateHistory& rate, const std::string& producer) {
  const int n = m.producer_index(producer);
  if (n < 0) throw std::invalid_argument("'" + producer + "' is not a producer in this model");
  const double j_index = m.productivity_index(n);
  if (j_index == 0.0)
    throw std::invalid_argument("formation pressure undefined for zero productivity index");
  std::vector<PressureSeries::Sample> samples;
  samples.reserve(bhp.size());
  for (const auto& s : bhp.samples()) {
    const double add = std::isinf(j_index) ? 0.0 : rate.value_at(s.t) / j_index;
    samples.push_back({s.t, s.p + add, s.w});
  }
  return PressureSeries(std::move(samples));
}

// --------------------------------------------------------------------------
// Fitting
// --------------------------------------------------------------------------
namespace {

struct SourceSignals {
  std::vector<std::string> names;  // injectors first, then paired producers
  std::size_t injector_count = 0;
  std::vector<const RateHistory*> histories;

  // support rate (positive for injection) and its cumulative
  double support(std::size_t j, double t) const { return -histories[j]->value_at(t); }
  double support_cumulative(std::size_t j, double t) const {
    return -histories[j]->cumulative(t);
  }
};

struct ProducerBlock {
  std::string name;
  // rate-fit rows
  std::vector<double> rate_times;
  Eigen::VectorXd rate_obs;
  // pressure/icrm rows
  std::vector<double> sample_times;
  Eigen::VectorXd p_obs;
  Eigen::VectorXd q_cum;      // recorded production cumulative at sample times
  Eigen::VectorXd q_at;       // recorded rate (left limit) at sample times
  double p_start = 0.0;
  bool p0_known = false;
  double q0 = 0.0;
};

// Linear system rows for one producer at fixed tau. Variables are
// (gamma, f_1 .. f_S) except pressure_fit which uses (u, v_1 .. v_S) with
// u = 1/gamma, v = f/gamma.
struct ProducerSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  bool reciprocal_vars = false;  // pressure_fit parameterization
};

// Exact unit-response columns of the rate equation on the union grid:
// the per-step recursion is affine in (q0, gamma, f), so one march per
// parameter column reproduces crm_simulate_rates exactly.
ProducerSystem build_rate_rows(const ProducerBlock& blk, const SourceSignals& src,
                               const PressureSeries& bhp, double tau,
                               const std::vector<double>& grid) {
  const std::size_t n_src = src.names.size();
  const std::size_t n_rows = blk.rate_times.size();
  ProducerSystem sys;
  sys.a.resize(static_cast<long>(n_rows), static_cast<long>(1 + n_src));
  sys.b.resize(static_cast<long>(n_rows));

  std::vector<double> dpdt(grid.size() - 1);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k)
    dpdt[k] = (bhp.interpolate(grid[k + 1]) - bhp.interpolate(grid[k])) / (grid[k + 1] - grid[k]);

  // state = [base (q0 decay), gamma column, source columns...]
  std::vector<double> state(2 + n_src, 0.0);
  state[0] = blk.q0;
  std::vector<std::size_t> row_of_grid(grid.size(), SIZE_MAX);
  {
    std::size_t r = 0;
    for (std::size_t k = 0; k < grid.size() && r < n_rows; ++k) {
      if (grid[k] == blk.rate_times[r]) row_of_grid[k] = r++;
    }
  }
  auto write_row = [&](std::size_t k) {
    const std::size_t r = row_of_grid[k];
    if (r == SIZE_MAX) return;
    sys.b(static_cast<long>(r)) = blk.rate_obs(static_cast<long>(r)) - state[0];
    sys.a(static_cast<long>(r), 0) = state[1];
    for (std::size_t j = 0; j < n_src; ++j)
      sys.a(static_cast<long>(r), static_cast<long>(1 + j)) = state[2 + j];
  };
  write_row(0);
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
    const double dt = grid[k + 1] - grid[k];
    const double decay = tau > 0.0 ? std::exp(-dt / tau) : 0.0;
    const double gain = 1.0 - decay;
    state[0] = state[0] * decay;                  // q0 response, forcing 0
    state[1] = state[1] * decay + gain * -dpdt[k];  // gamma column
    for (std::size_t j = 0; j < n_src; ++j)
      state[2 + j] = state[2 + j] * decay + gain * src.support(j, grid[k]);
    write_row(k + 1);
  }
  return sys;
}

ProducerSystem build_icrm_rows(const ProducerBlock& blk, const SourceSignals& src, double tau) {
  const std::size_t n_src = src.names.size();
  const std::size_t n_rows = blk.sample_times.size();
  ProducerSystem sys;
  // gamma column is (p0 - p(t)); when p0 is unknown the product gamma*p0
  // becomes one extra non-negative variable recovered as p0 = c/gamma.
  const long extra = blk.p0_known ? 0 : 1;
  sys.a.resize(static_cast<long>(n_rows), 1 + extra + static_cast<long>(n_src));
  sys.b.resize(static_cast<long>(n_rows));
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double t = blk.sample_times[r];
    sys.b(static_cast<long>(r)) = blk.q_cum(static_cast<long>(r)) + tau * blk.q_at(static_cast<long>(r));
    sys.a(static_cast<long>(r), 0) =
        blk.p0_known ? (blk.p_start - blk.p_obs(static_cast<long>(r))) : -blk.p_obs(static_cast<long>(r));
    if (!blk.p0_known) sys.a(static_cast<long>(r), 1) = 1.0;
    for (std::size_t j = 0; j < n_src; ++j)
      sys.a(static_cast<long>(r), 1 + extra + static_cast<long>(j)) =
          src.support_cumulative(j, t);
  }
  return sys;
}

ProducerSystem build_pressure_rows(const ProducerBlock& blk, const SourceSignals& src,
                                   double tau) {
  const std::size_t n_src = src.names.size();
  const std::size_t n_rows = blk.sample_times.size();
  ProducerSystem sys;
  sys.reciprocal_vars = true;
  sys.a.resize(static_cast<long>(n_rows), static_cast<long>(1 + n_src));
  sys.b.resize(static_cast<long>(n_rows));
  for (std::size_t r = 0; r < n_rows; ++r) {
    const double t = blk.sample_times[r];
    sys.b(static_cast<long>(r)) = blk.p_obs(static_cast<long>(r)) - blk.p_start;
    sys.a(static_cast<long>(r), 0) =
        -(tau * (blk.q_at(static_cast<long>(r)) - blk.q0) + blk.q_cum(static_cast<long>(r)));
    for (std::size_t j = 0; j < n_src; ++j)
      sys.a(static_cast<long>(r), static_cast<long>(1 + j)) = src.support_cumulative(j, t);
  }
  return sys;
}

struct InnerSolution {
  std::vector<Eigen::VectorXd> x;  // per producer
  double sse = 0.0;
};

constexpr double kInf = std::numeric_limits<double>::infinity();

// Solve one producer's system with bounds only (no cross-producer coupling).
Eigen::VectorXd solve_single(const ProducerSystem& sys, std::size_t n_injector_vars,
                             long var_offset_f) {
  const long n_vars = sys.a.cols();
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(n_vars);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(n_vars, kInf);
  for (long j = var_offset_f; j < n_vars; ++j) upper(j) = 1.0;
  Eigen::MatrixXd c_in;
  Eigen::VectorXd d_in;
  if (sys.reciprocal_vars) {
    // v_j <= u expresses f_j <= 1 in the reciprocal variables
    upper.tail(n_vars - 1).setConstant(kInf);
    c_in.resize(n_vars - 1, n_vars);
    c_in.setZero();
    d_in = Eigen::VectorXd::Zero(n_vars - 1);
    for (long j = 1; j < n_vars; ++j) {
      c_in(j - 1, j) = 1.0;
      c_in(j - 1, 0) = -1.0;
    }
  }
  (void)n_injector_vars;
  return bounded_least_squares(sys.a, sys.b, lower, upper, c_in, d_in).x;
}

double system_sse(const ProducerSystem& sys, const Eigen::VectorXd& x) {
  return (sys.a * x - sys.b).squaredNorm();
}

}  // namespace

std::pair<std::optional<CrmModel>, FitReport> crm_fit(const Scenario& training,
                                                      const CrmFitOptions& opt) {
  training.validate();
  FitReport report;

  {
    QcOptions qc_opt;
    qc_opt.variation_threshold = opt.variation_threshold;
    const QcReport qc = qc_report(training, qc_opt);
    if (qc.verdict == QcReport::Verdict::fail) {
      report.status = FitReport::Status::no_variation;
      return {std::nullopt, report};
    }
  }

  const double span = training.span();
  const double tau_lo = opt.tau_min_days;
  const double tau_hi = std::max(tau_lo * 10.0, opt.tau_max_factor * span);

  // source signals shared by every producer
  SourceSignals src;
  for (const std::string& inj : training.injectors()) {
    src.names.push_back(inj);
    src.histories.push_back(&training.rates.at(inj));
  }
  src.injector_count = src.names.size();

  const bool needs_pressure = opt.mode != CrmFitMode::rate_fit;
  std::vector<ProducerBlock> blocks;
  for (const std::string& prod : training.producers()) {
    ProducerBlock blk;
    blk.name = prod;
    const RateHistory& rh = training.rates.at(prod);
    if (rh.empty()) continue;
    auto pit = training.pressures.find(prod);
    const bool has_pressure = pit != training.pressures.end() && pit->second.size() >= 2;
    if ((opt.mode == CrmFitMode::rate_fit || opt.mode == CrmFitMode::weighted_combo) &&
        !has_pressure)
      continue;  // the rate equation is driven by the producer's BHP
    if (needs_pressure && !has_pressure) continue;

    blk.q0 = opt.assume_running_start ? rh.steps().front().q : 0.0;
    for (const auto& s : rh.steps()) blk.rate_times.push_back(s.t);
    blk.rate_obs.resize(static_cast<long>(blk.rate_times.size()));
    for (std::size_t i = 0; i < blk.rate_times.size(); ++i)
      blk.rate_obs(static_cast<long>(i)) = rh.steps()[i].q;

    if (has_pressure) {
      const auto& samples = pit->second.samples();
      blk.sample_times.reserve(samples.size());
      for (const auto& s : samples) blk.sample_times.push_back(s.t);
      blk.p_obs.resize(static_cast<long>(samples.size()));
      blk.q_cum.resize(static_cast<long>(samples.size()));
      blk.q_at.resize(static_cast<long>(samples.size()));
      for (std::size_t i = 0; i < samples.size(); ++i) {
        blk.p_obs(static_cast<long>(i)) = samples[i].p;
        blk.q_cum(static_cast<long>(i)) = rh.cumulative(samples[i].t);
        blk.q_at(static_cast<long>(i)) = rh.value_before(samples[i].t);
      }
      auto p0_it = training.p0_bar.find(prod);
      blk.p0_known = p0_it != training.p0_bar.end();
      blk.p_start = blk.p0_known ? p0_it->second : samples.front().p;
    }
    blocks.push_back(std::move(blk));
  }
  if (blocks.empty())
    throw std::invalid_argument("no producer has the data required by this fit mode");

  // producer-producer pairing, appended after the injector sources
  if (opt.producer_interference) {
    for (const ProducerBlock& blk : blocks) {
      src.names.push_back(blk.name);
      src.histories.push_back(&training.rates.at(blk.name));
    }
  }

  std::map<std::string, std::vector<double>> grids;  // per producer union grid
  for (const ProducerBlock& blk : blocks) {
    if (opt.mode != CrmFitMode::rate_fit && opt.mode != CrmFitMode::weighted_combo) continue;
    std::set<double> pts(blk.rate_times.begin(), blk.rate_times.end());
    pts.insert(0.0);
    const PressureSeries& bhp = training.pressures.at(blk.name);
    for (const auto& s : bhp.samples()) pts.insert(s.t);
    for (std::size_t j = 0; j < src.names.size(); ++j)
      for (const auto& s : src.histories[j]->steps()) pts.insert(s.t);
    grids[blk.name] = std::vector<double>(pts.begin(), pts.end());
  }

  auto build_system = [&](const ProducerBlock& blk, double tau) -> ProducerSystem {
    switch (opt.mode) {
      case CrmFitMode::rate_fit:
        return build_rate_rows(blk, src, training.pressures.at(blk.name), tau,
                               grids.at(blk.name));
      case CrmFitMode::icrm_fit:
        return build_icrm_rows(blk, src, tau);
      case CrmFitMode::pressure_fit:
        return build_pressure_rows(blk, src, tau);
      case CrmFitMode::weighted_combo: {
        ProducerSystem rate = build_rate_rows(blk, src, training.pressures.at(blk.name), tau,
                                              grids.at(blk.name));
        ProducerSystem icrm = build_icrm_rows(blk, src, tau);
        // pad the rate rows when the icrm block carries the extra gamma*p0 var
        const long vars = std::max(rate.a.cols(), icrm.a.cols());
        ProducerSystem sys;
        sys.a.resize(rate.a.rows() + icrm.a.rows(), vars);
        sys.a.setZero();
        sys.b.resize(rate.b.size() + icrm.b.size());
        const double wr = std::sqrt(opt.combo_rate_weight);
        const double wi = std::sqrt(opt.combo_icrm_weight);
        sys.a.block(0, 0, rate.a.rows(), 1) = wr * rate.a.col(0);
        sys.a.block(0, vars - static_cast<long>(src.names.size()), rate.a.rows(),
                    static_cast<long>(src.names.size())) =
            wr * rate.a.rightCols(static_cast<long>(src.names.size()));
        sys.b.head(rate.b.size()) = wr * rate.b;
        sys.a.block(rate.a.rows(), 0, icrm.a.rows(), icrm.a.cols()) = wi * icrm.a;
        sys.b.tail(icrm.b.size()) = wi * icrm.b;
        return sys;
      }
    }
    throw std::logic_error("unreachable fit mode");
  };

  // variable layout inside one producer's block
  auto f_offset = [&](const ProducerBlock& blk) -> long {
    if (opt.mode == CrmFitMode::pressure_fit) return 1;
    if ((opt.mode == CrmFitMode::icrm_fit || opt.mode == CrmFitMode::weighted_combo) &&
        !blk.p0_known)
      return 2;
    return 1;
  };

  auto solve_block = [&](const ProducerBlock& blk, double tau) {
    const ProducerSystem sys = build_system(blk, tau);
    const Eigen::VectorXd x = solve_single(sys, src.injector_count, f_offset(blk));
    return std::make_pair(system_sse(sys, x), x);
  };

  // coarse log-grid scan plus golden-section refinement, per producer
  auto search_tau = [&](const ProducerBlock& blk, auto&& sse_of_tau) {
    const double l_lo = std::log(tau_lo);
    const double l_hi = std::log(tau_hi);
    int best = 0;
    double best_val = kInf;
    std::vector<double> ls(static_cast<std::size_t>(opt.tau_grid_points));
    for (int i = 0; i < opt.tau_grid_points; ++i) {
      ls[static_cast<std::size_t>(i)] = l_lo + (l_hi - l_lo) * i / (opt.tau_grid_points - 1);
      const double v = sse_of_tau(std::exp(ls[static_cast<std::size_t>(i)]));
      if (v < best_val) {
        best_val = v;
        best = i;
      }
    }
    double a = ls[static_cast<std::size_t>(std::max(0, best - 1))];
    double b = ls[static_cast<std::size_t>(std::min(opt.tau_grid_points - 1, best + 1))];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a);
    double x2 = a + gr * (b - a);
    double f1 = sse_of_tau(std::exp(x1));
    double f2 = sse_of_tau(std::exp(x2));
    while (b - a > opt.tau_rel_tol) {
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = sse_of_tau(std::exp(x1));
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = sse_of_tau(std::exp(x2));
      }
    }
    (void)blk;
    return std::exp(0.5 * (a + b));
  };

  // stage 1: independent per-producer fits
  std::vector<double> taus(blocks.size(), tau_lo);
  std::vector<Eigen::VectorXd> solutions(blocks.size());
  double total_sse = 0.0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    taus[i] = search_tau(blocks[i], [&](double tau) { return solve_block(blocks[i], tau).first; });
    auto [sse, x] = solve_block(blocks[i], taus[i]);
    solutions[i] = x;
    total_sse += sse;
  }
  report.objective_trace.push_back(total_sse);

  // stage 2: only when the per-injector allocation couples producers
  const bool reciprocal = opt.mode == CrmFitMode::pressure_fit;
  auto column_sums_ok = [&]() {
    if (reciprocal) return true;  // handled by projection below
    for (std::size_t j = 0; j < src.injector_count; ++j) {
      double col = 0.0;
      for (std::size_t i = 0; i < blocks.size(); ++i)
        col += solutions[i](f_offset(blocks[i]) + static_cast<long>(j));
      if (opt.strict_allocation ? std::abs(col - 1.0) > 1e-9 : col > 1.0 + 1e-9) return false;
    }
    return true;
  };

  if (!column_sums_ok() || (opt.strict_allocation && !reciprocal)) {
    // joint QP across producers with per-injector coupling rows
    auto joint_solve = [&](const std::vector<double>& tau_vec) {
      std::vector<ProducerSystem> systems;
      systems.reserve(blocks.size());
      long n_vars = 0;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        systems.push_back(build_system(blocks[i], tau_vec[i]));
        n_vars += systems.back().a.cols();
      }
      QpProblem qp;
      qp.hessian = Eigen::MatrixXd::Zero(n_vars, n_vars);
      qp.gradient = Eigen::VectorXd::Zero(n_vars);
      std::vector<long> offsets(blocks.size());
      long off = 0;
      double const_term = 0.0;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        offsets[i] = off;
        const auto& sys = systems[i];
        qp.hessian.block(off, off, sys.a.cols(), sys.a.cols()) = sys.a.transpose() * sys.a;
        qp.gradient.segment(off, sys.a.cols()) = -sys.a.transpose() * sys.b;
        const_term += sys.b.squaredNorm();
        off += sys.a.cols();
      }
      // bounds: everything >= 0, f vars <= 1
      long n_bounds = n_vars;
      long n_f = static_cast<long>(blocks.size() * src.names.size());
      Eigen::MatrixXd c_in = Eigen::MatrixXd::Zero(
          n_bounds + n_f + static_cast<long>(src.injector_count) * (opt.strict_allocation ? 0 : 1),
          n_vars);
      Eigen::VectorXd d_in(c_in.rows());
      long row = 0;
      for (long v = 0; v < n_vars; ++v) {
        c_in(row, v) = -1.0;
        d_in(row) = 0.0;
        ++row;
      }
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const long fo = offsets[i] + f_offset(blocks[i]);
        for (std::size_t j = 0; j < src.names.size(); ++j) {
          c_in(row, fo + static_cast<long>(j)) = 1.0;
          d_in(row) = 1.0;
          ++row;
        }
      }
      Eigen::MatrixXd c_eq;
      Eigen::VectorXd d_eq;
      if (opt.strict_allocation) {
        c_eq = Eigen::MatrixXd::Zero(static_cast<long>(src.injector_count), n_vars);
        d_eq = Eigen::VectorXd::Ones(static_cast<long>(src.injector_count));
        for (std::size_t j = 0; j < src.injector_count; ++j)
          for (std::size_t i = 0; i < blocks.size(); ++i)
            c_eq(static_cast<long>(j), offsets[i] + f_offset(blocks[i]) + static_cast<long>(j)) =
                1.0;
      } else {
        for (std::size_t j = 0; j < src.injector_count; ++j) {
          for (std::size_t i = 0; i < blocks.size(); ++i)
            c_in(row, offsets[i] + f_offset(blocks[i]) + static_cast<long>(j)) = 1.0;
          d_in(row) = 1.0;
          ++row;
        }
      }
      qp.c_in = c_in;
      qp.d_in = d_in;
      qp.c_eq = c_eq;
      qp.d_eq = d_eq;

      Eigen::VectorXd start = Eigen::VectorXd::Zero(n_vars);
      if (opt.strict_allocation) {
        for (std::size_t j = 0; j < src.injector_count; ++j)
          for (std::size_t i = 0; i < blocks.size(); ++i)
            start(offsets[i] + f_offset(blocks[i]) + static_cast<long>(j)) =
                1.0 / static_cast<double>(blocks.size());
      }
      const QpResult qr = solve_qp(qp, start);
      const double sse =
          const_term + qr.x.transpose() * qp.hessian * qr.x + 2.0 * qp.gradient.dot(qr.x);
      std::vector<Eigen::VectorXd> xs(blocks.size());
      for (std::size_t i = 0; i < blocks.size(); ++i)
        xs[i] = qr.x.segment(offsets[i], systems[i].a.cols());
      return std::make_pair(sse, xs);
    };

    for (int sweep = 0; sweep < opt.max_coupling_sweeps; ++sweep) {
      bool moved = false;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const double old_tau = taus[i];
        std::vector<double> trial = taus;
        taus[i] = search_tau(blocks[i], [&](double tau) {
          trial[i] = tau;
          return joint_solve(trial).first;
        });
        if (std::abs(std::log(taus[i] / old_tau)) > 1e-6) moved = true;
      }
      auto [sse, xs] = joint_solve(taus);
      solutions = xs;
      if (report.objective_trace.empty() || sse < report.objective_trace.back())
        report.objective_trace.push_back(sse);
      total_sse = sse;
      if (!moved) break;
    }
  }

  // assemble the model
  CrmModel model;
  for (const ProducerBlock& blk : blocks) model.producers.push_back(blk.name);
  for (std::size_t j = 0; j < src.injector_count; ++j) model.injectors.push_back(src.names[j]);
  model.tau_days = taus;
  model.gamma_m3_per_bar.resize(blocks.size());
  model.connectivity.resize(static_cast<long>(blocks.size()),
                            static_cast<long>(src.injector_count));
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const Eigen::VectorXd& x = solutions[i];
    const long fo = f_offset(blocks[i]);
    if (reciprocal) {
      const double u = x(0);
      if (u <= 0.0) {
        report.near_null_directions += 1;
        model.gamma_m3_per_bar[i] = 0.0;
        for (std::size_t j = 0; j < src.injector_count; ++j)
          model.connectivity(static_cast<long>(i), static_cast<long>(j)) = 0.0;
        continue;
      }
      model.gamma_m3_per_bar[i] = 1.0 / u;
      for (std::size_t j = 0; j < src.injector_count; ++j)
        model.connectivity(static_cast<long>(i), static_cast<long>(j)) =
            x(1 + static_cast<long>(j)) / u;
    } else {
      model.gamma_m3_per_bar[i] = x(0);
      for (std::size_t j = 0; j < src.injector_count; ++j)
        model.connectivity(static_cast<long>(i), static_cast<long>(j)) =
            x(fo + static_cast<long>(j));
    }
  }
  model.project_constraints(opt.strict_allocation && !reciprocal);
  if (reciprocal) {
    // reciprocal variables cannot express the cross-producer coupling as a
    // linear constraint; enforce it by projection and refit u with f fixed
    bool touched = false;
    for (long jcol = 0; jcol < model.connectivity.cols(); ++jcol) {
      const double col = model.connectivity.col(jcol).sum();
      if (col > 1.0) {
        model.connectivity.col(jcol) /= col;
        touched = true;
      }
    }
    if (touched) {
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const ProducerSystem sys = build_pressure_rows(blocks[i], src, taus[i]);
        Eigen::VectorXd fixed_dir(sys.a.cols());
        fixed_dir(0) = 1.0;
        for (std::size_t j = 0; j < src.injector_count; ++j)
          fixed_dir(1 + static_cast<long>(j)) =
              model.connectivity(static_cast<long>(i), static_cast<long>(j));
        const Eigen::VectorXd col = sys.a * fixed_dir;
        const double denom = col.squaredNorm();
        const double u = denom > 0.0 ? std::max(0.0, col.dot(sys.b) / denom) : 0.0;
        model.gamma_m3_per_bar[i] = u > 0.0 ? 1.0 / u : 0.0;
      }
    }
    model.project_constraints(false);
  }

  // final metrics and residuals on the fitted quantity
  double ss_res = 0.0;
  double ss_tot = 0.0;
  std::size_t n_rows_total = 0;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const ProducerSystem sys = build_system(blocks[i], taus[i]);
    Eigen::VectorXd x = solutions[i];
    const Eigen::VectorXd res = sys.a * x - sys.b;
    std::vector<double> rv(res.data(), res.data() + res.size());
    report.residuals[blocks[i].name] = rv;
    report.per_well_objective[blocks[i].name] = res.squaredNorm();
    ss_res += res.squaredNorm();
    const double mean = sys.b.mean();
    ss_tot += (sys.b.array() - mean).square().sum();
    n_rows_total += static_cast<std::size_t>(res.size());
  }
  report.final_rmsd = n_rows_total ? std::sqrt(ss_res / static_cast<double>(n_rows_total)) : 0.0;
  if (ss_tot > 0.0) report.final_r2 = 1.0 - ss_res / ss_tot;
  if (report.objective_trace.empty() || ss_res < report.objective_trace.back())
    report.objective_trace.push_back(ss_res);
  report.status = FitReport::Status::converged;

  model.validate(opt.strict_allocation && !reciprocal);
  return {std::move(model), report};
}

}  // namespace wellflow
