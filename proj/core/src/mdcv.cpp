#include "wellflow/mdcv.hpp"

#include <algorithm>
#include <cmath>
#include <chrono>
#include <random>

namespace wellflow {

std::string to_string(FitReport::Status s) {
  switch (s) {
    case FitReport::Status::converged: return "converged";
    case FitReport::Status::budget_exhausted: return "budget_exhausted";
    case FitReport::Status::ill_posed: return "ill_posed";
    case FitReport::Status::no_variation: return "no_variation";
  }
  return "?";
}

namespace {

// bounds applied to every parameter class; z is clamped only to keep exp()
// inside double range
constexpr double kZFloor = -60.0;
constexpr double kZCeil = 50.0;

// drawdown of one pair; constant-slope responses take the O(1) cumulative
// form, which is the same algebra the CRM pressure equation uses
double pair_drawdown(const Utr& utr, const RateHistory& rates, double t) {
  if (utr.is_zero() || t <= 0.0) return 0.0;
  if (utr.is_linear()) {
    const double slope = utr.nodes().empty() ? 0.0 : std::exp(utr.nodes().front().z);
    return utr.jump() * rates.value_before(t) + slope * rates.cumulative(t);
  }
  return superpose_drawdown(utr, rates, t);
}

struct PairInfo {
  int observer = -1;
  int source = -1;
  bool diagonal = false;
  int jump_param = -1;
  int z_param = -1;  // first of the node-grid z parameters
};

struct RateData {
  std::vector<double> t;  // recorded step starts
  std::vector<double> q;  // recorded step values
};

}  // namespace

struct MdcvProblem::Impl {
  Scenario data;
  MdcvOptions opt;
  int n_wells = 0;
  std::vector<std::string> wells;
  std::vector<int> observers;  // well indices with pressure samples
  std::vector<int> sources;    // well indices with nonzero rates
  std::vector<PairInfo> pairs;
  std::vector<double> node_t;
  std::vector<double> node_log_t;

  std::vector<int> p0_param;                         // per well, -1 = fixed
  std::vector<double> p0_fixed;                      // value when fixed
  std::vector<std::pair<double, double>> p0_bounds;  // per well, when free

  bool fit_corr = false;
  std::vector<int> corr_param;  // per well, -1 = none
  std::vector<RateData> rate_data;

  int n_params = 0;
  int n_pressure_rows = 0;
  int n_rate_rows = 0;
  int n_curv_rows = 0;
  int n_cum_rows = 0;

  bool is_source(int w) const {
    return std::find(sources.begin(), sources.end(), w) != sources.end();
  }

  DeconvolutionModel decode(const Eigen::VectorXd& x) const;
  void assemble(const Eigen::VectorXd& x, Eigen::VectorXd* r, Eigen::MatrixXd* jac) const;
  Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

MdcvProblem::MdcvProblem(const Scenario& training, const MdcvOptions& opt)
    : impl_(std::make_unique<Impl>()) {
  training.validate();
  Impl& im = *impl_;
  im.data = training;
  im.opt = opt;
  im.wells = training.well_names();
  im.n_wells = static_cast<int>(im.wells.size());
  im.fit_corr = opt.fit_rate_corrections;

  for (int w = 0; w < im.n_wells; ++w) {
    const std::string& name = im.wells[static_cast<std::size_t>(w)];
    auto pit = training.pressures.find(name);
    if (pit != training.pressures.end() && !pit->second.empty()) im.observers.push_back(w);
    const RateHistory& rh = training.rates.at(name);
    if (!rh.empty() && rh.max_abs() > 0.0) im.sources.push_back(w);
  }
  if (im.observers.empty())
    throw std::invalid_argument("deconvolution requires at least one well with pressure data");

  // node grid: smallest pressure sample spacing up to the history span
  double t_lo = 0.0;
  double t_hi = 0.0;
  if (opt.node_time_range) {
    t_lo = opt.node_time_range->first;
    t_hi = opt.node_time_range->second;
  } else {
    double min_dt = std::numeric_limits<double>::infinity();
    for (int w : im.observers) {
      const auto& samples = im.data.pressures.at(im.wells[static_cast<std::size_t>(w)]).samples();
      for (std::size_t i = 1; i < samples.size(); ++i)
        min_dt = std::min(min_dt, samples[i].t - samples[i - 1].t);
    }
    if (!std::isfinite(min_dt)) min_dt = 1.0;
    t_lo = std::max(min_dt, 1e-4);
    t_hi = std::max(im.data.span(), t_lo * 10.0);
  }
  LogGridSpec grid;
  grid.t_min_days = t_lo;
  grid.t_max_days = t_hi;
  grid.nodes_per_decade = opt.nodes_per_decade;
  im.node_t = grid.times();
  im.node_log_t.resize(im.node_t.size());
  for (std::size_t i = 0; i < im.node_t.size(); ++i) im.node_log_t[i] = std::log(im.node_t[i]);

  // parameter layout: p0 first, then per-pair (jump, z nodes), then corrections
  int next = 0;
  im.p0_param.assign(static_cast<std::size_t>(im.n_wells), -1);
  im.p0_fixed.assign(static_cast<std::size_t>(im.n_wells), 0.0);
  im.p0_bounds.assign(static_cast<std::size_t>(im.n_wells), {0.0, 0.0});
  for (int w = 0; w < im.n_wells; ++w) {
    const std::string& name = im.wells[static_cast<std::size_t>(w)];
    auto it = training.p0_bar.find(name);
    if (it != training.p0_bar.end()) {
      im.p0_fixed[static_cast<std::size_t>(w)] = it->second;
      continue;
    }
    const bool observed = std::find(im.observers.begin(), im.observers.end(), w) !=
                          im.observers.end();
    if (!observed) continue;  // p0 of an unobserved well never enters the fit
    im.p0_param[static_cast<std::size_t>(w)] = next++;
    const auto& samples = training.pressures.at(name).samples();
    double pmin = samples.front().p;
    double pmax = pmin;
    for (const auto& s : samples) {
      pmin = std::min(pmin, s.p);
      pmax = std::max(pmax, s.p);
    }
    const double span = std::max(pmax - pmin, 1.0);
    im.p0_bounds[static_cast<std::size_t>(w)] =
        opt.p0_bounds ? *opt.p0_bounds : std::make_pair(pmin, pmin + 2.0 * span);
  }

  auto add_pair = [&](int obs, int src) {
    PairInfo p;
    p.observer = obs;
    p.source = src;
    p.diagonal = obs == src;
    if (p.diagonal) p.jump_param = next++;
    p.z_param = next;
    next += static_cast<int>(im.node_t.size());
    im.pairs.push_back(p);
  };
  if (opt.active_pairs) {
    for (const auto& [obs_name, src_name] : *opt.active_pairs) {
      const int obs = training.index_of(obs_name);
      const int src = training.index_of(src_name);
      if (obs < 0 || src < 0)
        throw std::invalid_argument("active pair references an unknown well");
      if (std::find(im.observers.begin(), im.observers.end(), obs) == im.observers.end())
        throw std::invalid_argument("active pair observer '" + obs_name + "' has no pressure data");
      if (!im.is_source(src))
        throw std::invalid_argument("active pair source '" + src_name + "' has no rate variation");
      add_pair(obs, src);
    }
  } else {
    for (int obs : im.observers)
      for (int src : im.sources) add_pair(obs, src);
  }

  im.corr_param.assign(static_cast<std::size_t>(im.n_wells), -1);
  im.rate_data.resize(static_cast<std::size_t>(im.n_wells));
  for (int w : im.sources) {
    const RateHistory& rh = training.rates.at(im.wells[static_cast<std::size_t>(w)]);
    RateData rd;
    for (const auto& s : rh.steps()) {
      rd.t.push_back(s.t);
      rd.q.push_back(s.q);
    }
    im.rate_data[static_cast<std::size_t>(w)] = std::move(rd);
    if (im.fit_corr) {
      im.corr_param[static_cast<std::size_t>(w)] = next;
      next += static_cast<int>(rh.size());
    }
  }
  im.n_params = next;

  for (int w : im.observers)
    im.n_pressure_rows +=
        static_cast<int>(training.pressures.at(im.wells[static_cast<std::size_t>(w)]).size());
  if (im.fit_corr)
    for (int w : im.sources)
      im.n_rate_rows += static_cast<int>(im.rate_data[static_cast<std::size_t>(w)].t.size());
  if (opt.lambda_curvature > 0.0 && im.node_t.size() >= 3)
    im.n_curv_rows = static_cast<int>(im.pairs.size() * (im.node_t.size() - 2));
  if (opt.lambda_cumulative > 0.0 && training.cumulative_reference)
    im.n_cum_rows = static_cast<int>(training.cumulative_reference->t_days.size());
}

MdcvProblem::~MdcvProblem() = default;
MdcvProblem::MdcvProblem(MdcvProblem&&) noexcept = default;

int MdcvProblem::parameter_count() const { return impl_->n_params; }
const std::vector<double>& MdcvProblem::node_times() const { return impl_->node_t; }

DeconvolutionModel MdcvProblem::Impl::decode(const Eigen::VectorXd& x) const {
  DeconvolutionModel model;
  model.wells = wells;
  model.p0_bar.resize(static_cast<std::size_t>(n_wells));
  for (int w = 0; w < n_wells; ++w) {
    const int p = p0_param[static_cast<std::size_t>(w)];
    model.p0_bar[static_cast<std::size_t>(w)] = p >= 0 ? x(p) : p0_fixed[static_cast<std::size_t>(w)];
  }
  model.utrs = UtrMatrix(n_wells);
  const std::size_t nn = node_t.size();
  std::vector<Utr::Node> nodes(nn);
  for (const PairInfo& pr : pairs) {
    for (std::size_t i = 0; i < nn; ++i) nodes[i] = {node_t[i], x(pr.z_param + static_cast<int>(i))};
    const double jump = pr.diagonal ? std::max(0.0, x(pr.jump_param)) : 0.0;
    model.utrs.set(pr.observer, pr.source, Utr(jump, nodes));
  }
  if (fit_corr) {
    model.correction_band = opt.correction_band;
    for (int w : sources) {
      const int c0 = corr_param[static_cast<std::size_t>(w)];
      if (c0 < 0) continue;
      const std::size_t k = rate_data[static_cast<std::size_t>(w)].t.size();
      std::vector<double> factors(k);
      for (std::size_t i = 0; i < k; ++i) factors[i] = x(c0 + static_cast<int>(i));
      model.rate_corrections[wells[static_cast<std::size_t>(w)]] = std::move(factors);
    }
  }
  return model;
}

DeconvolutionModel MdcvProblem::decode(const Eigen::VectorXd& x) const { return impl_->decode(x); }

Eigen::VectorXd MdcvProblem::encode(const DeconvolutionModel& model) const {
  const Impl& im = *impl_;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(im.n_params);
  for (int w = 0; w < im.n_wells; ++w) {
    const int p = im.p0_param[static_cast<std::size_t>(w)];
    if (p >= 0) {
      const int mw = model.index_of(im.wells[static_cast<std::size_t>(w)]);
      if (mw < 0) throw std::invalid_argument("model lacks well '" + im.wells[static_cast<std::size_t>(w)] + "'");
      x(p) = model.p0_bar[static_cast<std::size_t>(mw)];
    }
  }
  const std::size_t nn = im.node_t.size();
  for (const PairInfo& pr : im.pairs) {
    const int mo = model.index_of(im.wells[static_cast<std::size_t>(pr.observer)]);
    const int ms = model.index_of(im.wells[static_cast<std::size_t>(pr.source)]);
    if (mo < 0 || ms < 0) throw std::invalid_argument("model wells do not cover the problem pairs");
    const Utr* utr = model.utrs.active(mo, ms) ? &model.utrs.at(mo, ms) : nullptr;
    if (pr.diagonal) x(pr.jump_param) = utr ? utr->jump() : 0.0;
    double fill = kZFloor;
    if (utr && utr->nodes().size() == 1) fill = utr->nodes().front().z;
    if (utr && utr->nodes().size() > 1) {
      if (utr->nodes().size() != nn)
        throw std::invalid_argument("model UTR node grid does not match the problem grid");
      for (std::size_t i = 0; i < nn; ++i) {
        if (std::abs(utr->nodes()[i].t - im.node_t[i]) > 1e-9 * im.node_t[i])
          throw std::invalid_argument("model UTR node times do not match the problem grid");
        x(pr.z_param + static_cast<int>(i)) = utr->nodes()[i].z;
      }
      continue;
    }
    for (std::size_t i = 0; i < nn; ++i) x(pr.z_param + static_cast<int>(i)) = fill;
  }
  if (im.fit_corr) {
    for (int w : im.sources) {
      const int c0 = im.corr_param[static_cast<std::size_t>(w)];
      const std::size_t k = im.rate_data[static_cast<std::size_t>(w)].t.size();
      auto it = model.rate_corrections.find(im.wells[static_cast<std::size_t>(w)]);
      for (std::size_t i = 0; i < k; ++i) {
        const double c = (it != model.rate_corrections.end() && i < it->second.size())
                             ? it->second[i]
                             : 1.0;
        x(c0 + static_cast<int>(i)) = c;
      }
    }
  }
  return x;
}

Eigen::VectorXd MdcvProblem::Impl::clamp(const Eigen::VectorXd& x) const {
  Eigen::VectorXd out = x;
  for (int w = 0; w < n_wells; ++w) {
    const int p = p0_param[static_cast<std::size_t>(w)];
    if (p >= 0)
      out(p) = std::clamp(out(p), p0_bounds[static_cast<std::size_t>(w)].first,
                          p0_bounds[static_cast<std::size_t>(w)].second);
  }
  for (const PairInfo& pr : pairs) {
    if (pr.diagonal) out(pr.jump_param) = std::max(0.0, out(pr.jump_param));
    for (std::size_t i = 0; i < node_t.size(); ++i) {
      double& z = out(pr.z_param + static_cast<int>(i));
      z = std::clamp(z, kZFloor, kZCeil);
    }
  }
  if (fit_corr) {
    for (int w : sources) {
      const int c0 = corr_param[static_cast<std::size_t>(w)];
      for (std::size_t i = 0; i < rate_data[static_cast<std::size_t>(w)].t.size(); ++i) {
        double& c = out(c0 + static_cast<int>(i));
        c = std::clamp(c, opt.correction_band.first, opt.correction_band.second);
      }
    }
  }
  return out;
}

void MdcvProblem::Impl::assemble(const Eigen::VectorXd& x, Eigen::VectorXd* r,
                                 Eigen::MatrixXd* jac) const {
  const DeconvolutionModel model = decode(x);
  const int n_rows = n_pressure_rows + n_rate_rows + n_curv_rows + n_cum_rows;
  r->resize(n_rows);
  if (jac) {
    jac->resize(n_rows, n_params);
    jac->setZero();
  }

  std::vector<RateHistory> corrected(static_cast<std::size_t>(n_wells));
  for (int w : sources) {
    const std::string& name = wells[static_cast<std::size_t>(w)];
    corrected[static_cast<std::size_t>(w)] = model.corrected_rates(name, data.rates.at(name));
  }

  int row = 0;
  std::vector<double> zbuf(node_t.size());
  for (int obs : observers) {
    const std::string& obs_name = wells[static_cast<std::size_t>(obs)];
    const auto& samples = data.pressures.at(obs_name).samples();
    // pairs feeding this observer
    std::vector<const PairInfo*> obs_pairs;
    for (const PairInfo& pr : pairs)
      if (pr.observer == obs) obs_pairs.push_back(&pr);

    for (const auto& sample : samples) {
      const double w_eff = sample.w * opt.pressure_weight;
      const double sw = std::sqrt(w_eff);
      double p_model = model.p0_bar[static_cast<std::size_t>(obs)];
      for (const PairInfo* pr : obs_pairs) {
        const Utr& utr = model.utrs.at(pr->observer, pr->source);
        const RateHistory& rh = corrected[static_cast<std::size_t>(pr->source)];
        p_model -= pair_drawdown(utr, rh, sample.t);

        if (jac) {
          // jump: -q_corrected(t-)
          if (pr->diagonal) (*jac)(row, pr->jump_param) = -sw * rh.value_before(sample.t);
          // z nodes: -sum_k dq_k d smooth(t - t_k)/dz
          std::fill(zbuf.begin(), zbuf.end(), 0.0);
          const auto& steps = rh.steps();
          double prev_q = 0.0;
          for (const auto& step : steps) {
            if (step.t >= sample.t) break;
            const double dq = step.q - prev_q;
            prev_q = step.q;
            if (dq != 0.0) utr.add_smooth_gradient(sample.t - step.t, zbuf, -sw * dq);
          }
          for (std::size_t i = 0; i < zbuf.size(); ++i)
            (*jac)(row, pr->z_param + static_cast<int>(i)) = zbuf[i];
          // corrections: -q~_k [V(t - t_k) - V(t - t_{k+1})]
          const int c0 = corr_param[static_cast<std::size_t>(pr->source)];
          if (c0 >= 0) {
            const RateData& rd = rate_data[static_cast<std::size_t>(pr->source)];
            for (std::size_t k = 0; k < rd.t.size(); ++k) {
              if (rd.t[k] >= sample.t) break;
              const double upper = utr.value(sample.t - rd.t[k]);
              const double lower =
                  (k + 1 < rd.t.size() && rd.t[k + 1] < sample.t)
                      ? utr.value(sample.t - rd.t[k + 1])
                      : 0.0;
              (*jac)(row, c0 + static_cast<int>(k)) -= sw * rd.q[k] * (upper - lower);
            }
          }
        }
      }
      if (jac) {
        const int p = p0_param[static_cast<std::size_t>(obs)];
        if (p >= 0) (*jac)(row, p) = sw;
      }
      (*r)(row) = sw * (p_model - sample.p);
      ++row;
    }
  }

  if (fit_corr) {
    const double sw = std::sqrt(opt.rate_weight);
    for (int w : sources) {
      const RateData& rd = rate_data[static_cast<std::size_t>(w)];
      const int c0 = corr_param[static_cast<std::size_t>(w)];
      for (std::size_t k = 0; k < rd.t.size(); ++k) {
        const double c = x(c0 + static_cast<int>(k));
        (*r)(row) = sw * (c - 1.0) * rd.q[k];
        if (jac) (*jac)(row, c0 + static_cast<int>(k)) = sw * rd.q[k];
        ++row;
      }
    }
  }

  if (n_curv_rows > 0) {
    const double sl = std::sqrt(opt.lambda_curvature);
    for (const PairInfo& pr : pairs) {
      for (std::size_t i = 1; i + 1 < node_t.size(); ++i) {
        const int zi = pr.z_param + static_cast<int>(i);
        (*r)(row) = sl * (x(zi + 1) - 2.0 * x(zi) + x(zi - 1));
        if (jac) {
          (*jac)(row, zi + 1) = sl;
          (*jac)(row, zi) = -2.0 * sl;
          (*jac)(row, zi - 1) = sl;
        }
        ++row;
      }
    }
  }

  if (n_cum_rows > 0) {
    const double sl = std::sqrt(opt.lambda_cumulative);
    const auto& ref = *data.cumulative_reference;
    for (std::size_t j = 0; j < ref.t_days.size(); ++j) {
      double total = 0.0;
      for (const Well& wl : data.wells) {
        if (wl.role != WellRole::producer) continue;
        const int w = data.index_of(wl.name);
        if (!is_source(w)) continue;
        total += corrected[static_cast<std::size_t>(w)].cumulative(ref.t_days[j]);
        if (jac) {
          const int c0 = corr_param[static_cast<std::size_t>(w)];
          if (c0 >= 0) {
            const RateData& rd = rate_data[static_cast<std::size_t>(w)];
            for (std::size_t k = 0; k < rd.t.size(); ++k) {
              const double t_next = k + 1 < rd.t.size() ? rd.t[k + 1] : ref.t_days[j];
              const double overlap = std::min(t_next, ref.t_days[j]) - rd.t[k];
              if (overlap > 0.0)
                (*jac)(row, c0 + static_cast<int>(k)) += sl * rd.q[k] * overlap;
            }
          }
        }
      }
      (*r)(row) = sl * (total - ref.cumulative_m3[j]);
      ++row;
    }
  }
}

Eigen::VectorXd MdcvProblem::residuals(const Eigen::VectorXd& x) const {
  Eigen::VectorXd r;
  impl_->assemble(x, &r, nullptr);
  return r;
}

void MdcvProblem::residuals_and_jacobian(const Eigen::VectorXd& x, Eigen::VectorXd* r,
                                         Eigen::MatrixXd* jac) const {
  impl_->assemble(x, r, jac);
}

double MdcvProblem::objective(const Eigen::VectorXd& x) const {
  return residuals(x).squaredNorm();
}

// --------------------------------------------------------------------------
// Standalone objective on an arbitrary model (node grids may differ from any
// fit problem's): the same four terms, computed directly.
// --------------------------------------------------------------------------
double objective_value(const DeconvolutionModel& model, const Scenario& data,
                       const MdcvOptions& opt) {
  model.validate();
  double total = 0.0;

  std::map<std::string, RateHistory> corrected;
  for (const auto& [name, rh] : data.rates) {
    if (model.index_of(name) < 0)
      throw std::invalid_argument("scenario well '" + name + "' missing from model");
    corrected[name] = model.corrected_rates(name, rh);
  }

  for (const auto& [obs_name, series] : data.pressures) {
    if (series.empty()) continue;
    const int obs = model.index_of(obs_name);
    for (const auto& sample : series.samples()) {
      double p_model = model.p0_bar[static_cast<std::size_t>(obs)];
      for (const auto& [src_name, rh] : corrected) {
        const int src = model.index_of(src_name);
        if (!model.utrs.active(obs, src)) continue;
        p_model -= pair_drawdown(model.utrs.at(obs, src), rh, sample.t);
      }
      const double res = p_model - sample.p;
      total += sample.w * opt.pressure_weight * res * res;
    }
  }

  for (const auto& [name, factors] : model.rate_corrections) {
    const auto& steps = data.rates.at(name).steps();
    for (std::size_t k = 0; k < std::min(factors.size(), steps.size()); ++k) {
      const double dq = (factors[k] - 1.0) * steps[k].q;
      total += opt.rate_weight * dq * dq;
    }
  }

  if (opt.lambda_curvature > 0.0) {
    for (int obs = 0; obs < model.utrs.size(); ++obs) {
      for (int src = 0; src < model.utrs.size(); ++src) {
        if (!model.utrs.active(obs, src)) continue;
        const auto& nodes = model.utrs.at(obs, src).nodes();
        for (std::size_t i = 1; i + 1 < nodes.size(); ++i) {
          const double d2 = nodes[i + 1].z - 2.0 * nodes[i].z + nodes[i - 1].z;
          total += opt.lambda_curvature * d2 * d2;
        }
      }
    }
  }

  if (opt.lambda_cumulative > 0.0 && data.cumulative_reference) {
    const auto& ref = *data.cumulative_reference;
    for (std::size_t j = 0; j < ref.t_days.size(); ++j) {
      double group = 0.0;
      for (const std::string& prod : data.producers()) group += corrected.at(prod).cumulative(ref.t_days[j]);
      const double res = group - ref.cumulative_m3[j];
      total += opt.lambda_cumulative * res * res;
    }
  }
  return total;
}

// --------------------------------------------------------------------------
// deconvolve: DE over coarse parameters, then damped Gauss-Newton
// --------------------------------------------------------------------------
namespace {

struct DeGene {
  enum class Kind { p0, jump, zbar };
  Kind kind;
  int well = -1;        // p0
  std::size_t pair = 0; // jump / zbar
  double lo = 0.0;
  double hi = 1.0;
};

}  // namespace

std::pair<std::optional<DeconvolutionModel>, FitReport> deconvolve(const Scenario& training,
                                                                   const MdcvOptions& opt) {
  const auto t_start = std::chrono::steady_clock::now();
  FitReport report;

  if (opt.de_generations < 0 || opt.gn_max_iterations < 0 ||
      (opt.de_generations == 0 && opt.gn_max_iterations == 0))
    throw std::invalid_argument("optimizer budget is zero");
  if (opt.de_generations > 0 && opt.de_population < 4)
    throw std::invalid_argument("differential evolution needs a population of at least 4");

  {
    QcOptions qc_opt;
    qc_opt.variation_threshold = opt.variation_threshold;
    const QcReport qc = qc_report(training, qc_opt);
    if (qc.verdict == QcReport::Verdict::fail && !opt.force) {
      report.status = FitReport::Status::no_variation;
      return {std::nullopt, report};
    }
  }

  MdcvProblem problem(training, opt);
  MdcvProblem::Impl& im = *problem.impl_;

  // ---- global stage: p0, diagonal jumps and one mean slope level per pair
  std::vector<DeGene> genes;
  for (int w = 0; w < im.n_wells; ++w) {
    if (im.p0_param[static_cast<std::size_t>(w)] >= 0)
      genes.push_back({DeGene::Kind::p0, w, 0, im.p0_bounds[static_cast<std::size_t>(w)].first,
                       im.p0_bounds[static_cast<std::size_t>(w)].second});
  }
  for (std::size_t pi = 0; pi < im.pairs.size(); ++pi) {
    const PairInfo& pr = im.pairs[pi];
    const auto& samples =
        training.pressures.at(im.wells[static_cast<std::size_t>(pr.observer)]).samples();
    double pmin = samples.front().p;
    double pmax = pmin;
    for (const auto& s : samples) {
      pmin = std::min(pmin, s.p);
      pmax = std::max(pmax, s.p);
    }
    const double pspan = std::max(pmax - pmin, 1.0);
    const double qmax = training.rates.at(im.wells[static_cast<std::size_t>(pr.source)]).max_abs();
    const double span_t = std::max(training.span(), 1.0);
    if (pr.diagonal)
      genes.push_back({DeGene::Kind::jump, -1, pi, 0.0, 3.0 * pspan / qmax});
    const double slope_char = pspan / (qmax * span_t);
    genes.push_back(
        {DeGene::Kind::zbar, -1, pi, std::log(slope_char) - 9.0, std::log(slope_char) + 6.0});
  }

  auto expand_genome = [&](const Eigen::VectorXd& g) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(im.n_params);
    if (im.fit_corr) {
      for (int w : im.sources) {
        const int c0 = im.corr_param[static_cast<std::size_t>(w)];
        for (std::size_t k = 0; k < im.rate_data[static_cast<std::size_t>(w)].t.size(); ++k)
          x(c0 + static_cast<int>(k)) = 1.0;
      }
    }
    for (std::size_t gi = 0; gi < genes.size(); ++gi) {
      const DeGene& gene = genes[gi];
      switch (gene.kind) {
        case DeGene::Kind::p0:
          x(im.p0_param[static_cast<std::size_t>(gene.well)]) = g(static_cast<int>(gi));
          break;
        case DeGene::Kind::jump:
          x(im.pairs[gene.pair].jump_param) = g(static_cast<int>(gi));
          break;
        case DeGene::Kind::zbar: {
          const int z0 = im.pairs[gene.pair].z_param;
          for (std::size_t i = 0; i < im.node_t.size(); ++i)
            x(z0 + static_cast<int>(i)) = g(static_cast<int>(gi));
          break;
        }
      }
    }
    return x;
  };

  // single-node decode keeps the DE objective O(1) per sample; the algebra
  // matches the full grid with all z equal
  auto de_objective = [&](const Eigen::VectorXd& g) {
    DeconvolutionModel model;
    model.wells = im.wells;
    model.p0_bar.resize(static_cast<std::size_t>(im.n_wells));
    for (int w = 0; w < im.n_wells; ++w)
      model.p0_bar[static_cast<std::size_t>(w)] = im.p0_fixed[static_cast<std::size_t>(w)];
    model.utrs = UtrMatrix(im.n_wells);
    for (std::size_t gi = 0; gi < genes.size(); ++gi) {
      const DeGene& gene = genes[gi];
      if (gene.kind == DeGene::Kind::p0)
        model.p0_bar[static_cast<std::size_t>(gene.well)] = g(static_cast<int>(gi));
    }
    std::vector<double> jumps(im.pairs.size(), 0.0);
    std::vector<double> zbars(im.pairs.size(), kZFloor);
    for (std::size_t gi = 0; gi < genes.size(); ++gi) {
      const DeGene& gene = genes[gi];
      if (gene.kind == DeGene::Kind::jump) jumps[gene.pair] = g(static_cast<int>(gi));
      if (gene.kind == DeGene::Kind::zbar) zbars[gene.pair] = g(static_cast<int>(gi));
    }
    for (std::size_t pi = 0; pi < im.pairs.size(); ++pi) {
      const PairInfo& pr = im.pairs[pi];
      model.utrs.set(pr.observer, pr.source, Utr(pr.diagonal ? jumps[pi] : 0.0,
                                                 {{1.0, zbars[pi]}}));
    }
    report.de_evaluations += 1;
    return objective_value(model, training, opt);
  };

  std::mt19937_64 rng(opt.seed);
  const int dim = static_cast<int>(genes.size());
  Eigen::VectorXd best_genome(dim);
  double best_de = std::numeric_limits<double>::infinity();

  if (opt.de_generations > 0 && dim > 0) {
    const int np = opt.de_population;
    std::vector<Eigen::VectorXd> pop(static_cast<std::size_t>(np), Eigen::VectorXd(dim));
    std::vector<double> cost(static_cast<std::size_t>(np));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int i = 0; i < np; ++i) {
      for (int d = 0; d < dim; ++d) {
        const DeGene& gene = genes[static_cast<std::size_t>(d)];
        pop[static_cast<std::size_t>(i)](d) = gene.lo + (gene.hi - gene.lo) * uni(rng);
      }
      cost[static_cast<std::size_t>(i)] = de_objective(pop[static_cast<std::size_t>(i)]);
      if (cost[static_cast<std::size_t>(i)] < best_de) {
        best_de = cost[static_cast<std::size_t>(i)];
        best_genome = pop[static_cast<std::size_t>(i)];
      }
    }
    report.objective_trace.push_back(best_de);

    std::uniform_int_distribution<int> pick(0, np - 1);
    std::uniform_int_distribution<int> pickdim(0, dim - 1);
    for (int gen = 0; gen < opt.de_generations; ++gen) {
      for (int i = 0; i < np; ++i) {
        int r1 = pick(rng), r2 = pick(rng), r3 = pick(rng);
        while (r1 == i) r1 = pick(rng);
        while (r2 == i || r2 == r1) r2 = pick(rng);
        while (r3 == i || r3 == r1 || r3 == r2) r3 = pick(rng);
        const int jrand = pickdim(rng);
        Eigen::VectorXd trial = pop[static_cast<std::size_t>(i)];
        for (int d = 0; d < dim; ++d) {
          if (d == jrand || uni(rng) < opt.de_crossover) {
            const DeGene& gene = genes[static_cast<std::size_t>(d)];
            double v = pop[static_cast<std::size_t>(r1)](d) +
                       opt.de_weight * (pop[static_cast<std::size_t>(r2)](d) -
                                        pop[static_cast<std::size_t>(r3)](d));
            trial(d) = std::clamp(v, gene.lo, gene.hi);
          }
        }
        const double c = de_objective(trial);
        if (c <= cost[static_cast<std::size_t>(i)]) {
          pop[static_cast<std::size_t>(i)] = trial;
          cost[static_cast<std::size_t>(i)] = c;
          if (c < best_de) {
            best_de = c;
            best_genome = trial;
          }
        }
      }
      if (best_de < report.objective_trace.back()) report.objective_trace.push_back(best_de);
    }
  } else {
    for (int d = 0; d < dim; ++d)
      best_genome(d) = 0.5 * (genes[static_cast<std::size_t>(d)].lo +
                              genes[static_cast<std::size_t>(d)].hi);
  }

  // ---- local stage: Levenberg-damped Gauss-Newton over the full layout
  Eigen::VectorXd x = im.clamp(expand_genome(best_genome));
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  problem.residuals_and_jacobian(x, &r, &jac);
  double obj = r.squaredNorm();
  if (report.objective_trace.empty() || obj < report.objective_trace.back())
    report.objective_trace.push_back(obj);

  double mu = 1e-3;
  bool hit_tol = false;
  int iters = 0;
  while (iters < opt.gn_max_iterations) {
    Eigen::MatrixXd normal = jac.transpose() * jac;
    Eigen::VectorXd g = jac.transpose() * r;
    Eigen::VectorXd diag = normal.diagonal();
    const double diag_floor = 1e-12 * std::max(1.0, diag.maxCoeff());
    for (int d = 0; d < diag.size(); ++d) diag(d) = std::max(diag(d), diag_floor);

    bool accepted = false;
    for (int attempt = 0; attempt < 10; ++attempt) {
      Eigen::MatrixXd damped = normal;
      damped.diagonal() += mu * diag;
      Eigen::LLT<Eigen::MatrixXd> llt(damped);
      if (llt.info() != Eigen::Success) {
        mu *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = llt.solve(-g);
      const Eigen::VectorXd cand = im.clamp(x + step);
      const double cand_obj = problem.objective(cand);
      ++iters;
      if (cand_obj < obj && cand_obj <= report.objective_trace.back()) {
        const double drop = obj - cand_obj;
        x = cand;
        obj = cand_obj;
        report.objective_trace.push_back(obj);
        problem.residuals_and_jacobian(x, &r, &jac);
        mu = std::max(mu * 0.3, 1e-12);
        accepted = true;
        if (drop <= opt.stop_rel_tol * std::max(obj, 1e-30)) hit_tol = true;
        break;
      }
      mu *= 10.0;
      if (iters >= opt.gn_max_iterations) break;
    }
    if (!accepted) {
      hit_tol = true;  // damping exhausted: no descent direction remains
      break;
    }
    if (hit_tol) break;
  }
  report.gn_iterations = iters;
  report.status = hit_tol ? FitReport::Status::converged : FitReport::Status::budget_exhausted;

  // curvature diagnostics: near-zero directions of the normal matrix
  {
    Eigen::MatrixXd normal = jac.transpose() * jac;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(normal);
    const double lmax = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
    for (int i = 0; i < eig.eigenvalues().size(); ++i)
      if (eig.eigenvalues()(i) < 1e-10 * lmax) ++report.near_null_directions;
  }

  DeconvolutionModel model = im.decode(x);

  // unweighted pressure residuals and pooled metrics
  double ss_res = 0.0;
  double ss_tot = 0.0;
  std::size_t n_pts = 0;
  for (int obs : im.observers) {
    const std::string& name = im.wells[static_cast<std::size_t>(obs)];
    const auto& series = training.pressures.at(name);
    const std::vector<double> p_model =
        simulate_pressure_well(model, training.rates, name, series.times());
    const std::vector<double> p_obs = series.values();
    double mean = 0.0;
    for (double v : p_obs) mean += v;
    mean /= static_cast<double>(p_obs.size());
    std::vector<double> res(p_obs.size());
    double wsse = 0.0;
    for (std::size_t i = 0; i < p_obs.size(); ++i) {
      res[i] = p_model[i] - p_obs[i];
      ss_res += res[i] * res[i];
      ss_tot += (p_obs[i] - mean) * (p_obs[i] - mean);
      wsse += series.samples()[i].w * opt.pressure_weight * res[i] * res[i];
    }
    n_pts += p_obs.size();
    report.residuals[name] = std::move(res);
    report.per_well_objective[name] = wsse;
  }
  report.final_rmsd = n_pts ? std::sqrt(ss_res / static_cast<double>(n_pts)) : 0.0;
  if (ss_tot > 0.0) report.final_r2 = 1.0 - ss_res / ss_tot;

  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(model), std::move(report)};
}

std::map<std::string, RateHistory> correct_rates(const DeconvolutionModel& model,
                                                 const Scenario& s) {
  std::map<std::string, RateHistory> out;
  for (const auto& [name, rh] : s.rates) out[name] = model.corrected_rates(name, rh);
  return out;
}

std::map<std::string, PressureSeries> predict_pressure(
    const DeconvolutionModel& model, const Scenario& history,
    const std::map<std::string, RateHistory>& future_rates, const std::vector<double>& times) {
  std::map<std::string, RateHistory> merged = correct_rates(model, history);
  for (const auto& [name, future] : future_rates) {
    auto it = merged.find(name);
    if (it == merged.end())
      merged[name] = future;
    else
      it->second = it->second.extended(future);
  }
  DeconvolutionModel plain = model;
  plain.rate_corrections.clear();  // corrections already materialized
  return simulate_pressure(plain, merged, times);
}

std::map<std::string, RateHistory> predict_rates(
    const DeconvolutionModel& model, const Scenario& history,
    const std::map<std::string, PressureSeries>& targets) {
  std::map<std::string, RateHistory> corrected = correct_rates(model, history);
  std::map<std::string, RateHistory> fixed;
  std::map<std::string, RateHistory> past;
  for (const auto& [name, rh] : corrected) {
    if (targets.count(name))
      past[name] = rh;
    else
      fixed[name] = rh;
  }
  DeconvolutionModel plain = model;
  plain.rate_corrections.clear();
  return simulate_rates(plain, targets, fixed, past);
}

}  // namespace wellflow
