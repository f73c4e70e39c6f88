#include "wellflow/utr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wellflow {

// ---------------------------------------------------------------------------
// Exponential integral
//
//          inf
//           /      -u
//          |      e
// E (x) =  |  du ----- ,  x > 0
//  1       |       u
//         /
//          x
// ---------------------------------------------------------------------------
double exponential_integral_e1(double x) {
  if (!(x > 0.0)) throw std::domain_error("E1 requires x > 0");
  constexpr double euler_gamma = 0.57721566490153286060651209;
  if (x <= 1.0) {
    // E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
    double sum = -euler_gamma - std::log(x);
    double term = 1.0;
    for (int k = 1; k < 64; ++k) {
      term *= -x / k;
      const double add = -term / k;
      sum += add;
      if (std::abs(add) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
  }
  if (x > 700.0) return 0.0;  // below the smallest normal once exp(-x) applies
  // Modified Lentz evaluation of the continued fraction
  // E1(x) = exp(-x) / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
  constexpr double tiny = 1e-300;
  double b = x + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 200; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double del = c * d;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x);
}

namespace {

// (exp(x) - 1) / x, continuous at 0
double phi1(double x) {
  if (std::abs(x) < 1e-12) return 1.0 + 0.5 * x;
  return std::expm1(x) / x;
}

// (exp(x) (x - 1) + 1) / x^2 = int_0^1 u exp(x u) du, continuous at 0
double phi2(double x) {
  if (std::abs(x) < 1e-3)
    return 0.5 + x * (1.0 / 3.0 + x * (0.125 + x * (1.0 / 30.0 + x / 144.0)));
  return (x * std::exp(x) - std::expm1(x)) / (x * x);
}

}  // namespace

Utr::Utr(double jump, std::vector<Node> nodes) : jump_(jump), nodes_(std::move(nodes)) {
  if (!(jump_ >= 0.0) || !std::isfinite(jump_))
    throw std::invalid_argument("UTR jump must be finite and >= 0");
  double prev = 0.0;
  for (const Node& n : nodes_) {
    if (!(n.t > prev)) throw std::invalid_argument("UTR node times must be positive and increasing");
    if (!std::isfinite(n.z)) throw std::invalid_argument("UTR node value must be finite");
    prev = n.t;
  }
  log_t_.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) log_t_[i] = std::log(nodes_[i].t);
  cum_.resize(nodes_.size());
  if (!nodes_.empty()) {
    cum_[0] = std::exp(nodes_[0].z) * nodes_[0].t;  // constant derivative below first node
    for (std::size_t i = 0; i + 1 < nodes_.size(); ++i)
      cum_[i + 1] = cum_[i] + segment_integral(i, nodes_[i].t, nodes_[i + 1].t);
  }
}

// integral of the power-law derivative over [s1, s2] within segment seg
double Utr::segment_integral(std::size_t seg, double s1, double s2) const {
  if (s2 <= s1) return 0.0;
  const double h = log_t_[seg + 1] - log_t_[seg];
  const double b = (nodes_[seg + 1].z - nodes_[seg].z) / h;
  const double d1 = std::exp(nodes_[seg].z + b * (std::log(s1) - log_t_[seg]));
  const double lr = std::log(s2 / s1);
  return d1 * s1 * lr * phi1((b + 1.0) * lr);
}

double Utr::value(double t) const {
  if (t <= 0.0) return 0.0;
  return jump_ + smooth(t);
}

double Utr::smooth(double t) const {
  if (t <= 0.0 || nodes_.empty()) return 0.0;
  if (t <= nodes_.front().t) return std::exp(nodes_.front().z) * t;
  if (t >= nodes_.back().t) return cum_.back() + std::exp(nodes_.back().z) * (t - nodes_.back().t);
  const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t,
                                   [](double v, const Node& n) { return v < n.t; });
  const std::size_t seg = static_cast<std::size_t>(it - nodes_.begin()) - 1;
  return cum_[seg] + segment_integral(seg, nodes_[seg].t, t);
}

double Utr::derivative(double t) const {
  if (t <= 0.0 || nodes_.empty()) return 0.0;
  if (t <= nodes_.front().t) return std::exp(nodes_.front().z);
  if (t >= nodes_.back().t) return std::exp(nodes_.back().z);
  const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t,
                                   [](double v, const Node& n) { return v < n.t; });
  const std::size_t seg = static_cast<std::size_t>(it - nodes_.begin()) - 1;
  const double b = (nodes_[seg + 1].z - nodes_[seg].z) / (log_t_[seg + 1] - log_t_[seg]);
  return std::exp(nodes_[seg].z + b * (std::log(t) - log_t_[seg]));
}

void Utr::add_smooth_gradient(double t, std::span<double> grad, double scale) const {
  if (nodes_.empty() || t <= 0.0) return;
  if (grad.size() != nodes_.size())
    throw std::invalid_argument("gradient span size does not match node count");

  if (t <= nodes_.front().t) {
    grad[0] += scale * std::exp(nodes_.front().z) * t;
    return;
  }
  grad[0] += scale * cum_[0];  // contribution of [0, t_0]

  const std::size_t last = nodes_.size() - 1;
  const double t_end = std::min(t, nodes_.back().t);
  for (std::size_t seg = 0; seg < last; ++seg) {
    if (nodes_[seg].t >= t_end) break;
    const double s2 = std::min(t_end, nodes_[seg + 1].t);
    const double h = log_t_[seg + 1] - log_t_[seg];
    const double b = (nodes_[seg + 1].z - nodes_[seg].z) / h;
    const double whole = segment_integral(seg, nodes_[seg].t, s2);
    // d/dz_{seg+1} = (t_seg e^{z_seg} / h) U^2 phi2((b+1) U), U = ln(s2/t_seg)
    const double big_u = std::log(s2 / nodes_[seg].t);
    const double upper =
        (nodes_[seg].t * std::exp(nodes_[seg].z) / h) * big_u * big_u * phi2((b + 1.0) * big_u);
    grad[seg + 1] += scale * upper;
    grad[seg] += scale * (whole - upper);
  }
  if (t > nodes_.back().t)
    grad[last] += scale * std::exp(nodes_.back().z) * (t - nodes_.back().t);
}

UtrMatrix::UtrMatrix(int n) : n_(n) {
  if (n < 0) throw std::invalid_argument("negative UTR matrix size");
  utr_.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  active_.assign(utr_.size(), 0);
}

int UtrMatrix::idx(int observer, int source) const {
  if (observer < 0 || observer >= n_ || source < 0 || source >= n_)
    throw std::out_of_range("UTR matrix index out of range");
  return observer * n_ + source;
}

void UtrMatrix::set(int observer, int source, Utr u) {
  const int i = idx(observer, source);
  utr_[static_cast<std::size_t>(i)] = std::move(u);
  active_[static_cast<std::size_t>(i)] = 1;
}

void UtrMatrix::deactivate(int observer, int source) {
  const int i = idx(observer, source);
  utr_[static_cast<std::size_t>(i)] = Utr::zero();
  active_[static_cast<std::size_t>(i)] = 0;
}

bool UtrMatrix::active(int observer, int source) const {
  return active_[static_cast<std::size_t>(idx(observer, source))] != 0;
}

const Utr& UtrMatrix::at(int observer, int source) const {
  return utr_[static_cast<std::size_t>(idx(observer, source))];
}

Utr& UtrMatrix::at_mutable(int observer, int source) {
  return utr_[static_cast<std::size_t>(idx(observer, source))];
}

Utr crm_utr(double tau_days, double gamma_m3_per_bar, double fraction, UtrPairKind kind) {
  if (kind == UtrPairKind::from_producer) return Utr::zero();
  if (!(gamma_m3_per_bar > 0.0)) throw std::invalid_argument("crm_utr requires gamma > 0");
  if (kind == UtrPairKind::self) {
    if (tau_days < 0.0) throw std::invalid_argument("crm_utr requires tau >= 0");
    return Utr(tau_days / gamma_m3_per_bar, {{1.0, std::log(1.0 / gamma_m3_per_bar)}});
  }
  if (fraction < 0.0 || fraction > 1.0)
    throw std::invalid_argument("connectivity fraction must lie in [0, 1]");
  if (fraction == 0.0) return Utr::zero();
  return Utr(0.0, {{1.0, std::log(fraction / gamma_m3_per_bar)}});
}

void ReservoirParams::validate() const {
  if (!(transmissibility > 0.0)) throw std::invalid_argument("transmissibility must be > 0");
  if (!(storativity > 0.0)) throw std::invalid_argument("storativity must be > 0");
  if (!(well_radius_m > 0.0)) throw std::invalid_argument("well radius must be > 0");
  if (skin < 0.0) throw std::invalid_argument("negative skin is not representable (jump >= 0)");
  if (tank) {
    if (!(tank->total_compressibility_per_bar > 0.0))
      throw std::invalid_argument("tank compressibility must be > 0");
    if (!(tank->pore_volume_m3 > 0.0)) throw std::invalid_argument("tank volume must be > 0");
  }
}

std::vector<double> LogGridSpec::times() const {
  if (!(t_min_days > 0.0) || !(t_max_days > t_min_days) || nodes_per_decade < 1)
    throw std::invalid_argument("invalid log grid");
  const double lo = std::log10(t_min_days);
  const double hi = std::log10(t_max_days);
  const int count = std::max(2, static_cast<int>(std::ceil((hi - lo) * nodes_per_decade)) + 1);
  std::vector<double> t(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    t[static_cast<std::size_t>(i)] = std::pow(10.0, lo + (hi - lo) * i / (count - 1));
  return t;
}

namespace {

// ln of the line-source derivative: d(t) = exp(-u)/(4 pi T t), u = r^2 S/(4 T t).
double line_source_log_derivative(double t, double r, const ReservoirParams& rp) {
  const double u = r * r * rp.storativity / (4.0 * rp.transmissibility * t);
  return -u - std::log(4.0 * M_PI * rp.transmissibility * t);
}

}  // namespace

Utr analytic_utr(const ReservoirParams& rp, double distance_m, const LogGridSpec& grid) {
  rp.validate();
  if (!(distance_m >= rp.well_radius_m))
    throw std::invalid_argument("distance must be at least the well radius");
  const bool self = distance_m == rp.well_radius_m;
  const double jump = self ? rp.skin / (2.0 * M_PI * rp.transmissibility) : 0.0;

  const std::vector<double> times = grid.times();
  std::vector<Utr::Node> nodes;
  nodes.reserve(times.size() + 1);

  if (!rp.tank) {
    for (double t : times) nodes.push_back({t, line_source_log_derivative(t, distance_m, rp)});
    return Utr(jump, std::move(nodes));
  }

  // Tank boundary: switch to the constant slope where the decaying branch of
  // the line-source derivative reaches it.
  const double slope = 1.0 / (rp.tank->total_compressibility_per_bar * rp.tank->pore_volume_m3);
  const double log_slope = std::log(slope);
  const double t_peak = distance_m * distance_m * rp.storativity / (4.0 * rp.transmissibility);
  double t_switch = t_peak;
  if (line_source_log_derivative(t_peak, distance_m, rp) > log_slope) {
    double lo = std::log(t_peak);
    double hi = std::log(std::max(t_peak, 1.0)) + 60.0;  // derivative ~1/t decays past any slope
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (line_source_log_derivative(std::exp(mid), distance_m, rp) > log_slope)
        lo = mid;
      else
        hi = mid;
    }
    t_switch = std::exp(0.5 * (lo + hi));
  }

  for (double t : times) {
    if (t >= t_switch * (1.0 - 1e-9)) break;
    nodes.push_back({t, line_source_log_derivative(t, distance_m, rp)});
  }
  nodes.push_back({t_switch, log_slope});
  return Utr(jump, std::move(nodes));
}

}  // namespace wellflow
