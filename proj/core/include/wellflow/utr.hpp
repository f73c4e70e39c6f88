#pragma once

// Unit-rate transient responses (UTR): the pressure response p_u(t), in bar
// per (m3/day), of an observation point to a unit step of rate at a source
// well. Diagonal entries of the response matrix are drawdown responses (DTR),
// off-diagonal entries are cross-well interference responses (CTR).
//
// Representation: p_u(t) = jump * theta(t) + integral_0^t exp(z(ln s)) ds
// with z piecewise-linear in log time between nodes (t_i, z_i) and constant
// beyond the end nodes. Each log-linear segment of z makes the derivative a
// power law in t, so the integral has a closed form and evaluation is exact.
// A response with no nodes and zero jump is identically zero.

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wellflow {

/// E1(x) = integral_x^inf exp(-u)/u du for x > 0.
/// Series expansion below the crossover, modified-Lentz continued fraction
/// above it; relative error < 1e-14 across the positive axis.
double exponential_integral_e1(double x);

class Utr {
 public:
  struct Node {
    double t = 1.0;  // days, > 0, strictly increasing
    double z = 0.0;  // ln of dp_u/dt at t
  };

  Utr() = default;  // identically zero response
  Utr(double jump, std::vector<Node> nodes);

  static Utr zero() { return Utr(); }

  double jump() const { return jump_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  bool is_zero() const { return jump_ == 0.0 && nodes_.empty(); }
  /// True when the smooth part grows linearly for all t (at most one node),
  /// i.e. the response has the capacitance-resistance form.
  bool is_linear() const { return nodes_.size() <= 1; }

  /// p_u(t); exactly 0 for t <= 0.
  double value(double t) const;
  /// Smooth part only (value without the Heaviside jump).
  double smooth(double t) const;
  /// dp_u/dt for t > 0, excluding the Dirac contribution of the jump.
  double derivative(double t) const;

  /// Accumulates d smooth(t) / d z_i into grad[i]; grad.size() == nodes().size().
  void add_smooth_gradient(double t, std::span<double> grad, double scale = 1.0) const;

 private:
  double segment_integral(std::size_t seg, double s1, double s2) const;

  double jump_ = 0.0;
  std::vector<Node> nodes_;
  std::vector<double> log_t_;  // ln t_i
  std::vector<double> cum_;    // smooth(t_i)
};

/// Response matrix over a fixed well ordering. Inactive pairs evaluate to the
/// identically-zero response.
class UtrMatrix {
 public:
  UtrMatrix() = default;
  explicit UtrMatrix(int n);

  int size() const { return n_; }
  void set(int observer, int source, Utr u);
  void deactivate(int observer, int source);
  bool active(int observer, int source) const;
  const Utr& at(int observer, int source) const;
  Utr& at_mutable(int observer, int source);

 private:
  int idx(int observer, int source) const;
  int n_ = 0;
  std::vector<Utr> utr_;
  std::vector<char> active_;
};

enum class UtrPairKind { self, from_producer, from_injector };

/// Capacitance-resistance-form responses:
///   self:          (tau/gamma) * theta(t) + t / gamma
///   from producer: identically zero
///   from injector: (f / gamma) * t
/// `fraction` is ignored for the self/from_producer kinds.
Utr crm_utr(double tau_days, double gamma_m3_per_bar, double fraction, UtrPairKind kind);

/// Closed no-flow tank drained by one producer: late-time slope 1/(c_t V_phi).
struct TankBoundary {
  double total_compressibility_per_bar = 0.0;  // c_t
  double pore_volume_m3 = 0.0;                 // V_phi
};

/// Homogeneous-reservoir coefficients for the analytic response family.
struct ReservoirParams {
  double transmissibility = 0.0;  // T = k h / mu, m3/day per bar
  double storativity = 0.0;       // S = phi c_t h, m3/bar per m2
  double well_radius_m = 0.1;
  double skin = 0.0;
  std::optional<TankBoundary> tank;  // nullopt: infinite-acting

  void validate() const;
};

struct LogGridSpec {
  double t_min_days = 1e-3;
  double t_max_days = 3650.0;
  int nodes_per_decade = 8;

  std::vector<double> times() const;
};

/// Line-source (exponential integral) response sampled onto the node grid.
/// The self response (distance == well radius) carries the skin as a jump.
/// With a tank boundary the derivative follows the line source until it
/// decays to the tank slope 1/(c_t V_phi) and is constant after that, so the
/// late-time response grows linearly and matches the CRM form exactly.
Utr analytic_utr(const ReservoirParams& rp, double distance_m, const LogGridSpec& grid = {});

}  // namespace wellflow
