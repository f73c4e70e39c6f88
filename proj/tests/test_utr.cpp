#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wellflow/utr.hpp"

using namespace wellflow;

TEST_CASE("exponential integral matches the quadrature oracle") {
  CHECK(exponential_integral_e1(1.0) == doctest::Approx(0.2193839343955203).epsilon(1e-12));
  for (double x : {0.01, 0.1, 0.5, 0.999, 1.0, 1.001, 2.0, 5.0, 10.0, 30.0}) {
    const double ref = oracles::e1_quadrature(x);
    CHECK(exponential_integral_e1(x) == doctest::Approx(ref).epsilon(1e-11));
  }
  CHECK_THROWS_AS(exponential_integral_e1(0.0), std::domain_error);
  CHECK_THROWS_AS(exponential_integral_e1(-1.0), std::domain_error);
}

TEST_CASE("utr causality and the constant-derivative closed form") {
  // jump 0.2 plus constant derivative 0.04/day
  const Utr u(0.2, {{1.0, std::log(0.04)}});
  CHECK(u.value(-1.0) == 0.0);
  CHECK(u.value(0.0) == 0.0);
  CHECK(u.value(10.0) == doctest::Approx(0.6).epsilon(1e-14));
  // below-first-node extrapolation is a linear ramp
  CHECK(u.smooth(0.5) == doctest::Approx(0.04 * 0.5).epsilon(1e-14));
}

TEST_CASE("segment integrals agree with quadrature on a curved response") {
  // log-linearly rising then falling derivative
  const Utr u(0.05, {{0.1, std::log(0.02)}, {1.0, std::log(0.08)}, {10.0, std::log(0.01)}});
  for (double t : {0.05, 0.3, 1.0, 2.5, 9.0, 40.0}) {
    const double ref = oracles::integrate([&](double s) { return u.derivative(std::max(s, 1e-9)); },
                                          0.0, t, 1e-13);
    CHECK(u.smooth(t) == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("utr evaluation is monotone non-decreasing") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uz(-8.0, -1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Utr::Node> nodes;
    double t = 0.01;
    const int n = 2 + static_cast<int>(rng() % 6);
    for (int i = 0; i < n; ++i) {
      nodes.push_back({t, uz(rng)});
      t *= 2.0 + static_cast<double>(rng() % 3);
    }
    const Utr u(0.1 * uz(rng) + 1.0, nodes);
    double prev = 0.0;
    for (double q = 0.005; q < 500.0; q *= 1.7) {
      const double v = u.value(q);
      CHECK(v >= prev);
      prev = v;
    }
  }
}

TEST_CASE("crm-form responses") {
  const Utr dtr = crm_utr(5.0, 25.0, 0.0, UtrPairKind::self);
  CHECK(dtr.jump() == doctest::Approx(0.2));
  for (double t : {0.5, 1.0, 7.0, 365.0})
    CHECK(dtr.value(t) == doctest::Approx(0.2 + 0.04 * t).epsilon(1e-15));

  CHECK(crm_utr(5.0, 25.0, 0.7, UtrPairKind::from_producer).is_zero());

  const Utr ctr = crm_utr(0.0, 25.0, 0.5, UtrPairKind::from_injector);
  CHECK(ctr.jump() == 0.0);
  CHECK(ctr.value(10.0) == doctest::Approx(0.2).epsilon(1e-15));  // 0.02 * t

  CHECK(crm_utr(0.0, 25.0, 0.0, UtrPairKind::from_injector).is_zero());
  CHECK_THROWS_AS(crm_utr(5.0, 0.0, 0.0, UtrPairKind::self), std::invalid_argument);
  CHECK_THROWS_AS(crm_utr(0.0, 25.0, 1.5, UtrPairKind::from_injector), std::invalid_argument);
}

TEST_CASE("utr invariants are enforced") {
  CHECK_THROWS_AS(Utr(-0.1, {}), std::invalid_argument);
  CHECK_THROWS_AS(Utr(0.0, {{1.0, 0.0}, {1.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(Utr(0.0, {{0.0, 0.0}}), std::invalid_argument);
}

TEST_CASE("smooth gradient matches central differences") {
  const std::vector<Utr::Node> base = {
      {0.1, -3.0}, {1.0, -2.5}, {5.0, -3.5}, {30.0, -4.0}, {200.0, -4.2}};
  for (double t : {0.05, 0.4, 3.0, 17.0, 150.0, 900.0}) {
    std::vector<double> grad(base.size(), 0.0);
    Utr(0.0, base).add_smooth_gradient(t, grad);
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double h = 1e-6;
      auto perturbed = base;
      perturbed[i].z += h;
      const double up = Utr(0.0, perturbed).smooth(t);
      perturbed[i].z -= 2.0 * h;
      const double dn = Utr(0.0, perturbed).smooth(t);
      const double fd = (up - dn) / (2.0 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("analytic infinite-acting response") {
  ReservoirParams rp;
  rp.transmissibility = 5.0;   // m3/day/bar
  rp.storativity = 5e-4;       // m3/bar/m2
  rp.well_radius_m = 0.1;
  rp.skin = 2.0;

  LogGridSpec grid;
  grid.t_min_days = 1e-4;
  grid.t_max_days = 1000.0;
  grid.nodes_per_decade = 10;

  const Utr self = analytic_utr(rp, rp.well_radius_m, grid);
  CHECK(self.jump() == doctest::Approx(2.0 / (2.0 * M_PI * 5.0)));

  // within the node range the response tracks E1/(4 pi T) closely
  for (double t : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    const double u_arg = rp.well_radius_m * rp.well_radius_m * rp.storativity /
                         (4.0 * rp.transmissibility * t);
    const double ref = exponential_integral_e1(u_arg) / (4.0 * M_PI * rp.transmissibility);
    CHECK(self.smooth(t) == doctest::Approx(ref).epsilon(2e-3));
  }

  // a distant observer sees almost nothing at fixed time
  const Utr far = analytic_utr(rp, 50000.0, grid);
  CHECK(far.value(1.0) < 1e-12);
  CHECK(far.jump() == 0.0);  // skin only on the self response
}

TEST_CASE("tank boundary reaches the capacitance slope exactly") {
  ReservoirParams rp;
  rp.transmissibility = 5.0;
  rp.storativity = 5e-4;
  rp.well_radius_m = 0.1;
  rp.tank = TankBoundary{1e-4, 2.5e5};  // c_t V_phi = 25 m3/bar

  const Utr self = analytic_utr(rp, rp.well_radius_m);
  const double slope = 1.0 / (rp.tank->total_compressibility_per_bar * rp.tank->pore_volume_m3);
  const double t_switch = self.nodes().back().t;
  for (double t = 10.0 * t_switch; t < 1e6; t *= 7.0) {
    const double measured = (self.smooth(t * 1.01) - self.smooth(t)) / (0.01 * t);
    CHECK(measured == doctest::Approx(slope).epsilon(1e-9));
  }
  // late-time slope equals the crm-form slope 1/gamma with gamma = c_t V_phi
  const Utr crm_form = crm_utr(0.0, 25.0, 0.0, UtrPairKind::self);
  CHECK(self.derivative(20.0 * t_switch) ==
        doctest::Approx(crm_form.derivative(20.0 * t_switch)).epsilon(1e-12));
}

TEST_CASE("utr matrix activity mask") {
  UtrMatrix mat(2);
  CHECK_FALSE(mat.active(0, 1));
  CHECK(mat.at(0, 1).is_zero());
  mat.set(0, 1, crm_utr(0.0, 10.0, 0.3, UtrPairKind::from_injector));
  CHECK(mat.active(0, 1));
  mat.deactivate(0, 1);
  CHECK(mat.at(0, 1).is_zero());
  CHECK_THROWS_AS(mat.at(2, 0), std::out_of_range);
}
