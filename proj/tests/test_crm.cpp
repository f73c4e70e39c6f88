#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wellflow/crm.hpp"

using namespace wellflow;

namespace {

CrmModel simple_model() {
  CrmModel m;
  m.producers = {"P1"};
  m.injectors = {"I1"};
  m.tau_days = {20.0};
  m.gamma_m3_per_bar = {50.0};
  m.connectivity = Eigen::MatrixXd::Constant(1, 1, 0.6);
  return m;
}

PressureSeries constant_bhp(double p, double span, double dt) {
  std::vector<PressureSeries::Sample> s;
  for (double t = 0.0; t <= span + 1e-9; t += dt) s.push_back({t, p, 1.0});
  return PressureSeries(std::move(s));
}

}  // namespace

TEST_CASE("rate decay under constant bottomhole pressure") {
  CrmModel m = simple_model();
  m.connectivity.setZero();
  std::map<std::string, RateHistory> inj{{"I1", RateHistory()}};
  std::map<std::string, PressureSeries> bhp{{"P1", constant_bhp(150.0, 20.0, 1.0)}};
  const auto out =
      crm_simulate_rates(m, inj, bhp, {{"P1", 100.0}}, std::vector<double>{5.0, 10.0, 20.0});
  CHECK(out.at("P1").value_at(10.0) == doctest::Approx(100.0 * std::exp(-0.5)).epsilon(1e-12));
  CHECK(out.at("P1").value_at(20.0) == doctest::Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("steady states of the rate equation") {
  CrmModel m = simple_model();
  std::map<std::string, RateHistory> inj{{"I1", RateHistory({{0.0, -200.0}})}};
  std::map<std::string, PressureSeries> bhp{{"P1", constant_bhp(150.0, 2000.0, 50.0)}};
  auto out = crm_simulate_rates(m, inj, bhp, {{"P1", 0.0}}, std::vector<double>{2000.0});
  CHECK(out.at("P1").value_at(2000.0) == doctest::Approx(120.0).epsilon(1e-9));

  // declining BHP with gamma = 50 and dp/dt = -0.1 sustains 5 m3/d
  std::vector<PressureSeries::Sample> ramp;
  for (double t = 0.0; t <= 3000.0; t += 50.0) ramp.push_back({t, 200.0 - 0.1 * t, 1.0});
  std::map<std::string, PressureSeries> bhp2{{"P1", PressureSeries(std::move(ramp))}};
  std::map<std::string, RateHistory> no_inj{{"I1", RateHistory()}};
  out = crm_simulate_rates(m, no_inj, bhp2, {{"P1", 0.0}}, std::vector<double>{3000.0});
  CHECK(out.at("P1").value_at(3000.0) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("tau zero collapses to the algebraic balance") {
  CrmModel m = simple_model();
  m.tau_days = {0.0};
  std::map<std::string, RateHistory> inj{{"I1", RateHistory({{0.0, -200.0}})}};
  std::map<std::string, PressureSeries> bhp{{"P1", constant_bhp(150.0, 10.0, 1.0)}};
  const auto out = crm_simulate_rates(m, inj, bhp, {{"P1", 0.0}}, std::vector<double>{1.0, 5.0});
  CHECK(out.at("P1").value_at(5.0) == doctest::Approx(120.0).epsilon(1e-12));
}

TEST_CASE("exponential stepping matches adaptive ODE integration") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uq(50.0, 250.0);
  std::uniform_real_distribution<double> up(140.0, 180.0);

  CrmModel m = simple_model();
  std::vector<RateHistory::Step> inj_steps;
  for (int k = 0; k < 12; ++k) inj_steps.push_back({k * 5.0, -uq(rng)});
  std::map<std::string, RateHistory> inj{{"I1", RateHistory(inj_steps)}};
  std::vector<PressureSeries::Sample> bhp_samples;
  for (double t = 0.0; t <= 60.0; t += 2.5) bhp_samples.push_back({t, up(rng), 1.0});
  const PressureSeries bhp(bhp_samples);
  std::map<std::string, PressureSeries> bhp_map{{"P1", bhp}};

  std::vector<double> times;
  for (double t = 5.0; t <= 60.0; t += 5.0) times.push_back(t);
  const auto stepped = crm_simulate_rates(m, inj, bhp_map, {{"P1", 80.0}}, times);

  // reference: adaptive RK45 on dq/dt = (f q_inj - gamma dp/dt - q) / tau,
  // integrated piecewise between forcing breakpoints
  auto dpdt = [&](double t) {
    const double h = 1e-6;
    return (bhp.interpolate(t + h) - bhp.interpolate(std::max(0.0, t - h))) /
           (t < h ? h : 2.0 * h);
  };
  auto rhs = [&](double t, double q) {
    const double support = 0.6 * -inj.at("I1").value_at(t);
    return (support - 50.0 * dpdt(t) - q) / 20.0;
  };
  double q = 80.0;
  double t_prev = 0.0;
  for (double t : times) {
    // integrate across forcing breakpoints to keep the RHS smooth per leg
    std::vector<double> legs;
    for (const auto& s : inj_steps)
      if (s.t > t_prev && s.t < t) legs.push_back(s.t);
    for (double b = std::ceil(t_prev / 2.5) * 2.5; b < t; b += 2.5)
      if (b > t_prev) legs.push_back(b);
    legs.push_back(t);
    std::sort(legs.begin(), legs.end());
    for (double leg : legs) {
      q = oracles::rk45_integrate(rhs, q, t_prev, leg, 1e-12);
      t_prev = leg;
    }
    CHECK(stepped.at("P1").value_at(t) == doctest::Approx(q).epsilon(1e-8));
  }
}

TEST_CASE("pressure form hand values") {
  CrmModel m;
  m.producers = {"P1"};
  m.injectors = {"I1"};
  m.tau_days = {5.0};
  m.gamma_m3_per_bar = {25.0};
  m.connectivity = Eigen::MatrixXd::Constant(1, 1, 0.5);

  std::map<std::string, RateHistory> prod{{"P1", RateHistory({{0.0, 100.0}})}};
  std::map<std::string, RateHistory> no_inj;
  std::map<std::string, double> p0{{"P1", 200.0}};
  auto out = crm_simulate_pressure(m, prod, no_inj, p0, {10.0});
  CHECK(out.at("P1").samples()[0].p == doctest::Approx(140.0).epsilon(1e-13));

  std::map<std::string, RateHistory> inj{{"I1", RateHistory({{0.0, -100.0}})}};
  out = crm_simulate_pressure(m, prod, inj, p0, {10.0});
  CHECK(out.at("P1").samples()[0].p == doctest::Approx(160.0).epsilon(1e-13));

  // no production or injection: flat at p(0)
  std::map<std::string, RateHistory> none{{"P1", RateHistory()}};
  out = crm_simulate_pressure(m, none, no_inj, p0, {1.0, 100.0});
  for (const auto& s : out.at("P1").samples()) CHECK(s.p == 200.0);
}

TEST_CASE("pressure form agrees with the rearranged cumulative balance") {
  // Q_up(t) = sum f Q_down + gamma (p0 - p) - tau q  rearranged for p
  CrmModel m = simple_model();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uq(20.0, 120.0);
  std::vector<RateHistory::Step> ps, is;
  for (int k = 0; k < 10; ++k) {
    ps.push_back({k * 7.0, uq(rng)});
    is.push_back({k * 9.0, -uq(rng)});
  }
  std::map<std::string, RateHistory> prod{{"P1", RateHistory(ps)}};
  std::map<std::string, RateHistory> inj{{"I1", RateHistory(is)}};
  std::map<std::string, double> p0{{"P1", 210.0}};
  std::vector<double> times;
  for (double t = 1.5; t < 70.0; t += 4.1) times.push_back(t);
  const auto out = crm_simulate_pressure(m, prod, inj, p0, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double t = times[i];
    const double icrm_p =
        210.0 - (prod.at("P1").cumulative(t) + 20.0 * prod.at("P1").value_before(t) -
                 0.6 * -inj.at("I1").cumulative(t)) /
                    50.0;
    const double rel = std::abs(out.at("P1").samples()[i].p - icrm_p) /
                       std::max(1.0, std::abs(icrm_p));
    CHECK(rel < 1e-10);
  }
}

TEST_CASE("formation pressure reconstruction") {
  CrmModel m = simple_model();
  m.tau_days = {10.0};
  m.gamma_m3_per_bar = {50.0};  // J = 5
  PressureSeries bhp({{1.0, 140.0, 1.0}, {2.0, 140.0, 1.0}});
  const auto pr = formation_pressure(m, bhp, RateHistory({{0.0, 100.0}}), "P1");
  CHECK(pr.samples()[0].p == doctest::Approx(160.0));
  const auto doubled = formation_pressure(m, bhp, RateHistory({{0.0, 200.0}}), "P1");
  CHECK(doubled.samples()[0].p == doctest::Approx(180.0));
  const auto shut = formation_pressure(m, bhp, RateHistory(), "P1");
  CHECK(shut.samples()[0].p == doctest::Approx(140.0));

  CrmModel bad = simple_model();
  bad.gamma_m3_per_bar = {0.0};
  CHECK_THROWS_AS(formation_pressure(bad, bhp, RateHistory(), "P1"), std::invalid_argument);
}

TEST_CASE("model constraint validation and projection") {
  CrmModel m = simple_model();
  m.connectivity(0, 0) = 1.2;
  CHECK_THROWS_AS(m.validate(false), std::invalid_argument);
  m.project_constraints(false);
  CHECK(m.connectivity(0, 0) == doctest::Approx(1.0));
  m.validate(false);

  CrmModel two = simple_model();
  two.producers = {"P1", "P2"};
  two.tau_days = {5.0, 6.0};
  two.gamma_m3_per_bar = {20.0, 30.0};
  two.connectivity = Eigen::MatrixXd::Constant(2, 1, 0.7);  // column sum 1.4
  CHECK_THROWS_AS(two.validate(false), std::invalid_argument);
  two.project_constraints(false);
  two.validate(false);
  CHECK(two.connectivity.col(0).sum() == doctest::Approx(1.0));
}
