#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "wellflow/convolution.hpp"

using namespace wellflow;

namespace {

DeconvolutionModel crm_form_model() {
  // one producer with DTR 0.2 theta + 0.04 t, one injector with CTR 0.02 t
  DeconvolutionModel m;
  m.wells = {"P1", "I1"};
  m.p0_bar = {200.0, 0.0};
  m.utrs = UtrMatrix(2);
  m.utrs.set(0, 0, crm_utr(5.0, 25.0, 0.0, UtrPairKind::self));
  m.utrs.set(0, 1, crm_utr(0.0, 25.0, 0.5, UtrPairKind::from_injector));
  return m;
}

DeconvolutionModel curved_model(unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uz(-7.0, -2.5);
  auto random_utr = [&](double jump) {
    std::vector<Utr::Node> nodes;
    double t = 0.02;
    for (int i = 0; i < 7; ++i) {
      nodes.push_back({t, uz(rng)});
      t *= 4.0;
    }
    return Utr(jump, nodes);
  };
  DeconvolutionModel m;
  m.wells = {"A", "B"};
  m.p0_bar = {180.0, 175.0};
  m.utrs = UtrMatrix(2);
  m.utrs.set(0, 0, random_utr(0.05));
  m.utrs.set(0, 1, random_utr(0.0));
  m.utrs.set(1, 0, random_utr(0.0));
  m.utrs.set(1, 1, random_utr(0.08));
  return m;
}

std::map<std::string, RateHistory> random_rates(unsigned seed, const std::vector<std::string>& wells,
                                                int steps, double span) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uq(-120.0, 150.0);
  std::map<std::string, RateHistory> out;
  for (const auto& w : wells) {
    std::vector<RateHistory::Step> sv;
    for (int k = 0; k < steps; ++k) sv.push_back({span * k / steps, uq(rng)});
    out[w] = RateHistory(std::move(sv));
  }
  return out;
}

}  // namespace

TEST_CASE("zero rates give the initial pressure everywhere") {
  const DeconvolutionModel m = crm_form_model();
  std::map<std::string, RateHistory> rates{{"P1", RateHistory()}, {"I1", RateHistory()}};
  const auto p = simulate_pressure_well(m, rates, "P1", std::vector<double>{0.0, 1.0, 100.0});
  for (double v : p) CHECK(v == 200.0);
}

TEST_CASE("single producer and injector hand values") {
  const DeconvolutionModel m = crm_form_model();
  std::map<std::string, RateHistory> rates;
  rates["P1"] = RateHistory({{0.0, 100.0}});
  rates["I1"] = RateHistory();
  auto p = simulate_pressure_well(m, rates, "P1", std::vector<double>{10.0});
  CHECK(p[0] == doctest::Approx(140.0).epsilon(1e-12));  // 200 - 100*0.6

  rates["I1"] = RateHistory({{0.0, -80.0}});
  p = simulate_pressure_well(m, rates, "P1", std::vector<double>{10.0});
  CHECK(p[0] == doctest::Approx(156.0).epsilon(1e-12));  // +80 * 0.2 support
}

TEST_CASE("superposition sum matches dense trapezoid quadrature") {
  const DeconvolutionModel m = curved_model(11);
  const auto rates = random_rates(12, {"A", "B"}, 24, 60.0);
  for (double t : {5.5, 17.0, 33.3, 59.0}) {
    const double direct = simulate_pressure_well(m, rates, "A", std::vector<double>{t})[0];
    double quad = m.p0_bar[0];
    quad -= oracles::convolution_quadrature(m.utrs.at(0, 0), rates.at("A"), t);
    quad -= oracles::convolution_quadrature(m.utrs.at(0, 1), rates.at("B"), t);
    CHECK(direct == doctest::Approx(quad).epsilon(1e-6));
  }
}

TEST_CASE("direct and derivative forms agree to 1e-9 relative") {
  for (unsigned seed : {1u, 2u, 3u}) {
    const DeconvolutionModel m = curved_model(seed);
    const auto rates = random_rates(seed + 100, {"A", "B"}, 48, 365.0);
    std::vector<double> times;
    for (double t = 1.0; t <= 365.0; t += 3.7) times.push_back(t);
    for (const std::string& well : m.wells) {
      const auto direct = simulate_pressure_well(m, rates, well, times, SuperpositionForm::direct);
      const auto deriv =
          simulate_pressure_well(m, rates, well, times, SuperpositionForm::derivative);
      for (std::size_t i = 0; i < times.size(); ++i) {
        const double scale = std::max({std::abs(direct[i]), std::abs(deriv[i]), 1.0});
        CHECK(std::abs(direct[i] - deriv[i]) / scale < 1e-9);
      }
    }
  }
}

TEST_CASE("linearity, superposition and time-shift properties") {
  const DeconvolutionModel m = curved_model(42);
  const auto r1 = random_rates(7, {"A", "B"}, 20, 100.0);
  const auto r2 = random_rates(8, {"A", "B"}, 13, 100.0);
  const std::vector<double> times{3.0, 21.0, 77.0, 99.5};

  const auto base = simulate_pressure_well(m, r1, "A", times);

  SUBCASE("scaling rates scales drawdown") {
    std::map<std::string, RateHistory> scaled;
    for (const auto& [w, rh] : r1) {
      std::vector<double> f(rh.size(), 2.5);
      scaled[w] = rh.scaled(f);
    }
    const auto p = simulate_pressure_well(m, scaled, "A", times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double d1 = m.p0_bar[0] - base[i];
      const double d2 = m.p0_bar[0] - p[i];
      CHECK(d2 == doctest::Approx(2.5 * d1).epsilon(1e-12));
    }
  }

  SUBCASE("drawdowns add over rate histories") {
    // sum the two histories step-by-step on the union grid
    std::map<std::string, RateHistory> sum;
    for (const auto& [w, a] : r1) {
      const RateHistory& b = r2.at(w);
      std::set<double> ts;
      for (auto& s : a.steps()) ts.insert(s.t);
      for (auto& s : b.steps()) ts.insert(s.t);
      std::vector<RateHistory::Step> sv;
      for (double t : ts) sv.push_back({t, a.value_at(t) + b.value_at(t)});
      sum[w] = RateHistory(std::move(sv));
    }
    const auto pa = simulate_pressure_well(m, r1, "A", times);
    const auto pb = simulate_pressure_well(m, r2, "A", times);
    const auto ps = simulate_pressure_well(m, sum, "A", times);
    for (std::size_t i = 0; i < times.size(); ++i) {
      const double expect = m.p0_bar[0] - (m.p0_bar[0] - pa[i]) - (m.p0_bar[0] - pb[i]);
      CHECK(ps[i] == doctest::Approx(expect).epsilon(1e-10));
    }
  }

  SUBCASE("delaying all steps delays the drawdown") {
    const double delay = 11.25;
    std::map<std::string, RateHistory> shifted;
    for (const auto& [w, rh] : r1) {
      std::vector<RateHistory::Step> sv;
      for (const auto& s : rh.steps()) sv.push_back({s.t + delay, s.q});
      shifted[w] = RateHistory(std::move(sv));
    }
    std::vector<double> shifted_times;
    for (double t : times) shifted_times.push_back(t + delay);
    const auto p = simulate_pressure_well(m, shifted, "A", shifted_times);
    for (std::size_t i = 0; i < times.size(); ++i)
      CHECK(m.p0_bar[0] - p[i] == doctest::Approx(m.p0_bar[0] - base[i]).epsilon(1e-12));
  }
}

TEST_CASE("rate corrections enter the forward simulation") {
  DeconvolutionModel m = crm_form_model();
  std::map<std::string, RateHistory> rates;
  rates["P1"] = RateHistory({{0.0, 100.0}});
  rates["I1"] = RateHistory();
  m.rate_corrections["P1"] = {1.2};
  const auto p = simulate_pressure_well(m, rates, "P1", std::vector<double>{10.0});
  CHECK(p[0] == doctest::Approx(200.0 - 120.0 * 0.6).epsilon(1e-12));
  CHECK_THROWS_AS(m.corrected_rates("P1", RateHistory({{0.0, 1.0}, {1.0, 2.0}})),
                  std::invalid_argument);
}

TEST_CASE("pressure control reproduces the hand-solved first step") {
  const DeconvolutionModel m = crm_form_model();
  std::map<std::string, PressureSeries> targets;
  targets["P1"] = PressureSeries({{1.0, 190.0, 1.0}});
  const auto rates = simulate_rates(m, targets);
  REQUIRE(rates.at("P1").size() == 1);
  CHECK(rates.at("P1").steps()[0].q == doctest::Approx(10.0 / 0.24).epsilon(1e-12));
}

TEST_CASE("pressure control round trip recovers the rates") {
  const DeconvolutionModel m = curved_model(21);
  const auto truth = random_rates(31, {"A", "B"}, 30, 90.0);
  std::vector<double> grid;
  for (double t = 3.0; t <= 90.0; t += 3.0) grid.push_back(t);

  const auto pressures = simulate_pressure(m, truth, grid);
  std::map<std::string, PressureSeries> targets{{"A", pressures.at("A")},
                                                {"B", pressures.at("B")}};
  const auto recovered = simulate_rates(m, targets);

  for (const std::string& w : m.wells) {
    const double scale = truth.at(w).max_abs();
    for (double t : grid) {
      CHECK(recovered.at(w).value_at(t) ==
            doctest::Approx(truth.at(w).value_at(t)).epsilon(1e-6).scale(scale));
    }
  }
}

TEST_CASE("singular pressure-control systems are rejected") {
  DeconvolutionModel m;
  m.wells = {"P1"};
  m.p0_bar = {200.0};
  m.utrs = UtrMatrix(1);
  m.utrs.set(0, 0, Utr::zero());  // no jump, no slope
  std::map<std::string, PressureSeries> targets{{"P1", PressureSeries({{1.0, 195.0, 1.0}})}};
  CHECK_THROWS_AS(simulate_rates(m, targets), PressureControlInfeasible);
}

TEST_CASE("query before time zero is rejected") {
  const DeconvolutionModel m = crm_form_model();
  std::map<std::string, RateHistory> rates{{"P1", RateHistory()}, {"I1", RateHistory()}};
  CHECK_THROWS_AS(simulate_pressure_well(m, rates, "P1", std::vector<double>{-1.0}),
                  std::invalid_argument);
}
