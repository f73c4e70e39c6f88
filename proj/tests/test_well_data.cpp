#include <doctest.h>

#include "wellflow/well_data.hpp"

using namespace wellflow;

namespace {

Scenario two_well_scenario() {
  Scenario s;
  s.wells = {{"P1", WellRole::producer}, {"I1", WellRole::injector}};
  s.rates["P1"] = RateHistory({{0.0, 100.0}, {10.0, 150.0}, {20.0, 100.0}});
  s.rates["I1"] = RateHistory({{0.0, -80.0}});
  s.pressures["P1"] = PressureSeries({{1.0, 199.5, 1.0}, {2.0, 199.0, 1.0}, {3.0, 198.5, 1.0}});
  s.pressures["I1"] = PressureSeries();
  return s;
}

}  // namespace

TEST_CASE("rate history step semantics") {
  RateHistory rh({{0.0, 100.0}, {10.0, 150.0}});
  CHECK(rh.value_at(-1.0) == 0.0);
  CHECK(rh.value_at(5.0) == 100.0);
  CHECK(rh.value_at(10.0) == 150.0);   // steps hold on [t_k, t_{k+1})
  CHECK(rh.value_before(10.0) == 100.0);
  CHECK(rh.value_before(10.5) == 150.0);
  CHECK(rh.cumulative(10.0) == doctest::Approx(1000.0));
  CHECK(rh.cumulative(12.0) == doctest::Approx(1000.0 + 2.0 * 150.0));
  const auto dq = rh.increments();
  CHECK(dq[0] == 100.0);
  CHECK(dq[1] == 50.0);
}

TEST_CASE("rate history rejects bad input") {
  CHECK_THROWS_AS(RateHistory({{5.0, 1.0}, {3.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(RateHistory({{3.0, 1.0}, {3.0, 2.0}}), std::invalid_argument);
  CHECK_THROWS_AS(RateHistory({{-1.0, 1.0}}), std::invalid_argument);
}

TEST_CASE("pressure series interpolation and validation") {
  PressureSeries ps({{1.0, 200.0, 1.0}, {3.0, 210.0, 1.0}});
  CHECK(ps.interpolate(2.0) == doctest::Approx(205.0));
  CHECK(ps.interpolate(0.0) == 200.0);
  CHECK(ps.interpolate(9.0) == 210.0);
  CHECK_THROWS_AS(PressureSeries({{1.0, 1.0, -0.5}}), std::invalid_argument);
}

TEST_CASE("split partitions pressures and keeps full rates") {
  Scenario s = two_well_scenario();
  auto [train, validate] = split_dataset(s, SplitSpec::at(2.5));
  CHECK(train.pressures["P1"].size() == 2);
  CHECK(validate.pressures["P1"].size() == 1);
  CHECK(train.rates["P1"].steps().size() == 3);     // rates never truncated
  CHECK(validate.rates["P1"].steps().size() == 3);

  // every sample lands in exactly one partition
  std::size_t total = train.pressures["P1"].size() + validate.pressures["P1"].size();
  CHECK(total == s.pressures["P1"].size());
}

TEST_CASE("split with interval list takes the complement") {
  Scenario s = two_well_scenario();
  auto spec = SplitSpec::intervals({{0.0, 1.5}, {2.5, 3.5}});
  auto [train, validate] = split_dataset(s, spec);
  // samples at 1.0 and 3.0 train; 2.0 validates
  CHECK(train.pressures["P1"].size() == 2);
  REQUIRE(validate.pressures["P1"].size() == 1);
  CHECK(validate.pressures["P1"].samples()[0].t == 2.0);
}

TEST_CASE("split beyond the span is an error") {
  Scenario s = two_well_scenario();
  CHECK_THROWS_AS(split_dataset(s, SplitSpec::at(1000.0)), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(s, SplitSpec::at(0.0)), std::invalid_argument);
}

TEST_CASE("qc flags resolution, sampling and variation") {
  Scenario s = two_well_scenario();
  QcReport r = qc_report(s);
  CHECK(r.wells["P1"].pressure_resolution_ok);  // 0.5 bar increments
  CHECK_FALSE(r.wells["P1"].sampling_rate_ok);  // daily, not hourly
  CHECK(r.wells["P1"].rate_variation_events == 2);
  CHECK_FALSE(r.wells["P1"].no_variation);
  CHECK(r.wells["I1"].no_variation);  // constant injection
  CHECK(r.verdict == QcReport::Verdict::warn);
}

TEST_CASE("constant rates everywhere fail qc") {
  Scenario s = two_well_scenario();
  s.rates["P1"] = RateHistory({{0.0, 100.0}});
  QcReport r = qc_report(s);
  CHECK(r.wells["P1"].no_variation);
  CHECK(r.verdict == QcReport::Verdict::fail);
}

TEST_CASE("qc cumulative deviation against the reference") {
  Scenario s = two_well_scenario();
  // recorded producer cumulative at t=20: 100*10 + 150*10 = 2500
  s.cumulative_reference = Scenario::CumulativeReference{{20.0}, {2500.0 / 1.4}};
  QcReport r = qc_report(s);
  REQUIRE(r.cumulative_deviation.has_value());
  CHECK(*r.cumulative_deviation == doctest::Approx(0.40).epsilon(1e-9));
  CHECK(r.verdict == QcReport::Verdict::warn);
}

TEST_CASE("qc is a pure function") {
  Scenario s = two_well_scenario();
  QcReport a = qc_report(s);
  QcReport b = qc_report(s);
  CHECK(a.verdict == b.verdict);
  CHECK(a.wells.at("P1").rate_variation_events == b.wells.at("P1").rate_variation_events);
  CHECK(a.wells.at("P1").max_relative_amplitude == b.wells.at("P1").max_relative_amplitude);
}

TEST_CASE("scenario validation catches inconsistencies") {
  Scenario s = two_well_scenario();
  s.wells.push_back({"P1", WellRole::producer});
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  Scenario missing = two_well_scenario();
  missing.rates.erase("I1");
  CHECK_THROWS_AS(missing.validate(), std::invalid_argument);
}

TEST_CASE("extended rate histories append in time order") {
  RateHistory past({{0.0, 50.0}, {5.0, 70.0}});
  RateHistory future({{9.0, 20.0}});
  RateHistory merged = past.extended(future);
  CHECK(merged.steps().size() == 3);
  CHECK(merged.value_at(9.5) == 20.0);
  CHECK_THROWS_AS(past.extended(RateHistory({{2.0, 1.0}})), std::invalid_argument);
}
