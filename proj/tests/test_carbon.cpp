#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace carbonsim;
using namespace carbonsim::testing;

TEST(OperationalTest, Examples) {
  EXPECT_EQ(operational_carbon(3.6e6, 262), 262.0);
  EXPECT_EQ(operational_carbon(0, 31), 0.0);
  EXPECT_NEAR(operational_carbon(231, 31), 1.9892e-3, 1e-7);
  EXPECT_THROW(operational_carbon(-1, 31), ValidationError);
  EXPECT_THROW(operational_carbon(1, 0), ValidationError);
}

TEST(EmbodiedTest, Rates) {
  EXPECT_NEAR(embodied_rate(t4_spec()), 6.5277e-5, 1e-9);
  EXPECT_NEAR(embodied_rate(rtx_spec()), 1.6858e-4, 1e-8);
  auto g = t4_spec();
  const double r = embodied_rate(g);
  g.lifetime *= 2;
  EXPECT_DOUBLE_EQ(embodied_rate(g), r / 2);
}

TEST(EmbodiedTest, Amortized) {
  EXPECT_EQ(amortized_embodied(t4_spec(), 157'788'000.0), 10300.0);
  EXPECT_EQ(amortized_embodied(rtx_spec(), lifetime_seconds(rtx_spec())), 26600.0);
  EXPECT_NEAR(amortized_embodied(t4_spec(), 5), 3.264e-4, 1e-7);
  EXPECT_EQ(amortized_embodied(t4_spec(), 0), 0.0);
  GpuSpec none = t4_spec();
  none.embodied_carbon.reset();
  EXPECT_THROW(amortized_embodied(none, 1), ValidationError);
}

TEST(TotalCarbonTest, Composition) {
  const auto c = total_carbon(231, 7.6, t4_spec(), 31);
  EXPECT_NEAR(c.operational, 1.9892e-3, 1e-7);
  EXPECT_NEAR(c.embodied, 4.9611e-4, 1e-8);
  EXPECT_NEAR(c.total, 2.4853e-3, 1e-7);
  EXPECT_EQ(c.total, c.operational + c.embodied);
  const auto zero = total_carbon(0, 0, t4_spec(), 31);
  EXPECT_EQ(zero.total, 0.0);
  const auto twice = total_carbon(231, 7.6, t4_spec(), 62);
  EXPECT_DOUBLE_EQ(twice.operational, 2 * c.operational);
  EXPECT_EQ(twice.embodied, c.embodied);
}

TEST(EmbodiedFractionTest, CrossRegion) {
  const double p_t4 = power_for_embodied_fraction(0.197, t4_spec(), 31);
  EXPECT_NEAR(p_t4, 30.9, 0.1);
  EXPECT_NEAR(embodied_fraction(p_t4, t4_spec(), 262), 0.028, 0.0015);
  EXPECT_NEAR(embodied_fraction(p_t4, t4_spec(), 647), 0.012, 0.0015);
  const double p_rtx = power_for_embodied_fraction(0.307, rtx_spec(), 31);
  EXPECT_NEAR(p_rtx, 44.2, 0.1);
  EXPECT_NEAR(embodied_fraction(p_rtx, rtx_spec(), 262), 0.050, 0.0015);
  EXPECT_NEAR(embodied_fraction(p_rtx, rtx_spec(), 647), 0.021, 0.0015);
}

TEST(EmbodiedFractionTest, InversionProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> frac(0.001, 0.999), ci(1, 1000);
  for (int i = 0; i < 1000; ++i) {
    const double f = frac(rng), c = ci(rng);
    const double p = power_for_embodied_fraction(f, rtx_spec(), c);
    EXPECT_NEAR(embodied_fraction(p, rtx_spec(), c), f, 1e-12);
  }
}

TEST(ActTest, CalibrationRoundTrip) {
  const auto params = calibrate_act({{rtx_spec(), 26600}, {t4_spec(), 10300}}, kDefaultCarbonPerMemory);
  EXPECT_NEAR(estimate_embodied_act(rtx_spec(), params), 26600, 26600 * 1e-12);
  EXPECT_NEAR(estimate_embodied_act(t4_spec(), params), 10300, 10300 * 1e-12);
  const auto reparsed = parse_act_params(to_json(params).dump());
  EXPECT_EQ(reparsed.carbon_per_area, params.carbon_per_area);
}

TEST(ActTest, BundledParamsWithinFivePercent) {
  const auto params = load_act_params(data_path("act_params.json"));
  EXPECT_NEAR(estimate_embodied_act(rtx_spec(), params), 26600, 26600 * 0.05);
  EXPECT_NEAR(estimate_embodied_act(t4_spec(), params), 10300, 10300 * 0.05);
}

TEST(ActTest, SingleTargetExactAndZeroSpec) {
  const auto params = calibrate_act({{t4_spec(), 10300}}, 100);
  EXPECT_NEAR(estimate_embodied_act(t4_spec(), params), 10300, 1e-9);
  GpuSpec zero = t4_spec();
  zero.chip_area = 0;
  zero.memory_capacity = 0;
  EXPECT_EQ(estimate_embodied_act(zero, params), 0.0);
  EXPECT_THROW(estimate_embodied_act(rtx_spec(), params), UnknownIdError);  // 5 nm not calibrated
}

TEST(ActTest, InfeasibleMemoryCoefficient) {
  EXPECT_THROW(calibrate_act({{t4_spec(), 10300}}, 10300.0 / 16 + 1), CalibrationError);
}

TEST(CiSeriesTest, StepFunction) {
  const RegionCI r{"X", 150, {{0, 100}, {3600, 200}}};
  EXPECT_EQ(ci_at(r, 1800), 100);
  EXPECT_EQ(ci_at(r, 3600), 200);
  EXPECT_EQ(ci_at(r, -10), 100);
  EXPECT_EQ(ci_at(r, 1e9), 200);
  EXPECT_EQ(ci_at(region("QC"), 12345), 31);
}

TEST(CiSeriesTest, TimestampParsing) {
  EXPECT_EQ(parse_timestamp("0"), 0);
  EXPECT_EQ(parse_timestamp("1685577600"), 1685577600);
  EXPECT_EQ(parse_timestamp("2023-06-01T00:00:00Z"), 1685577600);
  EXPECT_EQ(parse_timestamp("2023-06-01T02:00:00+02:00"), 1685577600);
  EXPECT_EQ(parse_timestamp("1970-01-01"), 0);
  EXPECT_THROW(parse_timestamp("2023-13-01"), ParseError);
  EXPECT_THROW(parse_timestamp("yesterday"), ParseError);
}

TEST(CiSeriesTest, CsvAndValidation) {
  const auto s = parse_ci_series_csv("timestamp,ci_g_per_kwh\n0,100\n3600,200\n");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].ci, 200);
  EXPECT_THROW(validate(RegionCI{"X", 10, {{0, 1}, {0, 2}}}), ValidationError);
  EXPECT_THROW(validate(RegionCI{"X", 10, {{0, -1}}}), ValidationError);
}

TEST(RegionRegistryTest, BundledRegistry) {
  const auto reg = load_region_registry(data_path("regions.json"));
  EXPECT_EQ(reg.at("qc").avg_ci, 31);
  EXPECT_EQ(reg.at("CISO").avg_ci, 262);
  EXPECT_EQ(reg.at("pace").avg_ci, 647);
  EXPECT_EQ(reg.at("ciso-day").series.size(), 24u);
  try {
    reg.at("MARS");
    FAIL();
  } catch (const UnknownIdError& e) {
    EXPECT_NE(std::string(e.what()).find("MARS"), std::string::npos);
  }
}
