#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace carbonsim;
using namespace carbonsim::testing;

TEST(ProfileSetTest, BundledDatasetShape) {
  const auto& set = bundled();
  ASSERT_EQ(set.gpus().size(), 2u);
  EXPECT_NE(set.find_gpu("RTX6000Ada"), nullptr);
  EXPECT_NE(set.find_gpu("t4"), nullptr);
  ASSERT_EQ(set.models().size(), 3u);
  for (const char* m : {"1B", "3B", "7B"}) EXPECT_NE(set.find_model(m), nullptr);
  for (const auto& g : set.gpus()) {
    for (const auto& m : set.models()) {
      for (auto ph : {Phase::kPrefill, Phase::kDecode}) {
        EXPECT_EQ(measured_batches(set, g.id, m.id, ph), (std::vector<int>{1, 4, 8, 16, 32, 64}));
      }
    }
  }
}

TEST(ProfileSetTest, EmptyFileIsParseError) {
  EXPECT_THROW(parse_profile_set(""), ParseError);
  EXPECT_THROW(parse_profile_set("   \n"), ParseError);
}

TEST(ProfileSetTest, InconsistentPowerRejected) {
  PhaseProfile p{"T4", "M", 1, Phase::kDecode, false, 10.0, 5.0, 100.0};
  EXPECT_THROW(validate(p), ValidationError);
  EXPECT_THROW(ProfileSet({t4_spec()}, {ModelConfig{"M", 1, 2}}, {p}), ValidationError);
  p.avg_power = 50.4;  // within 1%
  EXPECT_NO_THROW(validate(p));
}

TEST(ProfileSetTest, StructuralErrors) {
  const ModelConfig m{"M", 1, 2};
  EXPECT_THROW(ProfileSet({t4_spec(), t4_spec()}, {m}, {}), ValidationError);
  EXPECT_THROW(ProfileSet({t4_spec()}, {m}, {point("X", "M", 1, Phase::kDecode, 1, 1)}), ValidationError);
  EXPECT_THROW(ProfileSet({t4_spec()}, {m},
                          {point("T4", "M", 4, Phase::kDecode, 1, 1), point("T4", "M", 1, Phase::kDecode, 1, 1)}),
               ValidationError);
  GpuSpec bad = t4_spec();
  bad.chip_area = 0;
  EXPECT_THROW(validate(bad), ValidationError);
}

TEST(ProfileSetTest, RoundTripIsIdentity) {
  const auto& set = bundled();
  const auto text = serialize(set);
  const auto again = parse_profile_set(text);
  EXPECT_EQ(again, set);
  EXPECT_EQ(serialize(again), text);
}

TEST(LookupTest, ExactMatchReturnsStoredEntry) {
  const auto& set = bundled();
  const auto got = lookup(set, "T4", "1B", 8, Phase::kPrefill);
  const auto series = set.series("T4", "1B", Phase::kPrefill);
  const auto it = std::find_if(series.begin(), series.end(), [](const PhaseProfile& p) { return p.batch_size == 8; });
  ASSERT_NE(it, series.end());
  EXPECT_EQ(got, *it);
}

TEST(LookupTest, OomAndRangeErrors) {
  const auto& set = bundled();
  EXPECT_THROW(lookup(set, "T4", "7B", 64, Phase::kPrefill), OomError);
  EXPECT_THROW(lookup(set, "T4", "7B", 6, Phase::kPrefill), OomError);  // bracket touches an OOM point
  EXPECT_THROW(lookup(set, "RTX6000Ada", "1B", 128, Phase::kDecode), OutOfRangeError);
  EXPECT_THROW(lookup(set, "RTX6000Ada", "1B", 0, Phase::kDecode), OutOfRangeError);
  EXPECT_THROW(lookup(set, "A100", "1B", 1, Phase::kDecode), UnknownIdError);
}

TEST(InterpolateTest, GeometricMidpoint) {
  const auto lo = point("T4", "M", 1, Phase::kDecode, 10, 2);
  const auto hi = point("T4", "M", 4, Phase::kDecode, 40, 2);
  const auto mid = interpolate_batch(lo, hi, 2);
  EXPECT_NEAR(mid.throughput, 20.0, 1e-12);
  EXPECT_NEAR(mid.per_token_energy, 2.0, 1e-12);
  EXPECT_EQ(mid.batch_size, 2);
  EXPECT_NEAR(mid.avg_power, mid.per_token_energy * mid.throughput, 1e-9);
  EXPECT_EQ(lookup(ProfileSet({t4_spec()}, {ModelConfig{"M", 1, 2}}, {lo, hi}), "T4", "M", 1, Phase::kDecode), lo);
}

// Interpolated values stay between the bracketing entries and are monotone in
// batch when the endpoints are.
TEST(InterpolateTest, PropertyBoundedAndMonotone) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.1, 100.0);
  for (int trial = 0; trial < 500; ++trial) {
    const double t0 = u(rng), t1 = u(rng), e0 = u(rng), e1 = u(rng);
    const auto lo = point("T4", "M", 1, Phase::kDecode, t0, e0);
    const auto hi = point("T4", "M", 16, Phase::kDecode, t1, e1);
    double prev = t0;
    for (int b = 2; b < 16; ++b) {
      const auto p = interpolate_batch(lo, hi, b);
      EXPECT_GE(p.throughput, std::min(t0, t1) * (1 - 1e-12));
      EXPECT_LE(p.throughput, std::max(t0, t1) * (1 + 1e-12));
      EXPECT_GE(p.per_token_energy, std::min(e0, e1) * (1 - 1e-12));
      EXPECT_LE(p.per_token_energy, std::max(e0, e1) * (1 + 1e-12));
      if (t1 >= t0) EXPECT_GE(p.throughput, prev * (1 - 1e-12));
      else EXPECT_LE(p.throughput, prev * (1 + 1e-12));
      prev = p.throughput;
    }
  }
}

TEST(MemoryModelTest, WeightsOnly) {
  EXPECT_DOUBLE_EQ(memory_footprint(ModelConfig{"7B", 7, 2}, 0, 0), 14.0);
  EXPECT_DOUBLE_EQ(memory_footprint(ModelConfig{"1B", 1, 2}, 0, 0), 2.0);
}

TEST(MemoryModelTest, SevenBOverT4Capacity) {
  const ModelConfig m{"7B", 7, 2};
  EXPECT_FALSE(exceeds_capacity(t4_spec(), memory_footprint(m, 0, 0)));
  EXPECT_TRUE(exceeds_capacity(t4_spec(), memory_footprint(m, 8, 1024)));
}

TEST(MemoryModelTest, AnalyticFallbackOnlyWhenUnprofiled) {
  // Profiled up to batch 4; the analytic check is not used inside the grid.
  const ProfileSet set({t4_spec()}, {ModelConfig{"7B", 7, 2}},
                       {point("T4", "7B", 1, Phase::kDecode, 10, 2), point("T4", "7B", 4, Phase::kDecode, 30, 1)});
  const AnalyticOomCheck check{4096, kDefaultKvBytesPerTokenPerParam};
  EXPECT_NO_THROW(lookup(set, "T4", "7B", 4, Phase::kDecode, check));
  // Beyond the grid: OOM when the footprint exceeds memory, range error otherwise.
  EXPECT_THROW(lookup(set, "T4", "7B", 64, Phase::kDecode, check), OomError);
  EXPECT_THROW(lookup(set, "T4", "7B", 5, Phase::kDecode, AnalyticOomCheck{1, 1e-12}), OutOfRangeError);
}

TEST(CsvImportTest, AddsAndValidatesRows) {
  const ProfileSet base({t4_spec()}, {ModelConfig{"M", 1, 2}}, {});
  const std::string csv =
      "gpu_id,model_id,batch_size,phase,throughput,per_token_energy,avg_power,oom\n"
      "T4,M,1,decode,20,1.5,30,false\n"
      "T4,M,4,decode,,,,true\n";
  const auto set = import_profiles_csv(base, csv, "mem.csv");
  ASSERT_EQ(set.profiles().size(), 2u);
  EXPECT_TRUE(set.profiles()[1].oom);
  EXPECT_THROW(import_profiles_csv(base, "gpu_id,model_id,batch_size,phase,throughput,per_token_energy,avg_power\n"
                                         "T4,M,1,decode,10,5,100\n",
                                   "bad.csv"),
               ValidationError);
}
