#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace carbonsim;
using namespace carbonsim::testing;

namespace {

BatchDescriptor decode_batch(int b, int tokens = 150) { return {b, 1, tokens, BatchScope::kDecodeOnly}; }

SchedulingPolicy policy(PolicyKind k) {
  SchedulingPolicy p;
  p.kind = k;
  return p;
}

}  // namespace

TEST(BatchCostTest, SingleRequestOracle) {
  const auto set = oracle_set();
  const auto inst = make_instance(0, set, "T4", "M", region("QC"), 1);
  const auto c = estimate_batch_cost(inst, {1, 100, 150, BatchScope::kBoth}, 0, set);
  EXPECT_NEAR(c.latency, 7.6, 1e-12);
  EXPECT_NEAR(c.energy, 231, 1e-9);
  EXPECT_NEAR(c.carbon.operational, 1.9892e-3, 1e-7);
  EXPECT_NEAR(c.carbon.embodied, 4.9611e-4, 1e-8);
}

TEST(BatchCostTest, ZeroTokensRejected) {
  const auto set = oracle_set();
  const auto inst = make_instance(0, set, "T4", "M", region("QC"), 1);
  EXPECT_THROW(estimate_batch_cost(inst, {1, 0, 150, BatchScope::kBoth}, 0, set), ValidationError);
  EXPECT_THROW(estimate_batch_cost(inst, decode_batch(1, 0), 0, set), ValidationError);
}

TEST(BatchCostTest, LinearInCi) {
  const auto& set = bundled();
  const auto qc = estimate_batch_cost(make_instance(0, set, "T4", "1B", region("QC"), 8), decode_batch(4), 0, set);
  const auto pace = estimate_batch_cost(make_instance(0, set, "T4", "1B", region("PACE"), 8), decode_batch(4), 0, set);
  EXPECT_EQ(qc.latency, pace.latency);
  EXPECT_EQ(qc.energy, pace.energy);
  EXPECT_NEAR(pace.carbon.operational / qc.carbon.operational, 647.0 / 31.0, 1e-12);
}

TEST(SchedulerTest, PrefersCleanerRegion) {
  const auto& set = bundled();
  const auto a = make_instance(0, set, "T4", "1B", region("PACE"), 8);
  const auto b = make_instance(1, set, "T4", "1B", region("QC"), 8);
  const std::vector<Candidate> cands{{&a, {}}, {&b, {}}};
  EXPECT_EQ(choose(policy(PolicyKind::kCarbonGreedy), cands, decode_batch(1), 0, set), 1);
}

TEST(SchedulerTest, BatchSizeFlipsGpuChoice) {
  const auto& set = bundled();
  const auto t4 = make_instance(0, set, "T4", "1B", region("QC"), 16);
  const auto rtx = make_instance(1, set, "RTX6000Ada", "1B", region("QC"), 16);
  const std::vector<Candidate> cands{{&t4, {}}, {&rtx, {}}};
  EXPECT_EQ(choose(policy(PolicyKind::kCarbonGreedy), cands, decode_batch(1), 0, set), 0);
  EXPECT_EQ(choose(policy(PolicyKind::kCarbonGreedy), cands, decode_batch(16), 0, set), 1);
  EXPECT_EQ(choose(policy(PolicyKind::kEnergyGreedy), cands, decode_batch(1), 0, set), 0);
  EXPECT_EQ(choose(policy(PolicyKind::kLatencyGreedy), cands, decode_batch(1), 0, set), 1);
}

TEST(SchedulerTest, TiesGoToLowestId) {
  const auto& set = bundled();
  const auto a = make_instance(7, set, "T4", "1B", region("QC"), 8);
  const auto b = make_instance(3, set, "T4", "1B", region("QC"), 8);
  const std::vector<Candidate> cands{{&a, {}}, {&b, {}}};
  for (auto k : {PolicyKind::kCarbonGreedy, PolicyKind::kEnergyGreedy, PolicyKind::kLatencyGreedy}) {
    EXPECT_EQ(choose(policy(k), cands, decode_batch(1), 0, set), 3);
  }
}

TEST(SchedulerTest, RoundRobinCycles) {
  const auto& set = bundled();
  const auto a = make_instance(0, set, "T4", "1B", region("QC"), 8);
  const auto b = make_instance(1, set, "T4", "1B", region("QC"), 8);
  const auto c = make_instance(2, set, "T4", "1B", region("QC"), 8);
  const std::vector<Candidate> cands{{&c, {}}, {&a, {}}, {&b, {}}};
  Scheduler s(policy(PolicyKind::kRoundRobin));
  std::vector<int> picks;
  for (int i = 0; i < 5; ++i) picks.push_back(s.choose(cands, decode_batch(1), 0, set));
  EXPECT_EQ(picks, (std::vector<int>{0, 1, 2, 0, 1}));
}

TEST(SchedulerTest, FixedTarget) {
  const auto& set = bundled();
  const auto a = make_instance(0, set, "T4", "1B", region("QC"), 8);
  const std::vector<Candidate> cands{{&a, {}}};
  SchedulingPolicy p = policy(PolicyKind::kFixed);
  EXPECT_THROW(Scheduler{p}, ValidationError);
  p.target = 0;
  EXPECT_EQ(choose(p, cands, decode_batch(1), 0, set), 0);
  p.target = 4;
  EXPECT_THROW(choose(p, cands, decode_batch(1), 0, set), UnknownIdError);
}

TEST(SchedulerTest, CiThresholdUsesCurrentCi) {
  const auto& set = bundled();
  const RegionCI swing{"SW", 100, {{0, 50}, {3600, 400}}};
  const auto old_gpu = make_instance(0, set, "T4", "1B", swing, 16);
  const auto new_gpu = make_instance(1, set, "RTX6000Ada", "1B", region("QC"), 16);
  const std::vector<Candidate> cands{{&old_gpu, {}}, {&new_gpu, {}}};
  SchedulingPolicy p = policy(PolicyKind::kCiThreshold);
  p.preferred = {0};
  p.ci_threshold = 100;
  EXPECT_EQ(choose(p, cands, decode_batch(16), 10, set), 0);
  EXPECT_EQ(choose(p, cands, decode_batch(16), 4000, set), 1);  // falls back to carbon_greedy
}

TEST(SchedulerTest, SloFilter) {
  const auto& set = bundled();
  const auto t4 = make_instance(0, set, "T4", "1B", region("QC"), 8);
  const auto rtx = make_instance(1, set, "RTX6000Ada", "1B", region("PACE"), 8);
  const std::vector<Candidate> cands{{&t4, {}}, {&rtx, {}}};
  SchedulingPolicy p = policy(PolicyKind::kCarbonGreedy);
  const double t4_latency = estimate_candidate(cands[0], decode_batch(1), 0, set).latency;
  const double rtx_latency = estimate_candidate(cands[1], decode_batch(1), 0, set).latency;
  ASSERT_LT(rtx_latency, t4_latency);
  p.latency_slo = (t4_latency + rtx_latency) / 2;
  EXPECT_EQ(choose(p, cands, decode_batch(1), 0, set), 1);
  p.latency_slo = rtx_latency / 2;
  EXPECT_THROW(choose(p, cands, decode_batch(1), 0, set), SloInfeasibleError);
}

TEST(CandidateEstimateTest, QueueDrain) {
  const auto set = oracle_set();
  const auto inst = make_instance(0, set, "T4", "M", region("QC"), 2);
  const BatchDescriptor d{1, 100, 150, BatchScope::kBoth};
  const Candidate idle{&inst, {0, 0}};
  EXPECT_NEAR(estimate_candidate(idle, d, 0, set).latency, 7.6, 1e-12);
  // Busy for 3 s more, two full batches queued, one partial request.
  const Candidate busy{&inst, {3, 5}};
  const auto e = estimate_candidate(busy, d, 0, set);
  EXPECT_EQ(e.effective_batch, 2);
  EXPECT_NEAR(e.latency, 3 + 2 * 7.6 + 7.6, 1e-9);
  EXPECT_NEAR(e.energy, 231, 1e-9);
}
