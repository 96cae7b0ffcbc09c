#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "test_support.hpp"

using namespace carbonsim;
using namespace carbonsim::testing;

namespace {

SchedulingPolicy fixed_to(int id) {
  SchedulingPolicy p;
  p.kind = PolicyKind::kFixed;
  p.target = id;
  return p;
}

std::vector<Request> requests(std::initializer_list<std::tuple<double, int, int>> rows) {
  std::vector<Request> out;
  for (const auto& [t, p, o] : rows) out.push_back(Request{static_cast<int>(out.size()), t, p, o});
  return out;
}

}  // namespace

TEST(WorkloadTest, PoissonMeanGap) {
  WorkloadSpec w;
  w.rate = 10;
  w.duration = 100;
  w.seed = 1234;
  const auto rs = generate_workload(w);
  EXPECT_GT(rs.size(), 900u);
  EXPECT_LT(rs.size(), 1100u);
  const double mean_gap = rs.back().arrival_time / static_cast<double>(rs.size());
  EXPECT_NEAR(mean_gap, 0.1, 0.01);
  EXPECT_EQ(generate_workload(w), rs);
}

TEST(WorkloadTest, TraceEchoAndEmpty) {
  WorkloadSpec w;
  w.mode = WorkloadMode::kTrace;
  w.trace = requests({{0.5, 3, 4}, {0.25, 7, 1}});
  EXPECT_EQ(generate_workload(w), w.trace);
  WorkloadSpec zero;
  zero.duration = 0;
  EXPECT_TRUE(generate_workload(zero).empty());
}

TEST(SimulateTest, SingleRequestOracle) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1)};
  const auto report = simulate(fleet, requests({{0, 100, 150}}), fixed_to(0), set);
  ASSERT_EQ(report.outcomes.size(), 1u);
  const auto& o = report.outcomes[0];
  EXPECT_NEAR(o.prefill_time, 0.1, 1e-12);
  EXPECT_NEAR(o.decode_time, 7.5, 1e-12);
  EXPECT_NEAR(o.end_to_end_latency, 7.6, 1e-12);
  EXPECT_NEAR(o.energy, 231, 1e-9);
  EXPECT_NEAR(o.carbon.operational, 1.9892e-3, 1e-7);
  EXPECT_NEAR(o.carbon.embodied, 4.9611e-4, 1e-8);
  EXPECT_EQ(o.queue_delay, 0.0);
}

TEST(SimulateTest, EmptyWorkload) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 4)};
  const auto report = simulate(fleet, {}, SchedulingPolicy{}, set);
  EXPECT_TRUE(report.outcomes.empty());
  EXPECT_EQ(report.aggregates.completed, 0);
  EXPECT_EQ(report.aggregates.total_energy, 0.0);
  EXPECT_EQ(report.aggregates.carbon.total, 0.0);
}

TEST(SimulateTest, SimultaneousRequestsShareABatch) {
  std::vector<PhaseProfile> ps;
  for (int b : {1, 2, 4}) {
    ps.push_back(point("T4", "M", b, Phase::kPrefill, 1000.0 * b, 0.06 / b));
    ps.push_back(point("T4", "M", b, Phase::kDecode, 20.0 * b, 1.5 / b));
  }
  const ProfileSet set({t4_spec()}, {ModelConfig{"M", 1, 2}}, ps);
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 4)};
  const auto report = simulate(fleet, requests({{0, 100, 150}, {0, 100, 150}}), fixed_to(0), set, 0.5);
  ASSERT_EQ(report.outcomes.size(), 2u);
  for (const auto& o : report.outcomes) {
    EXPECT_EQ(o.prefill_batch_size, 2);
    EXPECT_EQ(o.decode_batch_size, 2);
    EXPECT_NEAR(o.energy, 100 * 0.03 + 150 * 0.75, 1e-9);
    EXPECT_NEAR(o.queue_delay, 0.5, 1e-12);
  }
  EXPECT_EQ(report.instances[0].batches, 1);
}

TEST(SimulateTest, QueueingAndBatchCap) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1)};
  const auto report = simulate(fleet, requests({{0, 100, 150}, {0, 100, 150}}), fixed_to(0), set);
  ASSERT_EQ(report.outcomes.size(), 2u);
  EXPECT_NEAR(report.outcomes[1].queue_delay, 7.6, 1e-12);
  EXPECT_NEAR(report.outcomes[1].end_to_end_latency, 15.2, 1e-12);
  EXPECT_NEAR(report.aggregates.makespan, 15.2, 1e-12);
}

TEST(SimulateTest, CarbonMonotoneInCi) {
  const auto set = oracle_set();
  auto run = [&](double ci) {
    const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", RegionCI{"R", ci, {}}, 2)};
    return simulate(fleet, requests({{0, 100, 150}, {1, 50, 20}, {2, 10, 300}}), fixed_to(0), set).aggregates;
  };
  const auto lo = run(31), hi = run(647);
  EXPECT_EQ(lo.total_energy, hi.total_energy);
  EXPECT_EQ(lo.carbon.embodied, hi.carbon.embodied);
  EXPECT_NEAR(hi.carbon.operational / lo.carbon.operational, 647.0 / 31.0, 1e-9);
  EXPECT_GT(hi.carbon.total, lo.carbon.total);
}

TEST(SimulateTest, CiSeriesSampledAtPhaseMidpoints) {
  const auto set = oracle_set();
  // CI jumps 100 -> 300 at t=1: prefill [0, 0.1] sees 100, decode [0.1, 7.6] midpoint sees 300.
  const RegionCI r{"R", 200, {{0, 100}, {1, 300}}};
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", r, 1)};
  const auto o = simulate(fleet, requests({{0, 100, 150}}), fixed_to(0), set).outcomes.at(0);
  EXPECT_NEAR(o.prefill_carbon.operational, operational_carbon(6, 100), 1e-15);
  EXPECT_NEAR(o.decode_carbon.operational, operational_carbon(225, 300), 1e-15);
}

// Request energy plus padding accounts for all busy energy, and every
// outcome's latency decomposes exactly.
TEST(SimulateTest, PropertyEnergyConservation) {
  const auto& set = bundled();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "1B", region("QC"), 8),
                                   make_instance(1, set, "RTX6000Ada", "1B", region("PACE"), 32)};
    WorkloadSpec w;
    w.rate = 2 + trial % 5;
    w.duration = 30;
    w.seed = rng();
    w.prompt_tokens = LengthDistribution{{5, 20, 64}};
    w.output_tokens = LengthDistribution{{10, 150, 300}};
    SimOptions opt;
    opt.batch_wait = 0.2 * (trial % 3);
    SchedulingPolicy p;
    p.kind = trial % 2 ? PolicyKind::kRoundRobin : PolicyKind::kCarbonGreedy;
    const auto rep = simulate_workload(fleet, w, p, set, opt);
    double request_energy = 0, padding = 0, busy = 0;
    for (const auto& o : rep.outcomes) {
      request_energy += o.energy;
      EXPECT_EQ(o.end_to_end_latency, o.queue_delay + o.prefill_time + o.decode_time);
      EXPECT_GE(o.queue_delay, 0);
      EXPECT_LE(o.prefill_batch_size, o.instance_id == 0 ? 8 : 32);
    }
    for (const auto& s : rep.instances) {
      padding += s.padding_energy;
      busy += s.busy_energy;
    }
    EXPECT_LT(rel_err(request_energy + padding, busy), 0.011);
  }
}

TEST(SimulateTest, Determinism) {
  const auto& set = bundled();
  std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "1B", region("QC"), 8),
                                 make_instance(1, set, "RTX6000Ada", "1B", region("CISO"), 16)};
  WorkloadSpec w;
  w.rate = 5;
  w.duration = 60;
  w.seed = 5;
  w.prompt_tokens = LengthDistribution{{5, 20, 64}};
  const auto a = to_json(simulate_workload(fleet, w, SchedulingPolicy{}, set)).dump();
  const auto b = to_json(simulate_workload(fleet, w, SchedulingPolicy{}, set)).dump();
  EXPECT_EQ(a, b);
  w.seed = 6;
  EXPECT_NE(to_json(simulate_workload(fleet, w, SchedulingPolicy{}, set)).dump(), a);
}

TEST(SimulateTest, ClosedLoopKeepsConcurrency) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 4)};
  WorkloadSpec w;
  w.mode = WorkloadMode::kClosedLoop;
  w.concurrency = 3;
  w.duration = 60;
  w.prompt_tokens = LengthDistribution::fixed(100);
  w.output_tokens = LengthDistribution::fixed(150);
  SimOptions opt;
  opt.batch_wait = 0.4;
  const auto rep = simulate_workload(fleet, w, fixed_to(0), set, opt);
  // Batches of 3 complete every 8 s; users re-issue until t = 60.
  EXPECT_EQ(rep.aggregates.completed, 3 * 8);
  for (const auto& o : rep.outcomes) EXPECT_EQ(o.prefill_batch_size, 3);
}

TEST(SimulateTest, PhaseSplitFleet) {
  const auto set = oracle_set();
  std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1, InstanceRole::kPrefill),
                                 make_instance(1, set, "T4", "M", region("PACE"), 1, InstanceRole::kDecode)};
  SimOptions opt;
  opt.handoff_latency = 0.05;
  const auto o = simulate(fleet, requests({{0, 100, 150}}), SchedulingPolicy{}, set, opt).outcomes.at(0);
  EXPECT_EQ(o.instance_id, 0);
  EXPECT_EQ(o.decode_instance_id, 1);
  EXPECT_NEAR(o.queue_delay, 0.05, 1e-12);
  EXPECT_NEAR(o.end_to_end_latency, 7.65, 1e-12);
  EXPECT_NEAR(o.decode_carbon.operational, operational_carbon(225, 647), 1e-15);

  fleet.pop_back();
  EXPECT_THROW(simulate(fleet, {}, SchedulingPolicy{}, set), ValidationError);
}

TEST(SimulateTest, InvalidFleetsRejected) {
  const auto& set = bundled();
  EXPECT_THROW(simulate({make_instance(0, set, "T4", "7B", region("QC"), 16)}, {}, SchedulingPolicy{}, set), OomError);
  EXPECT_THROW(simulate({make_instance(0, set, "T4", "1B", region("QC"), 128)}, {}, SchedulingPolicy{}, set),
               OutOfRangeError);
  EXPECT_THROW(simulate({}, {}, SchedulingPolicy{}, set), ValidationError);
}

TEST(SimulateTest, SloDropsRequests) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1)};
  SchedulingPolicy p;
  p.latency_slo = 8.0;
  const auto rep = simulate(fleet, requests({{0, 100, 150}, {0, 100, 150}}), p, set);
  EXPECT_EQ(rep.aggregates.completed, 1);
  EXPECT_EQ(rep.aggregates.dropped, 1);
  EXPECT_EQ(rep.dropped_requests, std::vector<int>{1});
}

TEST(SimulateTest, IdlePowerOptIn) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1)};
  const auto reqs = requests({{0, 100, 150}, {10, 100, 150}});
  EXPECT_EQ(simulate(fleet, reqs, fixed_to(0), set).aggregates.idle_energy, 0.0);
  SimOptions opt;
  opt.idle_power_fraction = 0.1;
  const auto agg = simulate(fleet, reqs, fixed_to(0), set, opt).aggregates;
  EXPECT_NEAR(agg.idle_energy, 0.1 * 70 * 2.4, 1e-9);
}

TEST(PerTokenReportTest, Examples) {
  const auto set = oracle_set();
  const std::vector<GpuInstance> fleet{make_instance(0, set, "T4", "M", region("QC"), 1)};
  const auto rep = simulate(fleet, requests({{0, 100, 150}}), fixed_to(0), set);
  const auto dec = per_token_report(rep, Phase::kDecode);
  EXPECT_NEAR(dec.energy, 1.5, 1e-12);
  EXPECT_NEAR(dec.throughput, 20, 1e-9);
  const auto one = per_token_report(simulate(fleet, requests({{0, 1, 1}}), fixed_to(0), set), Phase::kDecode);
  EXPECT_NEAR(one.energy, 1.5, 1e-12);

  // Near-zero CI leaves only the embodied component.
  const std::vector<GpuInstance> clean{make_instance(0, set, "T4", "M", RegionCI{"Z", 1e-12, {}}, 1)};
  const auto z = per_token_report(simulate(clean, requests({{0, 100, 150}}), fixed_to(0), set), Phase::kDecode);
  EXPECT_LT(z.carbon.operational, 1e-15);
  EXPECT_NEAR(z.carbon.total, amortized_embodied(t4_spec(), 7.5) / 150, 1e-15);
}
