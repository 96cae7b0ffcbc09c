#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carbonsim/carbon.hpp"
#include "carbonsim/error.hpp"
#include "carbonsim/fleet.hpp"
#include "carbonsim/profiles.hpp"

namespace carbonsim {

// ---------------------------------------------------------------------------
// Closed-form batch cost

struct BatchCost {
  double latency = 0.0;  // s, prefill + decode
  double prefill_time = 0.0;
  double decode_time = 0.0;
  double energy = 0.0;  // J, whole batch
  CarbonBreakdown carbon;  // whole batch
};

enum class CiSampling {
  kPhaseMidpoint,  // what the simulator charges
  kAtStart,        // ci_at(region, now) for every phase
};

// Cost of running `batch` on `instance` starting at `now` with no queueing.
// Matches what simulate charges for the same isolated batch.
inline BatchCost estimate_batch_cost(const GpuInstance& instance, const BatchDescriptor& batch, double now,
                                     const ProfileSet& profiles,
                                     CiSampling sampling = CiSampling::kPhaseMidpoint) {
  validate(batch);
  const std::optional<double> fixed_ci =
      sampling == CiSampling::kAtStart ? std::optional<double>(ci_at(instance.region, now)) : std::nullopt;
  const double n = static_cast<double>(batch.batch_size);
  BatchCost cost;
  double t = now;
  if (includes(batch.scope, Phase::kPrefill)) {
    const auto pf = lookup(profiles, instance.spec.id, instance.model.id, batch.batch_size, Phase::kPrefill);
    cost.prefill_time = phase_duration(pf, batch.batch_size, batch.prompt_tokens);
    const auto c = charge_request_phase(instance, pf, batch.batch_size, batch.prompt_tokens, cost.prefill_time, t,
                                        fixed_ci);
    cost.energy += c.energy * n;
    cost.carbon += c.carbon.scaled(n);
    t += cost.prefill_time;
  }
  if (includes(batch.scope, Phase::kDecode)) {
    const auto dec = lookup(profiles, instance.spec.id, instance.model.id, batch.batch_size, Phase::kDecode);
    cost.decode_time = phase_duration(dec, batch.batch_size, batch.output_tokens);
    const auto c = charge_request_phase(instance, dec, batch.batch_size, batch.output_tokens, cost.decode_time, t,
                                        fixed_ci);
    cost.energy += c.energy * n;
    cost.carbon += c.carbon.scaled(n);
  }
  cost.latency = cost.prefill_time + cost.decode_time;
  return cost;
}

// ---------------------------------------------------------------------------
// Policies

enum class PolicyKind { kFixed, kRoundRobin, kLatencyGreedy, kEnergyGreedy, kCarbonGreedy, kCiThreshold };

inline std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kFixed: return "fixed";
    case PolicyKind::kRoundRobin: return "round_robin";
    case PolicyKind::kLatencyGreedy: return "latency_greedy";
    case PolicyKind::kEnergyGreedy: return "energy_greedy";
    case PolicyKind::kCarbonGreedy: return "carbon_greedy";
    case PolicyKind::kCiThreshold: return "ci_threshold";
  }
  return "carbon_greedy";
}

inline PolicyKind parse_policy_kind(std::string_view s) {
  for (auto k : {PolicyKind::kFixed, PolicyKind::kRoundRobin, PolicyKind::kLatencyGreedy, PolicyKind::kEnergyGreedy,
                 PolicyKind::kCarbonGreedy, PolicyKind::kCiThreshold}) {
    if (text::iequals(s, to_string(k))) return k;
  }
  throw ParseError("unknown policy kind '" + std::string(s) + "'");
}

// No value is prescribed for the threshold; 100 g/kWh sits between QC and CISO.
inline constexpr double kDefaultCiThreshold = 100.0;

struct SchedulingPolicy {
  PolicyKind kind = PolicyKind::kCarbonGreedy;
  std::optional<int> target;                   // fixed
  double ci_threshold = kDefaultCiThreshold;   // ci_threshold, g/kWh
  std::vector<int> preferred;                  // ci_threshold, in priority order
  std::optional<double> latency_slo;           // s
};

inline void validate(const SchedulingPolicy& p) {
  if (p.kind == PolicyKind::kFixed && !p.target) throw ValidationError("fixed policy requires a target instance");
  if (p.kind == PolicyKind::kCiThreshold) {
    if (!(p.ci_threshold > 0)) throw ValidationError("ci_threshold policy requires threshold > 0");
    if (p.preferred.empty()) throw ValidationError("ci_threshold policy requires a non-empty preferred list");
  }
  if (p.latency_slo && !(*p.latency_slo > 0)) throw ValidationError("latency_slo must be > 0");
}

struct QueueState {
  double busy_until = 0.0;  // time the running batch finishes
  int queued = 0;           // requests waiting, not yet batched
};

struct Candidate {
  const GpuInstance* instance = nullptr;
  QueueState queue;
};

// Per-candidate planning numbers, expressed for the descriptor's requests
// (not the whole batch they would join).
struct CandidateEstimate {
  int instance_id = 0;
  int effective_batch = 1;
  double latency = 0.0;  // queue drain + own batch service
  double energy = 0.0;
  CarbonBreakdown carbon;
};

// The descriptor joins the partially formed batch at the tail of the queue;
// full batches ahead of it are drained first.
inline CandidateEstimate estimate_candidate(const Candidate& c, const BatchDescriptor& batch, double now,
                                            const ProfileSet& profiles) {
  const auto& inst = *c.instance;
  const int cap = std::max(1, inst.max_batch);
  const int full_batches_ahead = c.queue.queued / cap;
  const int effective = std::min(cap, c.queue.queued % cap + batch.batch_size);

  BatchDescriptor joined = batch;
  joined.batch_size = effective;
  const auto own = estimate_batch_cost(inst, joined, now, profiles, CiSampling::kAtStart);

  double drain = std::max(0.0, c.queue.busy_until - now);
  if (full_batches_ahead > 0) {
    BatchDescriptor full = batch;
    full.batch_size = cap;
    drain += full_batches_ahead * estimate_batch_cost(inst, full, now, profiles, CiSampling::kAtStart).latency;
  }
  const double share = static_cast<double>(std::min(batch.batch_size, effective)) / effective;
  return {inst.instance_id, effective, drain + own.latency, own.energy * share, own.carbon.scaled(share)};
}

class Scheduler {
 public:
  explicit Scheduler(SchedulingPolicy policy) : policy_(std::move(policy)) { validate(policy_); }

  const SchedulingPolicy& policy() const { return policy_; }

  // Picks an instance id for `batch`. Candidates are assumed pre-filtered for
  // OOM. Throws SloInfeasibleError when no candidate meets the latency SLO.
  int choose(std::span<const Candidate> candidates, const BatchDescriptor& batch, double now,
             const ProfileSet& profiles) {
    if (candidates.empty()) throw ValidationError("choose: no candidates");
    validate(batch);

    std::vector<std::pair<const Candidate*, CandidateEstimate>> pool;
    pool.reserve(candidates.size());
    for (const auto& c : candidates) pool.emplace_back(&c, estimate_candidate(c, batch, now, profiles));
    std::sort(pool.begin(), pool.end(),
              [](const auto& a, const auto& b) { return a.second.instance_id < b.second.instance_id; });

    if (policy_.latency_slo) {
      const double slo = *policy_.latency_slo;
      std::erase_if(pool, [slo](const auto& e) { return e.second.latency > slo; });
      if (pool.empty()) {
        throw SloInfeasibleError("no candidate meets latency SLO of " + std::to_string(slo) + " s");
      }
    }

    switch (policy_.kind) {
      case PolicyKind::kFixed: {
        for (const auto& [c, e] : pool) {
          if (e.instance_id == *policy_.target) return e.instance_id;
        }
        bool present = std::any_of(candidates.begin(), candidates.end(),
                                   [&](const Candidate& c) { return c.instance->instance_id == *policy_.target; });
        if (present) throw SloInfeasibleError("fixed target " + std::to_string(*policy_.target) + " misses SLO");
        throw UnknownIdError("fixed target instance " + std::to_string(*policy_.target) + " is not a candidate");
      }
      case PolicyKind::kRoundRobin: {
        int pick = pool.front().second.instance_id;
        if (last_round_robin_) {
          for (const auto& [c, e] : pool) {
            if (e.instance_id > *last_round_robin_) {
              pick = e.instance_id;
              break;
            }
          }
        }
        last_round_robin_ = pick;
        return pick;
      }
      case PolicyKind::kLatencyGreedy:
        return argmin(pool, [](const CandidateEstimate& e) { return e.latency; });
      case PolicyKind::kEnergyGreedy:
        return argmin(pool, [](const CandidateEstimate& e) { return e.energy; });
      case PolicyKind::kCarbonGreedy:
        return argmin(pool, [](const CandidateEstimate& e) { return e.carbon.total; });
      case PolicyKind::kCiThreshold: {
        for (int id : policy_.preferred) {
          for (const auto& [c, e] : pool) {
            if (e.instance_id == id && ci_at(c->instance->region, now) <= policy_.ci_threshold) return id;
          }
        }
        return argmin(pool, [](const CandidateEstimate& e) { return e.carbon.total; });
      }
    }
    return pool.front().second.instance_id;
  }

 private:
  template <typename Key>
  static int argmin(const std::vector<std::pair<const Candidate*, CandidateEstimate>>& pool, Key key) {
    // pool is sorted by id, so strict < keeps the lowest id on ties.
    const CandidateEstimate* best = nullptr;
    for (const auto& [c, e] : pool) {
      if (!best || key(e) < key(*best)) best = &e;
    }
    return best->instance_id;
  }

  SchedulingPolicy policy_;
  std::optional<int> last_round_robin_;
};

// Stateless convenience wrapper; round_robin always starts from the lowest id.
inline int choose(const SchedulingPolicy& policy, std::span<const Candidate> candidates, const BatchDescriptor& batch,
                  double now, const ProfileSet& profiles) {
  Scheduler s(policy);
  return s.choose(candidates, batch, now, profiles);
}

}  // namespace carbonsim
