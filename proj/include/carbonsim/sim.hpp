#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "carbonsim/carbon.hpp"
#include "carbonsim/error.hpp"
#include "carbonsim/fleet.hpp"
#include "carbonsim/profiles.hpp"
#include "carbonsim/sched.hpp"

namespace carbonsim {

// Output length used when measuring a prompt.
inline constexpr int kDefaultOutputTokens = 150;

struct Request {
  int id = 0;
  double arrival_time = 0.0;
  int prompt_tokens = 1;
  int output_tokens = kDefaultOutputTokens;

  bool operator==(const Request&) const = default;
};

inline void validate(const Request& r) {
  if (!(r.arrival_time >= 0)) throw ValidationError("request " + std::to_string(r.id) + ": arrival_time must be >= 0");
  if (r.prompt_tokens < 1 || r.output_tokens < 1) {
    throw ValidationError("request " + std::to_string(r.id) + ": token counts must be >= 1");
  }
}

// ---------------------------------------------------------------------------
// Workload generation

// A fixed length is a one-element list; otherwise values are drawn uniformly.
struct LengthDistribution {
  std::vector<int> values{kDefaultOutputTokens};

  static LengthDistribution fixed(int v) { return {{v}}; }

  template <typename Rng>
  int sample(Rng& rng) const {
    if (values.size() == 1) return values.front();
    std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
    return values[pick(rng)];
  }
};

enum class WorkloadMode { kTrace, kPoisson, kClosedLoop };

inline std::string_view to_string(WorkloadMode m) {
  switch (m) {
    case WorkloadMode::kTrace: return "trace";
    case WorkloadMode::kPoisson: return "poisson";
    case WorkloadMode::kClosedLoop: return "closed_loop";
  }
  return "trace";
}

inline WorkloadMode parse_workload_mode(std::string_view s) {
  if (text::iequals(s, "trace")) return WorkloadMode::kTrace;
  if (text::iequals(s, "poisson")) return WorkloadMode::kPoisson;
  if (text::iequals(s, "closed_loop")) return WorkloadMode::kClosedLoop;
  throw ParseError("unknown workload mode '" + std::string(s) + "'");
}

struct WorkloadSpec {
  WorkloadMode mode = WorkloadMode::kPoisson;
  double rate = 1.0;    // requests/s, poisson
  int concurrency = 1;  // closed_loop users
  double duration = 0.0;
  LengthDistribution prompt_tokens = LengthDistribution::fixed(20);
  LengthDistribution output_tokens = LengthDistribution::fixed(kDefaultOutputTokens);
  std::uint64_t seed = 0;
  std::vector<Request> trace;
};

inline void validate(const WorkloadSpec& w) {
  if (w.mode == WorkloadMode::kPoisson && !(w.rate > 0)) throw ValidationError("poisson workload requires rate > 0");
  if (w.mode == WorkloadMode::kClosedLoop && w.concurrency < 1) {
    throw ValidationError("closed_loop workload requires concurrency >= 1");
  }
  if (w.mode != WorkloadMode::kTrace && !(w.duration >= 0)) throw ValidationError("workload duration must be >= 0");
  for (const auto* dist : {&w.prompt_tokens, &w.output_tokens}) {
    if (dist->values.empty()) throw ValidationError("token length distribution is empty");
    for (int v : dist->values) {
      if (v < 1) throw ValidationError("token lengths must be >= 1");
    }
  }
  for (const auto& r : w.trace) validate(r);
}

using WorkloadRng = std::mt19937_64;

// Trace mode returns the trace unchanged. Closed-loop returns the initial
// wave (one request per user at t=0); follow-ups are issued by the simulator.
inline std::vector<Request> generate_workload(const WorkloadSpec& spec) {
  validate(spec);
  if (spec.mode == WorkloadMode::kTrace) return spec.trace;
  std::vector<Request> out;
  if (!(spec.duration > 0)) return out;
  WorkloadRng rng(spec.seed);
  if (spec.mode == WorkloadMode::kPoisson) {
    std::exponential_distribution<double> gap(spec.rate);
    double t = 0.0;
    while (true) {
      t += gap(rng);
      if (t >= spec.duration) break;
      Request r;
      r.id = static_cast<int>(out.size());
      r.arrival_time = t;
      r.prompt_tokens = spec.prompt_tokens.sample(rng);
      r.output_tokens = spec.output_tokens.sample(rng);
      out.push_back(r);
    }
    return out;
  }
  for (int u = 0; u < spec.concurrency; ++u) {
    Request r;
    r.id = u;
    r.arrival_time = 0.0;
    r.prompt_tokens = spec.prompt_tokens.sample(rng);
    r.output_tokens = spec.output_tokens.sample(rng);
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report types

struct RequestOutcome {
  int request_id = 0;
  int instance_id = 0;         // instance that ran prefill
  int decode_instance_id = 0;  // same as instance_id on unified fleets
  int prefill_batch_size = 1;
  int decode_batch_size = 1;
  int prompt_tokens = 0;
  int output_tokens = 0;
  double arrival_time = 0.0;
  double queue_delay = 0.0;  // includes handoff and decode-queue wait
  double prefill_time = 0.0;
  double decode_time = 0.0;
  double end_to_end_latency = 0.0;
  double completion_time = 0.0;
  double prefill_energy = 0.0;
  double decode_energy = 0.0;
  double energy = 0.0;
  CarbonBreakdown prefill_carbon;
  CarbonBreakdown decode_carbon;
  CarbonBreakdown carbon;
};

struct InstanceStats {
  int instance_id = 0;
  int batches = 0;
  double busy_time = 0.0;
  double utilization = 0.0;
  double busy_energy = 0.0;     // sum over busy intervals of avg_power * length
  double padding_energy = 0.0;  // energy of slots idled by length skew in a batch
  double idle_energy = 0.0;     // idle-power mode only
  double idle_operational_carbon = 0.0;
};

struct SimAggregates {
  int completed = 0;
  int dropped = 0;
  double mean_latency = 0.0;
  double median_latency = 0.0;
  double p99_latency = 0.0;
  double total_energy = 0.0;
  double mean_energy = 0.0;
  double median_energy = 0.0;
  CarbonBreakdown carbon;
  long long total_tokens = 0;
  double carbon_per_token = 0.0;  // g/token
  double throughput = 0.0;        // tokens/s over the active span
  double makespan = 0.0;          // last completion time
  double idle_energy = 0.0;
  double idle_operational_carbon = 0.0;
};

struct SimReport {
  std::vector<RequestOutcome> outcomes;  // ordered by request id
  std::vector<InstanceStats> instances;  // ordered by instance id
  std::vector<int> dropped_requests;
  SimAggregates aggregates;
};

struct SimOptions {
  double batch_wait = 0.0;           // s a queue head waits for the batch to fill
  double handoff_latency = 0.0;      // s between prefill and decode instances (unvalidated)
  double idle_power_fraction = 0.0;  // of TDP; 0 disables idle accounting
};

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Nearest-rank percentile.
inline double percentile_of(std::vector<double> v, double pct) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(v.size())));
  rank = std::clamp<std::size_t>(rank, 1, v.size());
  return v[rank - 1];
}

class Simulator {
 public:
  Simulator(const std::vector<GpuInstance>& fleet, const SchedulingPolicy& policy, const ProfileSet& profiles,
            const SimOptions& options)
      : profiles_(profiles), options_(options), scheduler_(policy) {
    if (fleet.empty()) throw ValidationError("simulate: empty fleet");
    if (options.batch_wait < 0 || options.handoff_latency < 0 || options.idle_power_fraction < 0) {
      throw ValidationError("simulate: batch_wait, handoff_latency and idle_power_fraction must be >= 0");
    }
    for (const auto& inst : fleet) {
      Runtime rt;
      rt.inst = &inst;
      instances_.push_back(std::move(rt));
    }
    std::sort(instances_.begin(), instances_.end(),
              [](const Runtime& a, const Runtime& b) { return a.inst->instance_id < b.inst->instance_id; });
    for (std::size_t i = 1; i < instances_.size(); ++i) {
      if (instances_[i].inst->instance_id == instances_[i - 1].inst->instance_id) {
        throw ValidationError("duplicate instance id " + std::to_string(instances_[i].inst->instance_id));
      }
    }
    validate_fleet();
  }

  void set_closed_loop(const WorkloadSpec& spec) {
    closed_loop_ = spec;
    rng_.seed(spec.seed);
    // Discard the draws generate_workload used for the initial wave.
    for (int u = 0; u < spec.concurrency; ++u) {
      spec.prompt_tokens.sample(rng_);
      spec.output_tokens.sample(rng_);
    }
  }

  SimReport run(const std::vector<Request>& workload) {
    for (const auto& r : workload) add_request(r);
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::kArrival: on_arrival(ev.a); break;
        case EventKind::kTimer: on_timer(ev.a); break;
        case EventKind::kBatchDone: on_batch_done(ev.a); break;
        case EventKind::kHandoff: on_handoff(ev.a); break;
        case EventKind::kDecodeArrival: enqueue(ev.a, ev.b); break;
      }
    }
    return build_report();
  }

 private:
  enum class EventKind { kArrival, kTimer, kBatchDone, kHandoff, kDecodeArrival };

  struct Event {
    double time;
    std::uint64_t seq;
    EventKind kind;
    int a;
    int b;
    bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
  };

  struct Runtime {
    const GpuInstance* inst = nullptr;
    std::deque<int> queue;  // request slots
    bool busy = false;
    double busy_until = 0.0;
    std::optional<double> timer_at;
    std::vector<std::pair<double, double>> busy_intervals;
    InstanceStats stats{};
  };

  struct ReqState {
    Request req;
    double enqueue_time = 0.0;
    bool dropped = false;
    bool decode_pending = false;  // prefill done, waiting for a decode instance
    double prefill_end = 0.0;
    RequestOutcome out;
  };

  bool disaggregated() const {
    return std::any_of(instances_.begin(), instances_.end(),
                       [](const Runtime& r) { return r.inst->role != InstanceRole::kUnified; });
  }

  void validate_fleet() {
    bool unified = false, prefill = false, decode = false;
    for (const auto& rt : instances_) {
      const auto& inst = *rt.inst;
      const std::string name = "instance " + std::to_string(inst.instance_id);
      if (inst.max_batch < 1) throw ValidationError(name + ": max_batch must be >= 1");
      require_embodied(inst.spec);
      validate(inst.region);
      unified |= inst.role == InstanceRole::kUnified;
      prefill |= inst.role == InstanceRole::kPrefill;
      decode |= inst.role == InstanceRole::kDecode;
      for (Phase phase : {Phase::kPrefill, Phase::kDecode}) {
        if (!inst.runs(phase)) continue;
        for (int b = 1; b <= inst.max_batch; ++b) {
          try {
            lookup(profiles_, inst.spec.id, inst.model.id, b, phase);
          } catch (const OomError& e) {
            throw OomError(name + " (max_batch " + std::to_string(inst.max_batch) + "): " + e.what());
          } catch (const OutOfRangeError& e) {
            throw OutOfRangeError(name + " (max_batch " + std::to_string(inst.max_batch) + "): " + e.what());
          }
        }
      }
    }
    if (unified && (prefill || decode)) {
      throw ValidationError("fleet mixes unified and phase-split instances; use one placement mode");
    }
    if ((prefill || decode) && !(prefill && decode)) {
      throw ValidationError("phase-split fleet needs at least one prefill and one decode instance");
    }
  }

  void push(double time, EventKind kind, int a, int b = 0) { events_.push(Event{time, seq_++, kind, a, b}); }

  Runtime& runtime(int instance_id) {
    for (auto& rt : instances_) {
      if (rt.inst->instance_id == instance_id) return rt;
    }
    throw UnknownIdError("policy chose unknown instance " + std::to_string(instance_id));
  }

  void add_request(const Request& r) {
    validate(r);
    const int slot = static_cast<int>(requests_.size());
    ReqState st;
    st.req = r;
    st.out.request_id = r.id;
    st.out.prompt_tokens = r.prompt_tokens;
    st.out.output_tokens = r.output_tokens;
    st.out.arrival_time = r.arrival_time;
    requests_.push_back(st);
    next_request_id_ = std::max(next_request_id_, r.id + 1);
    push(r.arrival_time, EventKind::kArrival, slot);
  }

  // Returns the chosen instance id, or nullopt when the request is dropped.
  std::optional<int> dispatch(int slot, Phase phase) {
    const auto& r = requests_[slot].req;
    BatchDescriptor d;
    d.batch_size = 1;
    d.prompt_tokens = r.prompt_tokens;
    d.output_tokens = r.output_tokens;
    const bool split = disaggregated();
    d.scope = !split ? BatchScope::kBoth : (phase == Phase::kPrefill ? BatchScope::kPrefillOnly : BatchScope::kDecodeOnly);

    std::vector<Candidate> candidates;
    for (const auto& rt : instances_) {
      const bool eligible = split ? (phase == Phase::kPrefill ? rt.inst->role == InstanceRole::kPrefill
                                                              : rt.inst->role == InstanceRole::kDecode)
                                  : true;
      if (!eligible) continue;
      candidates.push_back({rt.inst, QueueState{rt.busy ? rt.busy_until : now_, static_cast<int>(rt.queue.size())}});
    }
    try {
      return scheduler_.choose(candidates, d, now_, profiles_);
    } catch (const SloInfeasibleError&) {
      requests_[slot].dropped = true;
      dropped_.push_back(r.id);
      return std::nullopt;
    }
  }

  void on_arrival(int slot) {
    auto chosen = dispatch(slot, Phase::kPrefill);
    if (!chosen) return;
    requests_[slot].out.instance_id = *chosen;
    requests_[slot].out.decode_instance_id = *chosen;
    enqueue(slot, *chosen);
  }

  void enqueue(int slot, int instance_id) {
    auto& rt = runtime(instance_id);
    requests_[slot].enqueue_time = now_;
    rt.queue.push_back(slot);
    try_start(rt);
  }

  void on_timer(int instance_id) {
    auto& rt = runtime(instance_id);
    if (rt.timer_at && *rt.timer_at == now_) rt.timer_at.reset();
    try_start(rt);
  }

  void on_batch_done(int instance_id) {
    auto& rt = runtime(instance_id);
    rt.busy = false;
    try_start(rt);
  }

  void on_handoff(int slot) {
    auto chosen = dispatch(slot, Phase::kDecode);
    if (!chosen) return;
    requests_[slot].out.decode_instance_id = *chosen;
    push(now_ + options_.handoff_latency, EventKind::kDecodeArrival, slot, *chosen);
  }

  void try_start(Runtime& rt) {
    if (rt.busy || rt.queue.empty()) return;
    const double deadline = requests_[rt.queue.front()].enqueue_time + options_.batch_wait;
    if (static_cast<int>(rt.queue.size()) >= rt.inst->max_batch || now_ >= deadline) {
      start_batch(rt);
      return;
    }
    if (!rt.timer_at || *rt.timer_at != deadline) {
      rt.timer_at = deadline;
      push(deadline, EventKind::kTimer, rt.inst->instance_id);
    }
  }

  void start_batch(Runtime& rt) {
    const auto& inst = *rt.inst;
    const int n = std::min(static_cast<int>(rt.queue.size()), inst.max_batch);
    std::vector<int> batch(rt.queue.begin(), rt.queue.begin() + n);
    rt.queue.erase(rt.queue.begin(), rt.queue.begin() + n);
    rt.timer_at.reset();

    const double start = now_;
    double prefill_time = 0.0, decode_span = 0.0;
    const bool do_prefill = inst.role != InstanceRole::kDecode;
    const bool do_decode = inst.role != InstanceRole::kPrefill;

    if (do_prefill) {
      const auto pf = lookup(profiles_, inst.spec.id, inst.model.id, n, Phase::kPrefill);
      int max_prompt = 0;
      long long sum_prompt = 0;
      for (int s : batch) {
        max_prompt = std::max(max_prompt, requests_[s].req.prompt_tokens);
        sum_prompt += requests_[s].req.prompt_tokens;
      }
      prefill_time = phase_duration(pf, n, max_prompt);
      for (int s : batch) {
        auto& st = requests_[s];
        const auto c = charge_request_phase(inst, pf, n, st.req.prompt_tokens, prefill_time, start);
        st.out.queue_delay += start - st.enqueue_time;
        st.out.prefill_batch_size = n;
        st.out.prefill_time = prefill_time;
        st.out.prefill_energy = c.energy;
        st.out.prefill_carbon = c.carbon;
        st.prefill_end = start + prefill_time;
      }
      rt.stats.busy_energy += pf.avg_power * prefill_time;
      rt.stats.padding_energy +=
          pf.per_token_energy * static_cast<double>(static_cast<long long>(n) * max_prompt - sum_prompt);
    }

    if (do_decode) {
      const double decode_start = start + prefill_time;
      const auto dec = lookup(profiles_, inst.spec.id, inst.model.id, n, Phase::kDecode);
      int max_output = 0;
      long long sum_output = 0;
      for (int s : batch) {
        max_output = std::max(max_output, requests_[s].req.output_tokens);
        sum_output += requests_[s].req.output_tokens;
      }
      decode_span = phase_duration(dec, n, max_output);
      for (int s : batch) {
        auto& st = requests_[s];
        const double own = phase_duration(dec, n, st.req.output_tokens);
        const auto c = charge_request_phase(inst, dec, n, st.req.output_tokens, own, decode_start);
        if (!do_prefill) st.out.queue_delay += start - st.prefill_end;
        st.out.decode_batch_size = n;
        st.out.decode_time = own;
        st.out.decode_energy = c.energy;
        st.out.decode_carbon = c.carbon;
        finish(s, decode_start + own);
      }
      rt.stats.busy_energy += dec.avg_power * decode_span;
      rt.stats.padding_energy +=
          dec.per_token_energy * static_cast<double>(static_cast<long long>(n) * max_output - sum_output);
    } else {
      for (int s : batch) push(start + prefill_time, EventKind::kHandoff, s);
    }

    const double end = start + prefill_time + decode_span;
    rt.busy = true;
    rt.busy_until = end;
    rt.stats.batches += 1;
    rt.stats.busy_time += end - start;
    rt.busy_intervals.emplace_back(start, end);
    push(end, EventKind::kBatchDone, inst.instance_id);
  }

  void finish(int slot, double completion) {
    auto& st = requests_[slot];
    auto& o = st.out;
    o.energy = o.prefill_energy + o.decode_energy;
    o.carbon = o.prefill_carbon + o.decode_carbon;
    o.end_to_end_latency = o.queue_delay + o.prefill_time + o.decode_time;
    o.completion_time = completion;
    makespan_ = std::max(makespan_, completion);
    if (closed_loop_ && completion < closed_loop_->duration) {
      Request next;
      next.id = next_id();
      next.arrival_time = completion;
      next.prompt_tokens = closed_loop_->prompt_tokens.sample(rng_);
      next.output_tokens = closed_loop_->output_tokens.sample(rng_);
      add_request(next);
    }
  }

  int next_id() { return next_request_id_; }

  void account_idle(Runtime& rt, double horizon) {
    if (options_.idle_power_fraction <= 0 || horizon <= 0) return;
    const double power = options_.idle_power_fraction * rt.inst->spec.tdp;
    double cursor = 0.0;
    auto charge_gap = [&](double a, double b) {
      if (b <= a) return;
      const double e = power * (b - a);
      rt.stats.idle_energy += e;
      rt.stats.idle_operational_carbon += operational_carbon(e, ci_at(rt.inst->region, (a + b) / 2.0));
    };
    for (const auto& [a, b] : rt.busy_intervals) {
      charge_gap(cursor, a);
      cursor = std::max(cursor, b);
    }
    charge_gap(cursor, horizon);
  }

  SimReport build_report() {
    SimReport report;
    std::vector<const ReqState*> done;
    for (const auto& st : requests_) {
      if (!st.dropped) done.push_back(&st);
    }
    std::sort(done.begin(), done.end(), [](const ReqState* a, const ReqState* b) { return a->req.id < b->req.id; });

    auto& agg = report.aggregates;
    std::vector<double> latencies, energies;
    double first_arrival = std::numeric_limits<double>::infinity();
    double op = 0.0, em = 0.0;
    for (const auto* st : done) {
      const auto& o = st->out;
      report.outcomes.push_back(o);
      latencies.push_back(o.end_to_end_latency);
      energies.push_back(o.energy);
      agg.total_energy += o.energy;
      op += o.carbon.operational;
      em += o.carbon.embodied;
      agg.total_tokens += o.prompt_tokens + o.output_tokens;
      first_arrival = std::min(first_arrival, o.arrival_time);
    }
    agg.completed = static_cast<int>(done.size());
    report.dropped_requests = dropped_;
    std::sort(report.dropped_requests.begin(), report.dropped_requests.end());
    agg.dropped = static_cast<int>(dropped_.size());
    agg.carbon = CarbonBreakdown::of(op, em);
    if (!done.empty()) {
      agg.mean_latency = std::accumulate(latencies.begin(), latencies.end(), 0.0) / latencies.size();
      agg.median_latency = median_of(latencies);
      agg.p99_latency = percentile_of(latencies, 99.0);
      agg.mean_energy = agg.total_energy / energies.size();
      agg.median_energy = median_of(energies);
      agg.carbon_per_token = agg.carbon.total / static_cast<double>(agg.total_tokens);
      const double span = makespan_ - first_arrival;
      agg.throughput = span > 0 ? static_cast<double>(agg.total_tokens) / span : 0.0;
    }
    agg.makespan = makespan_;
    for (auto& rt : instances_) {
      account_idle(rt, makespan_);
      rt.stats.instance_id = rt.inst->instance_id;
      rt.stats.utilization = makespan_ > 0 ? std::min(1.0, rt.stats.busy_time / makespan_) : 0.0;
      agg.idle_energy += rt.stats.idle_energy;
      agg.idle_operational_carbon += rt.stats.idle_operational_carbon;
      report.instances.push_back(rt.stats);
    }
    return report;
  }

  const ProfileSet& profiles_;
  SimOptions options_;
  Scheduler scheduler_;
  std::vector<Runtime> instances_;
  std::deque<ReqState> requests_;  // stable references while closed-loop requests are appended
  int next_request_id_ = 0;
  std::vector<int> dropped_;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> events_;
  std::uint64_t seq_ = 0;
  double now_ = 0.0;
  double makespan_ = 0.0;
  std::optional<WorkloadSpec> closed_loop_;
  WorkloadRng rng_;
};

}  // namespace detail

// Deterministic discrete-event run: static batches per instance, prefill then
// decode at the formed batch size, carbon charged per request.
inline SimReport simulate(const std::vector<GpuInstance>& fleet, const std::vector<Request>& workload,
                          const SchedulingPolicy& policy, const ProfileSet& profiles, const SimOptions& options = {}) {
  detail::Simulator sim(fleet, policy, profiles, options);
  return sim.run(workload);
}

inline SimReport simulate(const std::vector<GpuInstance>& fleet, const std::vector<Request>& workload,
                          const SchedulingPolicy& policy, const ProfileSet& profiles, double batch_wait) {
  SimOptions options;
  options.batch_wait = batch_wait;
  return simulate(fleet, workload, policy, profiles, options);
}

// Runs any workload mode; closed-loop users re-issue a request as soon as the
// previous one completes, until `duration`.
inline SimReport simulate_workload(const std::vector<GpuInstance>& fleet, const WorkloadSpec& workload,
                                   const SchedulingPolicy& policy, const ProfileSet& profiles,
                                   const SimOptions& options = {}) {
  detail::Simulator sim(fleet, policy, profiles, options);
  if (workload.mode == WorkloadMode::kClosedLoop) sim.set_closed_loop(workload);
  return sim.run(generate_workload(workload));
}

// ---------------------------------------------------------------------------
// Per-token view of a report

struct PerTokenMetrics {
  long long tokens = 0;
  double throughput = 0.0;  // tokens per second of device time
  double energy = 0.0;      // J/token
  CarbonBreakdown carbon;   // g/token
};

inline PerTokenMetrics per_token_report(const SimReport& report, Phase phase) {
  if (report.outcomes.empty()) throw ValidationError("per_token_report: report has no outcomes");
  PerTokenMetrics m;
  double device_time = 0.0, energy = 0.0;
  CarbonBreakdown carbon;
  for (const auto& o : report.outcomes) {
    if (phase == Phase::kPrefill) {
      m.tokens += o.prompt_tokens;
      device_time += o.prefill_time / o.prefill_batch_size;
      energy += o.prefill_energy;
      carbon += o.prefill_carbon;
    } else {
      m.tokens += o.output_tokens;
      device_time += o.decode_time / o.decode_batch_size;
      energy += o.decode_energy;
      carbon += o.decode_carbon;
    }
  }
  const double n = static_cast<double>(m.tokens);
  m.throughput = device_time > 0 ? n / device_time : 0.0;
  m.energy = energy / n;
  m.carbon = carbon.scaled(1.0 / n);
  return m;
}

}  // namespace carbonsim
