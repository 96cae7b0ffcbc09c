#pragma once

#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carbonsim/carbon.hpp"
#include "carbonsim/fleet.hpp"
#include "carbonsim/profiles.hpp"
#include "carbonsim/report.hpp"
#include "carbonsim/sched.hpp"
#include "carbonsim/sim.hpp"

// Parameter sweeps. Every number here comes from a profile lookup or a
// carbon-module call; sweeps only arrange them.
namespace carbonsim {

struct MetricBundle {
  bool gap = false;  // OOM at this axis point
  std::string gap_reason;
  std::optional<double> latency;           // s
  std::optional<double> energy;            // J
  std::optional<double> per_token_energy;  // J/token
  std::optional<double> throughput;        // tokens/s
  std::optional<double> avg_power;         // W
  std::optional<CarbonBreakdown> carbon;   // g (per token or per prompt, see SweepResult::unit)
  std::optional<double> embodied_fraction;
};

struct SweepMetadata {
  std::string gpu;
  std::string model;
  std::string phase;
  std::string region;
  std::optional<double> lifetime;  // years
  std::string carbon_unit;         // "per_token", "per_prompt" or ""
};

struct SweepResult {
  std::string axis;
  std::vector<double> values;  // strictly increasing
  std::vector<MetricBundle> points;
  SweepMetadata metadata;

  std::string label() const {
    std::string s = metadata.gpu;
    for (const auto* part : {&metadata.model, &metadata.phase, &metadata.region}) {
      if (!part->empty()) s += (s.empty() ? "" : "/") + *part;
    }
    return s;
  }
};

template <typename T>
void require_strictly_increasing(const std::vector<T>& v, const char* what) {
  if (v.empty()) throw ValidationError(std::string(what) + ": empty axis");
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) throw ValidationError(std::string(what) + ": axis must be strictly increasing");
  }
}

// Per-token carbon at a measured operating point.
inline CarbonBreakdown per_token_carbon(const PhaseProfile& p, const GpuSpec& spec, double ci) {
  return CarbonBreakdown::of(operational_carbon(p.per_token_energy, ci), amortized_embodied(spec, 1.0 / p.throughput));
}

inline std::vector<int> measured_batches(const ProfileSet& profiles, std::string_view gpu, std::string_view model,
                                         Phase phase) {
  std::vector<int> out;
  for (const auto& p : profiles.series(gpu, model, phase)) out.push_back(p.batch_size);
  return out;
}

inline SweepResult batch_sweep(const ProfileSet& profiles, std::string_view gpu_id, std::string_view model_id, Phase phase,
                               const RegionCI& region, std::vector<int> batches = {}) {
  const auto& gpu = profiles.gpu(gpu_id);
  const auto& model = profiles.model(model_id);
  if (batches.empty()) batches = measured_batches(profiles, gpu.id, model.id, phase);
  require_strictly_increasing(batches, "batch_sweep");

  SweepResult r;
  r.axis = "batch_size";
  r.metadata = {gpu.id, model.id, std::string(to_string(phase)), region.region_code, gpu.lifetime, "per_token"};
  for (int b : batches) {
    MetricBundle m;
    try {
      const auto p = lookup(profiles, gpu.id, model.id, b, phase);
      m.throughput = p.throughput;
      m.per_token_energy = p.per_token_energy;
      m.avg_power = p.avg_power;
      m.carbon = per_token_carbon(p, gpu, region.avg_ci);
      m.embodied_fraction = m.carbon->embodied / m.carbon->total;
    } catch (const OomError& e) {
      m.gap = true;
      m.gap_reason = e.what();
    }
    r.values.push_back(b);
    r.points.push_back(std::move(m));
  }
  return r;
}

struct PromptShape {
  std::optional<int> prompt_tokens;  // defaults to the dataset's canonical prompt length
  int output_tokens = kDefaultOutputTokens;
};

inline int resolve_prompt_tokens(const ProfileSet& profiles, const PromptShape& shape) {
  if (shape.prompt_tokens) return *shape.prompt_tokens;
  if (profiles.canonical_prompt_tokens()) return *profiles.canonical_prompt_tokens();
  throw ValidationError("prompt length not given and the profile set has no canonical_prompt_tokens");
}

// Per-prompt cost of one canonical prompt served inside a batch of identical
// prompts, at the region's average CI.
inline MetricBundle per_prompt_point(const ProfileSet& profiles, const GpuSpec& gpu, const ModelConfig& model,
                                     const RegionCI& region, int batch, int prompt_tokens, int output_tokens) {
  GpuInstance inst;
  inst.spec = gpu;
  inst.model = model;
  inst.region = RegionCI{region.region_code, region.avg_ci, {}};
  inst.max_batch = batch;
  MetricBundle m;
  try {
    const auto cost = estimate_batch_cost(inst, BatchDescriptor{batch, prompt_tokens, output_tokens, BatchScope::kBoth},
                                          0.0, profiles);
    const double share = 1.0 / batch;
    m.latency = cost.latency;
    m.energy = cost.energy * share;
    m.carbon = cost.carbon.scaled(share);
    m.embodied_fraction = m.carbon->embodied / m.carbon->total;
  } catch (const OomError& e) {
    m.gap = true;
    m.gap_reason = e.what();
  }
  return m;
}

// One series per (gpu, region), axis = batch size.
inline std::vector<SweepResult> region_compare(const ProfileSet& profiles, const std::vector<std::string>& gpu_ids,
                                               std::string_view model_id, const std::vector<int>& batches,
                                               const std::vector<RegionCI>& regions, const PromptShape& shape = {}) {
  require_strictly_increasing(batches, "region_compare");
  const auto& model = profiles.model(model_id);
  const int prompt_tokens = resolve_prompt_tokens(profiles, shape);
  std::vector<SweepResult> out;
  for (const auto& gid : gpu_ids) {
    const auto& gpu = profiles.gpu(gid);
    for (const auto& region : regions) {
      SweepResult r;
      r.axis = "batch_size";
      r.metadata = {gpu.id, model.id, "", region.region_code, gpu.lifetime, "per_prompt"};
      for (int b : batches) {
        r.values.push_back(b);
        r.points.push_back(per_prompt_point(profiles, gpu, model, region, b, prompt_tokens, shape.output_tokens));
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

// One series per region, axis = lifetime in years, metric = embodied fraction.
inline std::vector<SweepResult> lifetime_sweep(const GpuSpec& spec, double power_w, const std::vector<RegionCI>& regions,
                                               const std::vector<double>& lifetimes) {
  require_strictly_increasing(lifetimes, "lifetime_sweep");
  for (double lt : lifetimes) {
    if (!(lt > 0)) throw ValidationError("lifetime_sweep: lifetimes must be > 0");
  }
  std::vector<SweepResult> out;
  for (const auto& region : regions) {
    SweepResult r;
    r.axis = "lifetime_years";
    r.metadata = {spec.id, "", "", region.region_code, std::nullopt, ""};
    for (double lt : lifetimes) {
      GpuSpec s = spec;
      s.lifetime = lt;
      MetricBundle m;
      m.avg_power = power_w;
      m.embodied_fraction = embodied_fraction(power_w, s, region.avg_ci);
      r.values.push_back(lt);
      r.points.push_back(std::move(m));
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace detail {

// (batch, carbon_a, carbon_b) on the shared measured grid, OOM points skipped.
inline std::vector<std::tuple<int, double, double>> paired_carbon(const ProfileSet& profiles, std::string_view gpu_a,
                                                                  std::string_view gpu_b, std::string_view model,
                                                                  Phase phase, const RegionCI& region) {
  const auto& a = profiles.gpu(gpu_a);
  const auto& b = profiles.gpu(gpu_b);
  auto sa = profiles.series(a.id, model, phase);
  auto sb = profiles.series(b.id, model, phase);
  if (sa.empty() || sb.empty()) throw OutOfRangeError("find_crossover: both GPUs must be profiled for the model/phase");
  std::vector<std::tuple<int, double, double>> out;
  for (const auto& pa : sa) {
    if (pa.oom) continue;
    for (const auto& pb : sb) {
      if (pb.batch_size != pa.batch_size || pb.oom) continue;
      out.emplace_back(pa.batch_size, per_token_carbon(pa, a, region.avg_ci).total,
                       per_token_carbon(pb, b, region.avg_ci).total);
    }
  }
  return out;
}

}  // namespace detail

// Smallest measured batch where gpu_b's per-token total carbon is strictly
// below gpu_a's.
inline std::optional<int> find_crossover(const ProfileSet& profiles, std::string_view gpu_a, std::string_view gpu_b,
                                         std::string_view model, Phase phase, const RegionCI& region) {
  for (const auto& [batch, ca, cb] : detail::paired_carbon(profiles, gpu_a, gpu_b, model, phase, region)) {
    if (cb < ca) return batch;
  }
  return std::nullopt;
}

// Smallest measured batch where the lower-carbon GPU differs from the one that
// wins at the smallest shared batch, regardless of argument order.
inline std::optional<int> preference_switch(const ProfileSet& profiles, std::string_view gpu_a, std::string_view gpu_b,
                                            std::string_view model, Phase phase, const RegionCI& region) {
  const auto pairs = detail::paired_carbon(profiles, gpu_a, gpu_b, model, phase, region);
  if (pairs.empty()) return std::nullopt;
  auto winner = [](double ca, double cb) { return cb < ca ? 1 : (ca < cb ? 0 : -1); };
  const int first = winner(std::get<1>(pairs.front()), std::get<2>(pairs.front()));
  for (const auto& [batch, ca, cb] : pairs) {
    const int w = winner(ca, cb);
    if (w != -1 && w != first) return batch;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::vector<std::pair<std::string, double>> metric_rows(const MetricBundle& m) {
  std::vector<std::pair<std::string, double>> rows;
  if (m.gap) {
    rows.emplace_back("oom", 1.0);
    return rows;
  }
  if (m.latency) rows.emplace_back("latency_s", *m.latency);
  if (m.energy) rows.emplace_back("energy_j", *m.energy);
  if (m.per_token_energy) rows.emplace_back("per_token_energy_j", *m.per_token_energy);
  if (m.throughput) rows.emplace_back("throughput_tokens_per_s", *m.throughput);
  if (m.avg_power) rows.emplace_back("avg_power_w", *m.avg_power);
  if (m.carbon) {
    rows.emplace_back("operational_carbon_g", m.carbon->operational);
    rows.emplace_back("embodied_carbon_g", m.carbon->embodied);
    rows.emplace_back("total_carbon_g", m.carbon->total);
  }
  if (m.embodied_fraction) rows.emplace_back("embodied_fraction", *m.embodied_fraction);
  return rows;
}

inline nlohmann::json to_json(const SweepResult& r) {
  nlohmann::json meta{{"gpu", r.metadata.gpu},
                      {"model", r.metadata.model},
                      {"phase", r.metadata.phase},
                      {"region", r.metadata.region},
                      {"carbon_unit", r.metadata.carbon_unit}};
  meta["lifetime_years"] = r.metadata.lifetime ? nlohmann::json(*r.metadata.lifetime) : nlohmann::json(nullptr);
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    nlohmann::json p{{"value", r.values[i]}, {"gap", r.points[i].gap}};
    if (r.points[i].gap) p["gap_reason"] = r.points[i].gap_reason;
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& [k, v] : metric_rows(r.points[i])) {
      if (k != "oom") metrics[k] = v;
    }
    p["metrics"] = metrics;
    points.push_back(p);
  }
  return {{"schema", "carbonsim.sweep"}, {"schema_version", 1}, {"axis", r.axis}, {"metadata", meta}, {"points", points}};
}

inline nlohmann::json to_json(const std::vector<SweepResult>& rs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rs) j.push_back(to_json(r));
  return j;
}

// Long format: axis,value,metric,quantity
inline std::string to_long_csv(const SweepResult& r) {
  std::ostringstream out;
  out << "axis,value,metric,quantity\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    for (const auto& [k, v] : metric_rows(r.points[i])) {
      out << r.axis << ',' << detail::fmt_double(r.values[i]) << ',' << k << ',' << detail::fmt_double(v) << '\n';
    }
  }
  return out.str();
}

// Several series in one file: a leading series column names each one.
inline std::string to_long_csv(const std::vector<SweepResult>& rs) {
  std::ostringstream out;
  out << "series,axis,value,metric,quantity\n";
  for (const auto& r : rs) {
    const auto label = r.label();
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      for (const auto& [k, v] : metric_rows(r.points[i])) {
        out << label << ',' << r.axis << ',' << detail::fmt_double(r.values[i]) << ',' << k << ','
            << detail::fmt_double(v) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace carbonsim
