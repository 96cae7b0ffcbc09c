#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carbonsim/carbon.hpp"
#include "carbonsim/error.hpp"
#include "carbonsim/fleet.hpp"
#include "carbonsim/profiles.hpp"
#include "carbonsim/sched.hpp"
#include "carbonsim/sim.hpp"

// Scenario files: one JSON document holding everything that affects results.
// Only file paths may be overridden from the environment
// (CARBONSIM_PROFILES, CARBONSIM_REGIONS, CARBONSIM_ACT_PARAMS, CARBONSIM_OUT).
namespace carbonsim {

struct FleetEntry {
  int id = 0;
  std::string gpu;
  std::string model;
  std::string region;
  int max_batch = 1;
  InstanceRole role = InstanceRole::kUnified;
};

struct CarbonSettings {
  std::map<std::string, double> lifetime_overrides;  // gpu id -> years
  std::optional<std::string> act_params_path;
};

struct Scenario {
  std::string profiles_path;
  std::string regions_path;
  std::vector<FleetEntry> fleet;
  WorkloadSpec workload;
  SchedulingPolicy policy;
  SimOptions options;
  CarbonSettings carbon;
  std::string output_dir;
  std::uint64_t seed = 0;
  double ci_time_origin = 0.0;  // epoch seconds at simulation time 0
};

namespace detail {

inline std::string resolve_path(const std::string& raw, const std::filesystem::path& base) {
  std::filesystem::path p(raw);
  if (p.is_relative()) p = base / p;
  return p.lexically_normal().string();
}

inline std::optional<std::string> env_path(const char* name) {
  if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

inline LengthDistribution length_from_json(const nlohmann::json& j, const std::string& where) {
  if (j.is_number_integer()) return LengthDistribution::fixed(j.get<int>());
  if (j.is_object() && j.contains("fixed")) return LengthDistribution::fixed(require<int>(j, "fixed", where));
  if (j.is_object() && j.contains("empirical")) {
    return LengthDistribution{require<std::vector<int>>(j, "empirical", where)};
  }
  throw ParseError(where + ": expected an integer, {\"fixed\": n} or {\"empirical\": [...]}");
}

}  // namespace detail

inline std::vector<Request> parse_trace_csv(std::string_view content, const std::string& source = "<trace>") {
  const auto table = text::parse_csv(content, source);
  const auto c_t = table.column("arrival_time");
  const auto c_p = table.column("prompt_tokens");
  const auto c_o = table.column("output_tokens");
  std::vector<Request> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = source + ":" + std::to_string(table.line_of_row(r));
    Request req;
    req.id = static_cast<int>(r);
    req.arrival_time = text::parse_double(table.rows[r][c_t], where + " arrival_time");
    req.prompt_tokens = static_cast<int>(text::parse_int(table.rows[r][c_p], where + " prompt_tokens"));
    req.output_tokens = static_cast<int>(text::parse_int(table.rows[r][c_o], where + " output_tokens"));
    try {
      validate(req);
    } catch (const ValidationError& e) {
      throw ValidationError(where + ": " + e.what());
    }
    out.push_back(req);
  }
  return out;
}

inline Scenario parse_scenario(std::string_view content, const std::filesystem::path& base_dir,
                               const std::string& source = "<scenario>") {
  using detail::optional_field;
  using detail::require;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(source + ": top level must be an object");

  Scenario s;
  s.profiles_path = detail::env_path("CARBONSIM_PROFILES")
                        .value_or(detail::resolve_path(require<std::string>(doc, "profiles", source), base_dir));
  s.regions_path = detail::env_path("CARBONSIM_REGIONS")
                       .value_or(detail::resolve_path(require<std::string>(doc, "regions", source), base_dir));
  s.output_dir = detail::env_path("CARBONSIM_OUT")
                     .value_or(detail::resolve_path(optional_field<std::string>(doc, "output_dir", source).value_or("out"),
                                                    base_dir));
  s.seed = optional_field<std::uint64_t>(doc, "seed", source).value_or(0);
  s.workload.seed = s.seed;

  if (!doc.contains("fleet") || !doc["fleet"].is_array()) throw ParseError(source + ": missing array 'fleet'");
  for (const auto& f : doc["fleet"]) {
    FleetEntry e;
    const std::string where = source + ": fleet entry";
    e.id = require<int>(f, "id", where);
    e.gpu = require<std::string>(f, "gpu", where);
    e.model = require<std::string>(f, "model", where);
    e.region = require<std::string>(f, "region", where);
    e.max_batch = require<int>(f, "max_batch", where);
    e.role = parse_instance_role(optional_field<std::string>(f, "role", where).value_or("unified"));
    s.fleet.push_back(std::move(e));
  }

  const auto& w = doc.contains("workload") ? doc["workload"] : throw ParseError(source + ": missing 'workload'");
  const std::string wsrc = source + ": workload";
  s.workload.mode = parse_workload_mode(require<std::string>(w, "mode", wsrc));
  s.workload.rate = optional_field<double>(w, "rate", wsrc).value_or(1.0);
  s.workload.concurrency = optional_field<int>(w, "concurrency", wsrc).value_or(1);
  s.workload.duration = optional_field<double>(w, "duration", wsrc).value_or(0.0);
  if (w.contains("prompt_tokens")) s.workload.prompt_tokens = detail::length_from_json(w["prompt_tokens"], wsrc + " prompt_tokens");
  if (w.contains("output_tokens")) s.workload.output_tokens = detail::length_from_json(w["output_tokens"], wsrc + " output_tokens");
  if (s.workload.mode == WorkloadMode::kTrace) {
    if (w.contains("requests")) {
      int next = 0;
      for (const auto& r : w["requests"]) {
        Request req;
        req.id = next++;
        req.arrival_time = require<double>(r, "arrival_time", wsrc);
        req.prompt_tokens = require<int>(r, "prompt_tokens", wsrc);
        req.output_tokens = optional_field<int>(r, "output_tokens", wsrc).value_or(kDefaultOutputTokens);
        s.workload.trace.push_back(req);
      }
    } else {
      const auto path = detail::resolve_path(require<std::string>(w, "trace", wsrc), base_dir);
      s.workload.trace = parse_trace_csv(text::read_file(path), path);
    }
  }

  if (doc.contains("policy")) {
    const auto& p = doc["policy"];
    const std::string psrc = source + ": policy";
    s.policy.kind = parse_policy_kind(require<std::string>(p, "kind", psrc));
    s.policy.target = optional_field<int>(p, "target", psrc);
    s.policy.ci_threshold = optional_field<double>(p, "ci_threshold", psrc).value_or(kDefaultCiThreshold);
    s.policy.preferred = optional_field<std::vector<int>>(p, "preferred", psrc).value_or(std::vector<int>{});
    s.policy.latency_slo = optional_field<double>(p, "latency_slo", psrc);
  }

  if (auto origin = optional_field<std::string>(doc, "ci_time_origin", source)) {
    s.ci_time_origin = parse_timestamp(*origin);
  }
  s.options.batch_wait = optional_field<double>(doc, "batch_wait", source).value_or(0.0);
  s.options.handoff_latency = optional_field<double>(doc, "handoff_latency", source).value_or(0.0);
  s.options.idle_power_fraction = optional_field<double>(doc, "idle_power_fraction", source).value_or(0.0);

  if (doc.contains("carbon")) {
    const auto& c = doc["carbon"];
    const std::string csrc = source + ": carbon";
    if (c.contains("lifetime_overrides")) {
      for (const auto& [gpu, years] : c["lifetime_overrides"].items()) s.carbon.lifetime_overrides[gpu] = years.get<double>();
    }
    if (auto act = detail::env_path("CARBONSIM_ACT_PARAMS")) {
      s.carbon.act_params_path = *act;
    } else if (auto act_path = optional_field<std::string>(c, "act_params", csrc)) {
      s.carbon.act_params_path = detail::resolve_path(*act_path, base_dir);
    }
  }

  validate(s.policy);
  validate(s.workload);
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(text::read_file(path), std::filesystem::path(path).parent_path(), path);
}

// Resolves fleet entries against loaded data: lifetime overrides applied,
// missing embodied totals estimated with ACT parameters.
inline std::vector<GpuInstance> build_fleet(const Scenario& s, const ProfileSet& profiles, const RegionRegistry& regions,
                                            const std::optional<ActParams>& act) {
  std::vector<GpuInstance> fleet;
  for (const auto& e : s.fleet) {
    GpuInstance inst;
    inst.instance_id = e.id;
    inst.spec = profiles.gpu(e.gpu);
    for (const auto& [gpu, years] : s.carbon.lifetime_overrides) {
      if (text::iequals(gpu, inst.spec.id)) inst.spec.lifetime = years;
    }
    if (!inst.spec.embodied_carbon) {
      if (!act) {
        throw ValidationError("gpu '" + inst.spec.id + "' has no embodied_carbon and the scenario sets no act_params");
      }
      inst.spec = with_estimated_embodied(inst.spec, *act);
    }
    validate(inst.spec);
    inst.model = profiles.model(e.model);
    inst.region = regions.at(e.region);
    for (auto& sample : inst.region.series) sample.timestamp -= s.ci_time_origin;
    inst.max_batch = e.max_batch;
    inst.role = e.role;
    fleet.push_back(std::move(inst));
  }
  return fleet;
}

}  // namespace carbonsim
