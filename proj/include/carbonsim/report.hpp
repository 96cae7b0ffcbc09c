#pragma once

#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include <json.hpp>

#include "carbonsim/carbon.hpp"
#include "carbonsim/sim.hpp"

// JSON and CSV encodings of SimReport. Bump kReportSchemaVersion whenever a
// field is renamed or removed.
namespace carbonsim {

inline constexpr const char* kReportSchema = "carbonsim.sim_report";
inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const CarbonBreakdown& c) {
  return {{"operational_carbon_g", c.operational}, {"embodied_carbon_g", c.embodied}, {"total_carbon_g", c.total}};
}

inline nlohmann::json to_json(const RequestOutcome& o) {
  return {{"request_id", o.request_id},
          {"instance_id", o.instance_id},
          {"decode_instance_id", o.decode_instance_id},
          {"prefill_batch_size", o.prefill_batch_size},
          {"decode_batch_size", o.decode_batch_size},
          {"prompt_tokens", o.prompt_tokens},
          {"output_tokens", o.output_tokens},
          {"arrival_time_s", o.arrival_time},
          {"queue_delay_s", o.queue_delay},
          {"prefill_time_s", o.prefill_time},
          {"decode_time_s", o.decode_time},
          {"end_to_end_latency_s", o.end_to_end_latency},
          {"completion_time_s", o.completion_time},
          {"prefill_energy_j", o.prefill_energy},
          {"decode_energy_j", o.decode_energy},
          {"energy_j", o.energy},
          {"prefill_carbon", to_json(o.prefill_carbon)},
          {"decode_carbon", to_json(o.decode_carbon)},
          {"carbon", to_json(o.carbon)}};
}

inline nlohmann::json to_json(const InstanceStats& s) {
  return {{"instance_id", s.instance_id},
          {"batches", s.batches},
          {"busy_time_s", s.busy_time},
          {"utilization", s.utilization},
          {"busy_energy_j", s.busy_energy},
          {"padding_energy_j", s.padding_energy},
          {"idle_energy_j", s.idle_energy},
          {"idle_operational_carbon_g", s.idle_operational_carbon}};
}

inline nlohmann::json to_json(const SimAggregates& a) {
  return {{"completed_requests", a.completed},
          {"dropped_requests", a.dropped},
          {"mean_latency_s", a.mean_latency},
          {"median_latency_s", a.median_latency},
          {"p99_latency_s", a.p99_latency},
          {"total_energy_j", a.total_energy},
          {"mean_energy_j", a.mean_energy},
          {"median_energy_j", a.median_energy},
          {"carbon", to_json(a.carbon)},
          {"total_tokens", a.total_tokens},
          {"carbon_per_token_g", a.carbon_per_token},
          {"throughput_tokens_per_s", a.throughput},
          {"makespan_s", a.makespan},
          {"idle_energy_j", a.idle_energy},
          {"idle_operational_carbon_g", a.idle_operational_carbon}};
}

inline nlohmann::json to_json(const SimReport& r) {
  nlohmann::json j;
  j["schema"] = kReportSchema;
  j["schema_version"] = kReportSchemaVersion;
  j["aggregates"] = to_json(r.aggregates);
  j["instances"] = nlohmann::json::array();
  for (const auto& s : r.instances) j["instances"].push_back(to_json(s));
  j["dropped_request_ids"] = r.dropped_requests;
  j["outcomes"] = nlohmann::json::array();
  for (const auto& o : r.outcomes) j["outcomes"].push_back(to_json(o));
  return j;
}

namespace detail {
inline std::string fmt_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return ss.str();
}
}  // namespace detail

inline constexpr const char* kOutcomeCsvHeader =
    "request_id,instance_id,decode_instance_id,prefill_batch_size,decode_batch_size,prompt_tokens,output_tokens,"
    "arrival_time_s,queue_delay_s,prefill_time_s,decode_time_s,end_to_end_latency_s,completion_time_s,"
    "prefill_energy_j,decode_energy_j,energy_j,operational_carbon_g,embodied_carbon_g,total_carbon_g";

inline std::string to_csv(const SimReport& r) {
  std::ostringstream out;
  out << kOutcomeCsvHeader << '\n';
  using detail::fmt_double;
  for (const auto& o : r.outcomes) {
    out << o.request_id << ',' << o.instance_id << ',' << o.decode_instance_id << ',' << o.prefill_batch_size << ','
        << o.decode_batch_size << ',' << o.prompt_tokens << ',' << o.output_tokens << ',' << fmt_double(o.arrival_time)
        << ',' << fmt_double(o.queue_delay) << ',' << fmt_double(o.prefill_time) << ',' << fmt_double(o.decode_time)
        << ',' << fmt_double(o.end_to_end_latency) << ',' << fmt_double(o.completion_time) << ','
        << fmt_double(o.prefill_energy) << ',' << fmt_double(o.decode_energy) << ',' << fmt_double(o.energy) << ','
        << fmt_double(o.carbon.operational) << ',' << fmt_double(o.carbon.embodied) << ','
        << fmt_double(o.carbon.total) << '\n';
  }
  return out.str();
}

}  // namespace carbonsim
