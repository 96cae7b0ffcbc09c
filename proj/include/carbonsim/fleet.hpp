#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "carbonsim/carbon.hpp"
#include "carbonsim/error.hpp"
#include "carbonsim/profiles.hpp"

namespace carbonsim {

// Which phases an instance executes. Disaggregated fleets split prefill and
// decode across instances; unified instances run both.
enum class InstanceRole { kUnified, kPrefill, kDecode };

inline std::string_view to_string(InstanceRole r) {
  switch (r) {
    case InstanceRole::kUnified: return "unified";
    case InstanceRole::kPrefill: return "prefill";
    case InstanceRole::kDecode: return "decode";
  }
  return "unified";
}

inline InstanceRole parse_instance_role(std::string_view s) {
  if (text::iequals(s, "unified")) return InstanceRole::kUnified;
  if (text::iequals(s, "prefill")) return InstanceRole::kPrefill;
  if (text::iequals(s, "decode")) return InstanceRole::kDecode;
  throw ParseError("unknown instance role '" + std::string(s) + "'");
}

struct GpuInstance {
  int instance_id = 0;
  GpuSpec spec;  // lifetime overrides and estimated embodied carbon already applied
  RegionCI region;
  ModelConfig model;
  int max_batch = 1;
  InstanceRole role = InstanceRole::kUnified;

  bool runs(Phase p) const {
    return role == InstanceRole::kUnified || (p == Phase::kPrefill ? role == InstanceRole::kPrefill
                                                                   : role == InstanceRole::kDecode);
  }
};

// Which phases a batch still needs.
enum class BatchScope { kBoth, kPrefillOnly, kDecodeOnly };

inline bool includes(BatchScope s, Phase p) {
  return s == BatchScope::kBoth || (p == Phase::kPrefill ? s == BatchScope::kPrefillOnly
                                                         : s == BatchScope::kDecodeOnly);
}

// A batch of `batch_size` requests with identical token counts.
struct BatchDescriptor {
  int batch_size = 1;
  int prompt_tokens = 0;
  int output_tokens = 0;
  BatchScope scope = BatchScope::kBoth;
};

inline void validate(const BatchDescriptor& b) {
  if (b.batch_size < 1) throw ValidationError("batch descriptor: batch_size must be >= 1");
  if (includes(b.scope, Phase::kPrefill) && b.prompt_tokens < 1) {
    throw ValidationError("batch descriptor: prompt_tokens must be >= 1");
  }
  if (includes(b.scope, Phase::kDecode) && b.output_tokens < 1) {
    throw ValidationError("batch descriptor: output_tokens must be >= 1");
  }
}

// Wall time for a batch phase where every slot processes `tokens` tokens at
// the aggregate batch throughput.
inline double phase_duration(const PhaseProfile& profile, int batch_size, int tokens) {
  return static_cast<double>(batch_size) * static_cast<double>(tokens) / profile.throughput;
}

struct PhaseCharge {
  double duration = 0.0;  // wall time of this request's phase, s
  double energy = 0.0;    // J
  CarbonBreakdown carbon;
};

// One request's share of a batch phase. Energy is charged on the request's own
// tokens; embodied carbon on its 1/batch share of the device time; CI is sampled
// at the phase midpoint unless `fixed_ci` is given.
//
// Both the simulator and the planner charge through this function.
inline PhaseCharge charge_request_phase(const GpuInstance& inst, const PhaseProfile& profile, int batch_size,
                                        int own_tokens, double duration, double start,
                                        std::optional<double> fixed_ci = std::nullopt) {
  PhaseCharge c;
  c.duration = duration;
  c.energy = static_cast<double>(own_tokens) * profile.per_token_energy;
  const double ci = fixed_ci ? *fixed_ci : ci_at(inst.region, start + duration / 2.0);
  c.carbon = CarbonBreakdown::of(operational_carbon(c.energy, ci),
                                 amortized_embodied(inst.spec, duration / static_cast<double>(batch_size)));
  return c;
}

}  // namespace carbonsim
