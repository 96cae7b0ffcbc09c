#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carbonsim/error.hpp"
#include "carbonsim/profiles.hpp"
#include "carbonsim/text.hpp"

namespace carbonsim {

inline constexpr double kJoulesPerKwh = 3.6e6;
// Julian year; lifetime conversions use this everywhere.
inline constexpr double kSecondsPerYear = 31'557'600.0;

struct CarbonBreakdown {
  double operational = 0.0;  // g CO2eq
  double embodied = 0.0;     // g CO2eq
  double total = 0.0;        // operational + embodied

  static CarbonBreakdown of(double operational, double embodied) {
    return {operational, embodied, operational + embodied};
  }
  CarbonBreakdown& operator+=(const CarbonBreakdown& o) {
    operational += o.operational;
    embodied += o.embodied;
    total = operational + embodied;
    return *this;
  }
  friend CarbonBreakdown operator+(CarbonBreakdown a, const CarbonBreakdown& b) { return a += b; }
  CarbonBreakdown scaled(double f) const { return of(operational * f, embodied * f); }
  bool operator==(const CarbonBreakdown&) const = default;
};

// Operational carbon of `energy_j` joules at grid intensity `ci` g/kWh.
inline double operational_carbon(double energy_j, double ci) {
  if (energy_j < 0) throw ValidationError("operational_carbon: negative energy");
  if (!(ci > 0)) throw ValidationError("operational_carbon: carbon intensity must be > 0");
  return energy_j / kJoulesPerKwh * ci;
}

inline double lifetime_seconds(const GpuSpec& spec) { return spec.lifetime * kSecondsPerYear; }

inline double require_embodied(const GpuSpec& spec) {
  if (!spec.embodied_carbon) {
    throw ValidationError("gpu '" + spec.id +
                          "' has no embodied_carbon; estimate it with estimate_embodied_act first");
  }
  if (!(spec.lifetime > 0)) throw ValidationError("gpu '" + spec.id + "': lifetime must be > 0");
  return *spec.embodied_carbon;
}

// Embodied carbon per second of device occupancy, g/s.
inline double embodied_rate(const GpuSpec& spec) {
  return require_embodied(spec) / lifetime_seconds(spec);
}

// Time-amortized embodied carbon. Written as total * (duration / lifetime) so
// that a full-lifetime duration returns the total bit-exactly.
inline double amortized_embodied(const GpuSpec& spec, double duration_s) {
  const double total = require_embodied(spec);
  if (duration_s < 0) throw ValidationError("amortized_embodied: negative duration");
  return total * (duration_s / lifetime_seconds(spec));
}

inline CarbonBreakdown total_carbon(double energy_j, double duration_s, const GpuSpec& spec, double ci) {
  return CarbonBreakdown::of(operational_carbon(energy_j, ci), amortized_embodied(spec, duration_s));
}

// Steady-state share of embodied carbon in the total for a device drawing
// `power_w` continuously. Independent of duration.
inline double embodied_fraction(double power_w, const GpuSpec& spec, double ci) {
  if (!(power_w > 0)) throw ValidationError("embodied_fraction: power must be > 0");
  if (!(ci > 0)) throw ValidationError("embodied_fraction: carbon intensity must be > 0");
  const double rate = embodied_rate(spec);
  return rate / (rate + power_w * ci / kJoulesPerKwh);
}

// Inverse of embodied_fraction in the power argument.
inline double power_for_embodied_fraction(double fraction, const GpuSpec& spec, double ci) {
  if (!(fraction > 0 && fraction < 1)) {
    throw ValidationError("power_for_embodied_fraction: fraction must be in (0, 1)");
  }
  if (!(ci > 0)) throw ValidationError("power_for_embodied_fraction: carbon intensity must be > 0");
  const double rate = embodied_rate(spec);
  return rate * (1.0 - fraction) / fraction / (ci / kJoulesPerKwh);
}

// ---------------------------------------------------------------------------
// ACT-style embodied estimate: chip area times a per-node factor plus memory.

struct ActParams {
  std::map<int, double> carbon_per_area;  // tech node nm -> g CO2eq / mm^2
  double carbon_per_memory = 0.0;         // g CO2eq / GB

  bool operator==(const ActParams&) const = default;
};

// Memory coefficient used when calibrating against published totals.
inline constexpr double kDefaultCarbonPerMemory = 150.0;

inline int node_key(double tech_node) { return static_cast<int>(std::lround(tech_node)); }

inline void validate(const ActParams& p) {
  if (!(p.carbon_per_memory > 0)) throw ValidationError("ActParams: carbon_per_memory must be > 0");
  for (const auto& [node, c] : p.carbon_per_area) {
    if (!(c > 0)) throw ValidationError("ActParams: carbon_per_area[" + std::to_string(node) + "] must be > 0");
  }
}

inline double estimate_embodied_act(const GpuSpec& spec, const ActParams& params) {
  if (spec.chip_area < 0 || spec.memory_capacity < 0) {
    throw ValidationError("estimate_embodied_act: negative area or memory for '" + spec.id + "'");
  }
  auto it = params.carbon_per_area.find(node_key(spec.tech_node));
  if (it == params.carbon_per_area.end()) {
    throw UnknownIdError("estimate_embodied_act: no area coefficient for " +
                         std::to_string(node_key(spec.tech_node)) + " nm node");
  }
  return spec.chip_area * it->second + spec.memory_capacity * params.carbon_per_memory;
}

// Returns `spec` with embodied_carbon filled from the ACT estimate if absent.
inline GpuSpec with_estimated_embodied(GpuSpec spec, const ActParams& params) {
  if (!spec.embodied_carbon) spec.embodied_carbon = estimate_embodied_act(spec, params);
  return spec;
}

struct EmbodiedTarget {
  GpuSpec spec;
  double embodied_g = 0.0;
};

// Fixes the memory coefficient and solves one area coefficient per node.
// Nodes with several targets get the least-squares fit; a single target per
// node is matched exactly.
inline ActParams calibrate_act(const std::vector<EmbodiedTarget>& targets, double carbon_per_memory) {
  if (targets.empty()) throw ValidationError("calibrate_act: no targets");
  if (!(carbon_per_memory > 0)) throw ValidationError("calibrate_act: memory coefficient must be > 0");
  std::map<int, std::pair<double, double>> normal;  // node -> (sum a*r, sum a*a)
  for (const auto& t : targets) {
    if (!(t.spec.chip_area > 0)) throw ValidationError("calibrate_act: '" + t.spec.id + "' needs chip_area > 0");
    if (!(t.embodied_g > 0)) throw ValidationError("calibrate_act: '" + t.spec.id + "' target must be > 0");
    const double residual = t.embodied_g - t.spec.memory_capacity * carbon_per_memory;
    auto& [ar, aa] = normal[node_key(t.spec.tech_node)];
    ar += t.spec.chip_area * residual;
    aa += t.spec.chip_area * t.spec.chip_area;
  }
  ActParams params;
  params.carbon_per_memory = carbon_per_memory;
  for (const auto& [node, sums] : normal) {
    const double coeff = sums.first / sums.second;
    if (!(coeff > 0)) {
      throw CalibrationError("calibration infeasible: memory coefficient " + std::to_string(carbon_per_memory) +
                             " g/GB leaves a non-positive area coefficient (" + std::to_string(coeff) +
                             " g/mm^2) for the " + std::to_string(node) + " nm node");
    }
    params.carbon_per_area[node] = coeff;
  }
  return params;
}

inline nlohmann::json to_json(const ActParams& p) {
  nlohmann::json area = nlohmann::json::object();
  for (const auto& [node, c] : p.carbon_per_area) area[std::to_string(node)] = c;
  return {{"carbon_per_area_g_per_mm2", area}, {"carbon_per_memory_g_per_gb", p.carbon_per_memory}};
}

inline ActParams parse_act_params(std::string_view content, const std::string& source = "<act>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  ActParams p;
  p.carbon_per_memory = detail::require<double>(doc, "carbon_per_memory_g_per_gb", source);
  if (!doc.contains("carbon_per_area_g_per_mm2") || !doc["carbon_per_area_g_per_mm2"].is_object()) {
    throw ParseError(source + ": missing object 'carbon_per_area_g_per_mm2'");
  }
  for (const auto& [node, c] : doc["carbon_per_area_g_per_mm2"].items()) {
    p.carbon_per_area[static_cast<int>(text::parse_int(node, source + " node key"))] = c.get<double>();
  }
  validate(p);
  return p;
}

inline ActParams load_act_params(const std::string& path) {
  return parse_act_params(text::read_file(path), path);
}

// ---------------------------------------------------------------------------
// Grid carbon intensity

struct CiSample {
  double timestamp = 0.0;  // seconds since epoch
  double ci = 0.0;         // g/kWh

  bool operator==(const CiSample&) const = default;
};

struct RegionCI {
  std::string region_code;
  double avg_ci = 0.0;
  std::vector<CiSample> series;

  bool operator==(const RegionCI&) const = default;
};

inline void validate(const RegionCI& r) {
  if (r.region_code.empty()) throw ValidationError("region with empty code");
  if (!(r.avg_ci > 0)) throw ValidationError("region '" + r.region_code + "': avg_ci must be > 0");
  for (std::size_t i = 0; i < r.series.size(); ++i) {
    if (!(r.series[i].ci > 0)) {
      throw ValidationError("region '" + r.region_code + "': series ci must be > 0 (sample " + std::to_string(i) + ")");
    }
    if (i > 0 && !(r.series[i].timestamp > r.series[i - 1].timestamp)) {
      throw ValidationError("region '" + r.region_code + "': series timestamps must be strictly increasing (sample " +
                            std::to_string(i) + ")");
    }
  }
}

// Left-continuous step function over the series; avg_ci when there is none.
inline double ci_at(const RegionCI& region, double time_s) {
  if (region.series.empty()) return region.avg_ci;
  auto it = std::upper_bound(region.series.begin(), region.series.end(), time_s,
                             [](double t, const CiSample& s) { return t < s.timestamp; });
  if (it == region.series.begin()) return it->ci;
  return std::prev(it)->ci;
}

namespace detail {

inline long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

}  // namespace detail

// Accepts integer/decimal epoch seconds or ISO-8601
// "YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM]".
inline double parse_timestamp(std::string_view raw) {
  const auto s = text::trim(raw);
  if (s.empty()) throw ParseError("empty timestamp");
  if (s.find('-', 1) == std::string_view::npos) return text::parse_double(s, "timestamp");

  auto bad = [&]() -> ParseError { return ParseError("invalid ISO-8601 timestamp '" + std::string(s) + "'"); };
  auto num = [&](std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) throw bad();
    for (std::size_t i = pos; i < pos + len; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(s[i]))) throw bad();
    }
    return static_cast<int>(text::parse_int(s.substr(pos, len), "timestamp"));
  };
  if (s.size() < 10 || s[4] != '-' || s[7] != '-') throw bad();
  const int year = num(0, 4), month = num(5, 2), day = num(8, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31) throw bad();
  double secs = 0.0;
  std::size_t pos = 10;
  if (pos < s.size() && (s[pos] == 'T' || s[pos] == ' ')) {
    const int hh = num(pos + 1, 2);
    if (pos + 3 >= s.size() || s[pos + 3] != ':') throw bad();
    const int mm = num(pos + 4, 2);
    pos += 6;
    double ss = 0.0;
    if (pos < s.size() && s[pos] == ':') {
      ss = num(pos + 1, 2);
      pos += 3;
      if (pos < s.size() && s[pos] == '.') {
        std::size_t end = pos + 1;
        while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
        ss += text::parse_double(s.substr(pos, end - pos), "timestamp fraction");
        pos = end;
      }
    }
    if (hh > 23 || mm > 59 || ss >= 61) throw bad();
    secs = hh * 3600.0 + mm * 60.0 + ss;
  }
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      // UTC
    } else if ((s[pos] == '+' || s[pos] == '-') && pos + 6 == s.size() && s[pos + 3] == ':') {
      const int sign = s[pos] == '+' ? 1 : -1;
      secs -= sign * (num(pos + 1, 2) * 3600.0 + num(pos + 4, 2) * 60.0);
    } else {
      throw bad();
    }
  }
  return static_cast<double>(detail::days_from_civil(year, month, day)) * 86400.0 + secs;
}

// CSV with header `timestamp,ci_g_per_kwh`.
inline std::vector<CiSample> parse_ci_series_csv(std::string_view content, const std::string& source = "<ci>") {
  const auto table = text::parse_csv(content, source);
  const auto c_ts = table.column("timestamp");
  const auto c_ci = table.column("ci_g_per_kwh");
  std::vector<CiSample> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string where = source + ":" + std::to_string(table.line_of_row(r));
    try {
      out.push_back({parse_timestamp(table.rows[r][c_ts]), text::parse_double(table.rows[r][c_ci], "ci")});
    } catch (const ParseError& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<CiSample> load_ci_series_csv(const std::string& path) {
  return parse_ci_series_csv(text::read_file(path), path);
}

// Region code -> RegionCI, codes matched case-insensitively.
class RegionRegistry {
 public:
  RegionRegistry() = default;
  explicit RegionRegistry(std::vector<RegionCI> regions) : regions_(std::move(regions)) {
    for (std::size_t i = 0; i < regions_.size(); ++i) {
      validate(regions_[i]);
      for (std::size_t j = 0; j < i; ++j) {
        if (text::iequals(regions_[i].region_code, regions_[j].region_code)) {
          throw ValidationError("duplicate region code '" + regions_[i].region_code + "'");
        }
      }
    }
  }

  const std::vector<RegionCI>& regions() const { return regions_; }

  const RegionCI* find(std::string_view code) const {
    for (const auto& r : regions_) {
      if (text::iequals(r.region_code, code)) return &r;
    }
    return nullptr;
  }
  const RegionCI& at(std::string_view code) const {
    if (const auto* r = find(code)) return *r;
    throw UnknownIdError("unknown region code '" + std::string(code) + "'");
  }

 private:
  std::vector<RegionCI> regions_;
};

// Average CIs for 2023: QC, CISO, PACE.
inline RegionRegistry default_regions() {
  return RegionRegistry({{"QC", 31.0, {}}, {"CISO", 262.0, {}}, {"PACE", 647.0, {}}});
}

// {"regions": [{"code": "QC", "avg_ci": 31, "series": "qc.csv"}]}; series
// paths are resolved relative to the registry file.
inline RegionRegistry parse_region_registry(std::string_view content, const std::filesystem::path& base_dir,
                                            const std::string& source = "<regions>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (!doc.contains("regions") || !doc["regions"].is_array()) {
    throw ParseError(source + ": missing top-level array 'regions'");
  }
  std::vector<RegionCI> regions;
  for (const auto& r : doc["regions"]) {
    RegionCI region;
    region.region_code = detail::require<std::string>(r, "code", source + ": region");
    const std::string where = source + ": region '" + region.region_code + "'";
    region.avg_ci = detail::require<double>(r, "avg_ci", where);
    if (auto path = detail::optional_field<std::string>(r, "series", where)) {
      std::filesystem::path p(*path);
      if (p.is_relative()) p = base_dir / p;
      region.series = load_ci_series_csv(p.string());
    }
    regions.push_back(std::move(region));
  }
  return RegionRegistry(std::move(regions));
}

inline RegionRegistry load_region_registry(const std::string& path) {
  return parse_region_registry(text::read_file(path), std::filesystem::path(path).parent_path(), path);
}

}  // namespace carbonsim
