#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "carbonsim/error.hpp"
#include "carbonsim/text.hpp"

namespace carbonsim {

enum class Phase { kPrefill, kDecode };

inline std::string_view to_string(Phase p) { return p == Phase::kPrefill ? "prefill" : "decode"; }

inline Phase parse_phase(std::string_view s) {
  if (text::iequals(s, "prefill")) return Phase::kPrefill;
  if (text::iequals(s, "decode")) return Phase::kDecode;
  throw ParseError("unknown phase '" + std::string(s) + "' (expected prefill or decode)");
}

// One row of the hardware table. Embodied carbon is optional because it can
// be estimated from area and memory instead.
struct GpuSpec {
  std::string id;
  std::string architecture;
  double chip_area = 0.0;        // mm^2
  double tech_node = 0.0;        // nm
  double memory_capacity = 0.0;  // GB
  double tdp = 0.0;              // W
  int release_year = 0;
  std::optional<double> embodied_carbon;  // g CO2eq
  double lifetime = 5.0;                  // years

  bool operator==(const GpuSpec&) const = default;
};

struct ModelConfig {
  std::string id;
  double param_count = 0.0;  // billions
  int bytes_per_param = 2;

  bool operator==(const ModelConfig&) const = default;
};

// Measured (gpu, model, batch, phase) operating point. Throughput is the
// aggregate token rate of the whole batch, so avg_power == energy * rate.
struct PhaseProfile {
  std::string gpu_id;
  std::string model_id;
  int batch_size = 1;
  Phase phase = Phase::kPrefill;
  bool oom = false;
  double throughput = 0.0;        // tokens/s
  double per_token_energy = 0.0;  // J/token
  double avg_power = 0.0;         // W

  bool operator==(const PhaseProfile&) const = default;
};

// Relative tolerance on avg_power vs per_token_energy * throughput.
inline constexpr double kPowerConsistencyTolerance = 0.01;

inline void validate(const GpuSpec& g) {
  auto fail = [&](const std::string& what) {
    throw ValidationError("gpu '" + g.id + "': " + what);
  };
  if (g.id.empty()) throw ValidationError("gpu with empty id");
  if (!(g.chip_area > 0)) fail("chip_area must be > 0");
  if (!(g.memory_capacity > 0)) fail("memory_capacity must be > 0");
  if (!(g.tdp > 0)) fail("tdp must be > 0");
  if (!(g.lifetime > 0)) fail("lifetime must be > 0");
  if (g.embodied_carbon && !(*g.embodied_carbon > 0)) fail("embodied_carbon must be > 0 when present");
}

inline void validate(const ModelConfig& m) {
  if (m.id.empty()) throw ValidationError("model with empty id");
  if (!(m.param_count > 0)) throw ValidationError("model '" + m.id + "': param_count must be > 0");
  if (m.bytes_per_param != 1 && m.bytes_per_param != 2 && m.bytes_per_param != 4) {
    throw ValidationError("model '" + m.id + "': bytes_per_param must be 1, 2 or 4");
  }
}

inline std::string describe(const PhaseProfile& p) {
  return "(" + p.gpu_id + ", " + p.model_id + ", batch " + std::to_string(p.batch_size) + ", " +
         std::string(to_string(p.phase)) + ")";
}

inline void validate(const PhaseProfile& p) {
  if (p.batch_size < 1) throw ValidationError("profile " + describe(p) + ": batch_size must be >= 1");
  if (p.oom) return;
  if (!(p.throughput > 0)) throw ValidationError("profile " + describe(p) + ": throughput must be > 0");
  if (!(p.per_token_energy > 0)) {
    throw ValidationError("profile " + describe(p) + ": per_token_energy must be > 0");
  }
  if (!(p.avg_power > 0)) throw ValidationError("profile " + describe(p) + ": avg_power must be > 0");
  const double implied = p.per_token_energy * p.throughput;
  if (std::abs(p.avg_power - implied) > kPowerConsistencyTolerance * p.avg_power) {
    throw ValidationError("profile " + describe(p) + ": power consistency violated, avg_power " +
                          std::to_string(p.avg_power) + " W vs per_token_energy*throughput " +
                          std::to_string(implied) + " W");
  }
}

// Immutable collection of hardware, models and phase profiles. Id lookups are
// case-insensitive so "t4" and "T4" resolve to the same GPU.
class ProfileSet {
 public:
  ProfileSet() = default;

  ProfileSet(std::vector<GpuSpec> gpus, std::vector<ModelConfig> models,
             std::vector<PhaseProfile> profiles, std::optional<int> canonical_prompt_tokens = {})
      : gpus_(std::move(gpus)),
        models_(std::move(models)),
        profiles_(std::move(profiles)),
        canonical_prompt_tokens_(canonical_prompt_tokens) {
    build_index();
  }

  const std::vector<GpuSpec>& gpus() const { return gpus_; }
  const std::vector<ModelConfig>& models() const { return models_; }
  const std::vector<PhaseProfile>& profiles() const { return profiles_; }
  std::optional<int> canonical_prompt_tokens() const { return canonical_prompt_tokens_; }

  const GpuSpec* find_gpu(std::string_view id) const {
    for (const auto& g : gpus_) {
      if (text::iequals(g.id, id)) return &g;
    }
    return nullptr;
  }
  const ModelConfig* find_model(std::string_view id) const {
    for (const auto& m : models_) {
      if (text::iequals(m.id, id)) return &m;
    }
    return nullptr;
  }
  const GpuSpec& gpu(std::string_view id) const {
    if (const auto* g = find_gpu(id)) return *g;
    throw UnknownIdError("unknown gpu '" + std::string(id) + "'");
  }
  const ModelConfig& model(std::string_view id) const {
    if (const auto* m = find_model(id)) return *m;
    throw UnknownIdError("unknown model '" + std::string(id) + "'");
  }

  // Entries for one (gpu, model, phase) series, ordered by batch size. Empty
  // when the series is not profiled.
  std::span<const PhaseProfile> series(std::string_view gpu_id, std::string_view model_id,
                                       Phase phase) const {
    auto it = index_.find(key(gpu(gpu_id).id, model(model_id).id, phase));
    if (it == index_.end()) return {};
    return it->second;
  }

  bool operator==(const ProfileSet& o) const {
    return gpus_ == o.gpus_ && models_ == o.models_ && profiles_ == o.profiles_ &&
           canonical_prompt_tokens_ == o.canonical_prompt_tokens_;
  }

 private:
  using Key = std::tuple<std::string, std::string, int>;
  static Key key(const std::string& g, const std::string& m, Phase p) {
    return {g, m, static_cast<int>(p)};
  }

  void build_index() {
    for (const auto& g : gpus_) validate(g);
    for (const auto& m : models_) validate(m);
    for (std::size_t i = 0; i < gpus_.size(); ++i) {
      for (std::size_t j = i + 1; j < gpus_.size(); ++j) {
        if (text::iequals(gpus_[i].id, gpus_[j].id)) {
          throw ValidationError("duplicate gpu id '" + gpus_[j].id + "'");
        }
      }
    }
    for (std::size_t i = 0; i < models_.size(); ++i) {
      for (std::size_t j = i + 1; j < models_.size(); ++j) {
        if (text::iequals(models_[i].id, models_[j].id)) {
          throw ValidationError("duplicate model id '" + models_[j].id + "'");
        }
      }
    }
    if (canonical_prompt_tokens_ && *canonical_prompt_tokens_ < 1) {
      throw ValidationError("canonical_prompt_tokens must be >= 1");
    }
    std::map<Key, std::vector<PhaseProfile>> index;
    for (const auto& p : profiles_) {
      validate(p);
      const auto* g = find_gpu(p.gpu_id);
      const auto* m = find_model(p.model_id);
      if (!g) throw ValidationError("profile " + describe(p) + " references undeclared gpu");
      if (!m) throw ValidationError("profile " + describe(p) + " references undeclared model");
      index[key(g->id, m->id, p.phase)].push_back(p);
    }
    // Series must be listed in strictly increasing batch order; this also
    // rules out duplicate keys.
    for (const auto& [k, entries] : index) {
      for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].batch_size <= entries[i - 1].batch_size) {
          throw ValidationError("profile " + describe(entries[i]) +
                                ": batch sizes must be strictly increasing (duplicate or "
                                "out-of-order entry)");
        }
      }
    }
    index_ = std::move(index);
  }

  std::vector<GpuSpec> gpus_;
  std::vector<ModelConfig> models_;
  std::vector<PhaseProfile> profiles_;
  std::optional<int> canonical_prompt_tokens_;
  std::map<Key, std::vector<PhaseProfile>> index_;
};

// ---------------------------------------------------------------------------
// Interpolation and lookup

// Log-linear interpolation in batch size between two measured points. Power is
// recomputed so the consistency invariant holds by construction.
inline PhaseProfile interpolate_batch(const PhaseProfile& lo, const PhaseProfile& hi, int batch) {
  if (lo.oom || hi.oom) throw OomError("cannot interpolate across an OOM entry " + describe(lo.oom ? lo : hi));
  if (lo.gpu_id != hi.gpu_id || lo.model_id != hi.model_id || lo.phase != hi.phase) {
    throw ValidationError("interpolate_batch endpoints belong to different series");
  }
  if (batch == lo.batch_size) return lo;
  if (batch == hi.batch_size) return hi;
  if (!(lo.batch_size < batch && batch < hi.batch_size)) {
    throw OutOfRangeError("batch " + std::to_string(batch) + " not inside (" +
                          std::to_string(lo.batch_size) + ", " + std::to_string(hi.batch_size) + ")");
  }
  const double w = (std::log(static_cast<double>(batch)) - std::log(static_cast<double>(lo.batch_size))) /
                   (std::log(static_cast<double>(hi.batch_size)) - std::log(static_cast<double>(lo.batch_size)));
  auto loglerp = [w](double a, double b) { return std::exp(std::log(a) + w * (std::log(b) - std::log(a))); };

  PhaseProfile out = lo;
  out.batch_size = batch;
  out.throughput = loglerp(lo.throughput, hi.throughput);
  out.per_token_energy = loglerp(lo.per_token_energy, hi.per_token_energy);
  out.avg_power = out.per_token_energy * out.throughput;
  return out;
}

// Weights plus a KV-cache term that is linear in batch * context. The KV
// coefficient is bytes of cache per token per model parameter; ~7.5e-5
// matches a 7B fp16 decoder with 32 layers and 4096 hidden size.
inline constexpr double kDefaultKvBytesPerTokenPerParam = 7.5e-5;

inline double memory_footprint(const ModelConfig& model, int batch, int context_tokens,
                               double kv_bytes_per_token_per_param = kDefaultKvBytesPerTokenPerParam) {
  const double weights_gb = model.param_count * model.bytes_per_param;
  const double kv_gb = kv_bytes_per_token_per_param * model.param_count * static_cast<double>(batch) *
                       static_cast<double>(context_tokens);
  return weights_gb + kv_gb;
}

inline bool exceeds_capacity(const GpuSpec& gpu, double footprint_gb) {
  return footprint_gb > gpu.memory_capacity;
}

// Opt-in analytic OOM check for configurations with no profile coverage.
struct AnalyticOomCheck {
  int context_tokens = 0;
  double kv_bytes_per_token_per_param = kDefaultKvBytesPerTokenPerParam;
};

inline PhaseProfile lookup(const ProfileSet& set, std::string_view gpu_id, std::string_view model_id,
                           int batch, Phase phase,
                           const std::optional<AnalyticOomCheck>& analytic = std::nullopt) {
  const auto& gpu = set.gpu(gpu_id);
  const auto& model = set.model(model_id);
  const std::string what = "(" + gpu.id + ", " + model.id + ", batch " + std::to_string(batch) + ", " +
                           std::string(to_string(phase)) + ")";
  auto absent = [&](const std::string& msg) -> PhaseProfile {
    if (analytic && exceeds_capacity(gpu, memory_footprint(model, batch, analytic->context_tokens,
                                                           analytic->kv_bytes_per_token_per_param))) {
      throw OomError("out of memory " + what + ": analytic footprint exceeds " +
                     std::to_string(gpu.memory_capacity) + " GB");
    }
    throw OutOfRangeError(msg);
  };

  auto entries = set.series(gpu.id, model.id, phase);
  if (entries.empty()) return absent("no profile data for " + what);
  const int lo_batch = entries.front().batch_size;
  const int hi_batch = entries.back().batch_size;
  if (batch < lo_batch || batch > hi_batch) {
    return absent("batch out of measured range [" + std::to_string(lo_batch) + ", " +
                  std::to_string(hi_batch) + "] for " + what);
  }
  auto it = std::lower_bound(entries.begin(), entries.end(), batch,
                             [](const PhaseProfile& p, int b) { return p.batch_size < b; });
  if (it->batch_size == batch) {
    if (it->oom) throw OomError("out of memory " + what);
    return *it;
  }
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  if (lo.oom || hi.oom) {
    throw OomError("out of memory " + what + ": bracketing measurement at batch " +
                   std::to_string(lo.oom ? lo.batch_size : hi.batch_size) + " is OOM");
  }
  return interpolate_batch(lo, hi, batch);
}

// ---------------------------------------------------------------------------
// Serialization

namespace detail {

template <typename T>
T require(const nlohmann::json& j, const char* field, const std::string& where) {
  if (!j.contains(field)) throw ParseError(where + ": missing field '" + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": field '" + field + "': " + e.what());
  }
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* field, const std::string& where) {
  if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
  return require<T>(j, field, where);
}

}  // namespace detail

inline nlohmann::json to_json(const GpuSpec& g) {
  nlohmann::json j{{"id", g.id},
                   {"architecture", g.architecture},
                   {"chip_area", g.chip_area},
                   {"tech_node", g.tech_node},
                   {"memory_capacity", g.memory_capacity},
                   {"tdp", g.tdp},
                   {"release_year", g.release_year}};
  if (g.embodied_carbon) j["embodied_carbon"] = *g.embodied_carbon;
  j["lifetime"] = g.lifetime;
  return j;
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"id", m.id}, {"param_count", m.param_count}, {"bytes_per_param", m.bytes_per_param}};
}

inline nlohmann::json to_json(const PhaseProfile& p) {
  nlohmann::json j{{"gpu_id", p.gpu_id},
                   {"model_id", p.model_id},
                   {"batch_size", p.batch_size},
                   {"phase", to_string(p.phase)},
                   {"oom", p.oom}};
  if (!p.oom) {
    j["throughput"] = p.throughput;
    j["per_token_energy"] = p.per_token_energy;
    j["avg_power"] = p.avg_power;
  }
  return j;
}

inline GpuSpec gpu_from_json(const nlohmann::json& j, const std::string& where) {
  GpuSpec g;
  g.id = detail::require<std::string>(j, "id", where);
  const std::string w = where + " '" + g.id + "'";
  g.architecture = detail::optional_field<std::string>(j, "architecture", w).value_or("");
  g.chip_area = detail::require<double>(j, "chip_area", w);
  g.tech_node = detail::require<double>(j, "tech_node", w);
  g.memory_capacity = detail::require<double>(j, "memory_capacity", w);
  g.tdp = detail::require<double>(j, "tdp", w);
  g.release_year = detail::optional_field<int>(j, "release_year", w).value_or(0);
  g.embodied_carbon = detail::optional_field<double>(j, "embodied_carbon", w);
  g.lifetime = detail::optional_field<double>(j, "lifetime", w).value_or(5.0);
  return g;
}

inline ModelConfig model_from_json(const nlohmann::json& j, const std::string& where) {
  ModelConfig m;
  m.id = detail::require<std::string>(j, "id", where);
  const std::string w = where + " '" + m.id + "'";
  m.param_count = detail::require<double>(j, "param_count", w);
  m.bytes_per_param = detail::optional_field<int>(j, "bytes_per_param", w).value_or(2);
  return m;
}

inline PhaseProfile profile_from_json(const nlohmann::json& j, const std::string& where) {
  PhaseProfile p;
  p.gpu_id = detail::require<std::string>(j, "gpu_id", where);
  p.model_id = detail::require<std::string>(j, "model_id", where);
  p.batch_size = detail::require<int>(j, "batch_size", where);
  p.phase = parse_phase(detail::require<std::string>(j, "phase", where));
  p.oom = detail::optional_field<bool>(j, "oom", where).value_or(false);
  if (!p.oom) {
    p.throughput = detail::require<double>(j, "throughput", where);
    p.per_token_energy = detail::require<double>(j, "per_token_energy", where);
    p.avg_power = detail::require<double>(j, "avg_power", where);
  }
  return p;
}

inline nlohmann::json to_json(const ProfileSet& set) {
  nlohmann::json j;
  j["gpus"] = nlohmann::json::array();
  for (const auto& g : set.gpus()) j["gpus"].push_back(to_json(g));
  j["models"] = nlohmann::json::array();
  for (const auto& m : set.models()) j["models"].push_back(to_json(m));
  if (set.canonical_prompt_tokens()) j["canonical_prompt_tokens"] = *set.canonical_prompt_tokens();
  j["profiles"] = nlohmann::json::array();
  for (const auto& p : set.profiles()) j["profiles"].push_back(to_json(p));
  return j;
}

inline std::string serialize(const ProfileSet& set) { return to_json(set).dump(2) + "\n"; }

inline ProfileSet parse_profile_set(std::string_view content, const std::string& source = "<profiles>") {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(source + ": top level must be an object");
  for (const char* field : {"gpus", "models", "profiles"}) {
    if (!doc.contains(field) || !doc.at(field).is_array()) {
      throw ParseError(source + ": missing top-level array '" + field + "'");
    }
  }
  std::vector<GpuSpec> gpus;
  for (const auto& g : doc["gpus"]) gpus.push_back(gpu_from_json(g, source + ": gpu"));
  std::vector<ModelConfig> models;
  for (const auto& m : doc["models"]) models.push_back(model_from_json(m, source + ": model"));
  std::vector<PhaseProfile> profiles;
  for (std::size_t i = 0; i < doc["profiles"].size(); ++i) {
    profiles.push_back(profile_from_json(doc["profiles"][i], source + ": profiles[" + std::to_string(i) + "]"));
  }
  auto canonical = detail::optional_field<int>(doc, "canonical_prompt_tokens", source);
  try {
    return ProfileSet(std::move(gpus), std::move(models), std::move(profiles), canonical);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

inline ProfileSet load_profile_set(const std::string& path) {
  return parse_profile_set(text::read_file(path), path);
}

// CSV import: one PhaseProfile per row. Hardware and model declarations come
// from `base`; its profiles are replaced by the CSV rows.
// Columns: gpu_id,model_id,batch_size,phase,throughput,per_token_energy,avg_power[,oom]
inline ProfileSet import_profiles_csv(const ProfileSet& base, std::string_view content,
                                      const std::string& source = "<csv>") {
  const auto table = text::parse_csv(content, source);
  const auto c_gpu = table.column("gpu_id");
  const auto c_model = table.column("model_id");
  const auto c_batch = table.column("batch_size");
  const auto c_phase = table.column("phase");
  const auto c_thr = table.column("throughput");
  const auto c_energy = table.column("per_token_energy");
  const auto c_power = table.column("avg_power");
  const bool has_oom = table.has_column("oom");
  std::vector<PhaseProfile> profiles;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = source + ":" + std::to_string(table.line_of_row(r));
    PhaseProfile p;
    p.gpu_id = row[c_gpu];
    p.model_id = row[c_model];
    p.batch_size = static_cast<int>(text::parse_int(row[c_batch], where + " batch_size"));
    p.phase = parse_phase(row[c_phase]);
    if (has_oom) {
      const auto& v = row[table.column("oom")];
      p.oom = text::iequals(v, "true") || v == "1";
    }
    if (!p.oom) {
      p.throughput = text::parse_double(row[c_thr], where + " throughput");
      p.per_token_energy = text::parse_double(row[c_energy], where + " per_token_energy");
      p.avg_power = text::parse_double(row[c_power], where + " avg_power");
    }
    profiles.push_back(std::move(p));
  }
  try {
    return ProfileSet(base.gpus(), base.models(), std::move(profiles), base.canonical_prompt_tokens());
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
}

}  // namespace carbonsim
