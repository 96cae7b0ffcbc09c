// carbonsim command-line driver.
//
// Exit codes: 0 success, 1 model error (OOM, infeasible SLO, calibration),
// 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "carbonsim/carbonsim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace carbonsim;

#ifndef CARBONSIM_DATA_DIR
#define CARBONSIM_DATA_DIR "data"
#endif

namespace {

struct Globals {
  std::string profiles;
  std::string regions;
  std::string out = "out";
  bool json = false;
  std::optional<std::uint64_t> seed;
};

std::string default_path(const char* env, const char* file) {
  if (const char* v = std::getenv(env); v && *v) return v;
  return (fs::path(CARBONSIM_DATA_DIR) / file).string();
}

ProfileSet load_profiles(const Globals& g) { return load_profile_set(g.profiles); }

RegionRegistry load_regions(const Globals& g) {
  if (g.regions.empty()) return default_regions();
  return load_region_registry(g.regions);
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  f << content;
}

std::vector<double> parse_lifetimes(const std::string& spec) {
  std::vector<double> out;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    const double lo = text::parse_double(spec.substr(0, colon), "--lifetimes");
    const double hi = text::parse_double(spec.substr(colon + 1), "--lifetimes");
    if (hi < lo) throw ValidationError("--lifetimes: range end below start");
    for (double v = lo; v <= hi + 1e-9; v += 1.0) out.push_back(v);
    return out;
  }
  for (const auto& part : text::split(spec, ',')) out.push_back(text::parse_double(part, "--lifetimes"));
  return out;
}

std::vector<RegionCI> pick_regions(const RegionRegistry& reg, const std::vector<std::string>& codes) {
  std::vector<RegionCI> out;
  for (const auto& c : codes) out.push_back(reg.at(c));
  return out;
}

std::string g(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void print_sweep_table(const SweepResult& r, std::ostream& os) {
  os << "# " << r.label() << '\n';
  os << r.axis;
  for (const auto& [k, v] : metric_rows(r.points.front())) os << ',' << k;
  os << '\n';
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    os << g(r.values[i]);
    if (r.points[i].gap) {
      os << ",oom\n";
      continue;
    }
    for (const auto& [k, v] : metric_rows(r.points[i])) os << ',' << g(v);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string gpu, model, phase = "both", region;
  int batch = 1;
  int tokens = 0;
  std::optional<int> prompt_tokens;
  double time = 0.0;
};

int cmd_estimate(const Globals& gl, const EstimateArgs& a) {
  const auto profiles = load_profiles(gl);
  const auto regions = load_regions(gl);
  GpuInstance inst;
  inst.spec = profiles.gpu(a.gpu);
  inst.model = profiles.model(a.model);
  inst.region = regions.at(a.region);
  inst.max_batch = a.batch;

  BatchDescriptor batch;
  batch.batch_size = a.batch;
  const std::string phase = text::to_lower(a.phase);
  if (phase == "prefill") {
    batch.scope = BatchScope::kPrefillOnly;
    batch.prompt_tokens = a.tokens;
    batch.output_tokens = 1;
  } else if (phase == "decode") {
    batch.scope = BatchScope::kDecodeOnly;
    batch.prompt_tokens = 1;
    batch.output_tokens = a.tokens;
  } else if (phase == "both") {
    batch.scope = BatchScope::kBoth;
    batch.output_tokens = a.tokens;
    batch.prompt_tokens = resolve_prompt_tokens(profiles, PromptShape{a.prompt_tokens, a.tokens});
  } else {
    throw ParseError("--phase must be prefill, decode or both");
  }

  const auto cost = estimate_batch_cost(inst, batch, a.time, profiles);
  const double share = 1.0 / a.batch;
  if (gl.json) {
    json j{{"schema", "carbonsim.estimate"},
           {"schema_version", 1},
           {"gpu", inst.spec.id},
           {"model", inst.model.id},
           {"region", inst.region.region_code},
           {"phase", phase},
           {"batch_size", a.batch},
           {"prompt_tokens", batch.prompt_tokens},
           {"output_tokens", batch.output_tokens},
           {"start_time_s", a.time},
           {"latency_s", cost.latency},
           {"prefill_time_s", cost.prefill_time},
           {"decode_time_s", cost.decode_time},
           {"batch", {{"energy_j", cost.energy}, {"carbon", to_json(cost.carbon)}}},
           {"per_request", {{"energy_j", cost.energy * share}, {"carbon", to_json(cost.carbon.scaled(share))}}}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << inst.spec.id << " / " << inst.model.id << " @ " << inst.region.region_code << ", batch " << a.batch
            << ", " << phase << '\n'
            << "  latency_s             " << g(cost.latency) << " (prefill " << g(cost.prefill_time) << ", decode "
            << g(cost.decode_time) << ")\n"
            << "  energy_j              " << g(cost.energy) << " (per request " << g(cost.energy * share) << ")\n"
            << "  operational_carbon_g  " << g(cost.carbon.operational) << '\n'
            << "  embodied_carbon_g     " << g(cost.carbon.embodied) << '\n'
            << "  total_carbon_g        " << g(cost.carbon.total) << " (per request "
            << g(cost.carbon.total * share) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Globals& gl, const std::string& path, const std::vector<std::string>& explicit_flags) {
  auto scenario = load_scenario(path);
  auto is_set = [&](const std::string& f) {
    return std::find(explicit_flags.begin(), explicit_flags.end(), f) != explicit_flags.end();
  };
  if (is_set("profiles")) scenario.profiles_path = gl.profiles;
  if (is_set("regions")) scenario.regions_path = gl.regions;
  if (is_set("out")) scenario.output_dir = gl.out;
  if (gl.seed) {
    scenario.seed = *gl.seed;
    scenario.workload.seed = *gl.seed;
  }

  const auto profiles = load_profile_set(scenario.profiles_path);
  const auto regions = load_region_registry(scenario.regions_path);
  std::optional<ActParams> act;
  if (scenario.carbon.act_params_path) act = load_act_params(*scenario.carbon.act_params_path);
  const auto fleet = build_fleet(scenario, profiles, regions, act);
  const auto report = simulate_workload(fleet, scenario.workload, scenario.policy, profiles, scenario.options);

  const fs::path out(scenario.output_dir);
  write_file(out / "report.json", to_json(report).dump(2) + "\n");
  write_file(out / "report.csv", to_csv(report));

  const auto& a = report.aggregates;
  if (gl.json) {
    std::cout << to_json(a).dump(2) << '\n';
    return 0;
  }
  std::cout << "completed_requests        " << a.completed << '\n'
            << "dropped_requests          " << a.dropped << '\n'
            << "mean_latency_s            " << g(a.mean_latency) << '\n'
            << "p99_latency_s             " << g(a.p99_latency) << '\n'
            << "total_energy_j            " << g(a.total_energy) << '\n'
            << "operational_carbon_g      " << g(a.carbon.operational) << '\n'
            << "embodied_carbon_g         " << g(a.carbon.embodied) << '\n'
            << "total_carbon_g            " << g(a.carbon.total) << '\n'
            << "carbon_per_token_g        " << g(a.carbon_per_token) << '\n'
            << "throughput_tokens_per_s   " << g(a.throughput) << '\n'
            << "report                    " << (out / "report.json").string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string gpu, model, phase = "decode", region = "QC";
  std::string a, b;
  std::vector<std::string> gpus;
  std::vector<std::string> region_codes{"QC", "CISO", "PACE"};
  std::vector<int> batches;
  std::optional<int> prompt_tokens;
  int output_tokens = kDefaultOutputTokens;
  double power = 0.0;
  std::string lifetimes = "4:8";
};

int emit_sweeps(const Globals& gl, const std::vector<SweepResult>& rs, const std::string& name) {
  const fs::path out(gl.out);
  if (gl.json) {
    const auto doc = rs.size() == 1 ? to_json(rs.front()) : to_json(rs);
    write_file(out / (name + ".json"), doc.dump(2) + "\n");
    std::cout << doc.dump(2) << '\n';
    return 0;
  }
  write_file(out / (name + ".csv"), rs.size() == 1 ? to_long_csv(rs.front()) : to_long_csv(rs));
  for (const auto& r : rs) print_sweep_table(r, std::cout);
  std::cout << "wrote " << (out / (name + ".csv")).string() << '\n';
  return 0;
}

int cmd_sweep_batch(const Globals& gl, const SweepArgs& a) {
  const auto profiles = load_profiles(gl);
  const auto regions = load_regions(gl);
  const auto r = batch_sweep(profiles, a.gpu, a.model, parse_phase(a.phase), regions.at(a.region), a.batches);
  const int rc = emit_sweeps(gl, {r}, "sweep_batch");
  if (!gl.json) {
    std::optional<std::size_t> min_e, max_t;
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      if (r.points[i].gap) continue;
      if (!min_e || *r.points[i].per_token_energy < *r.points[*min_e].per_token_energy) min_e = i;
      if (!max_t || *r.points[i].throughput > *r.points[*max_t].throughput) max_t = i;
    }
    if (min_e) std::cout << "min_per_token_energy_batch " << r.values[*min_e] << '\n';
    if (max_t) std::cout << "max_throughput_batch       " << r.values[*max_t] << '\n';
  }
  return rc;
}

int cmd_sweep_lifetime(const Globals& gl, const SweepArgs& a) {
  const auto profiles = load_profiles(gl);
  const auto regions = load_regions(gl);
  if (!(a.power > 0)) throw ValidationError("--power must be > 0");
  const auto rs =
      lifetime_sweep(profiles.gpu(a.gpu), a.power, pick_regions(regions, a.region_codes), parse_lifetimes(a.lifetimes));
  return emit_sweeps(gl, rs, "sweep_lifetime");
}

int cmd_sweep_region(const Globals& gl, const SweepArgs& a) {
  const auto profiles = load_profiles(gl);
  const auto regions = load_regions(gl);
  std::vector<std::string> gpus = a.gpus;
  if (gpus.empty()) {
    for (const auto& gpu : profiles.gpus()) gpus.push_back(gpu.id);
  }
  std::vector<int> batches = a.batches;
  if (batches.empty()) batches = measured_batches(profiles, gpus.front(), a.model, Phase::kDecode);
  const auto rs = region_compare(profiles, gpus, a.model, batches, pick_regions(regions, a.region_codes),
                                 PromptShape{a.prompt_tokens, a.output_tokens});
  return emit_sweeps(gl, rs, "sweep_region");
}

int cmd_sweep_crossover(const Globals& gl, const SweepArgs& a) {
  const auto profiles = load_profiles(gl);
  const auto regions = load_regions(gl);
  const auto& region = regions.at(a.region);
  const auto phase = parse_phase(a.phase);
  const auto& ga = profiles.gpu(a.a);
  const auto& gb = profiles.gpu(a.b);
  const auto cross = find_crossover(profiles, ga.id, gb.id, a.model, phase, region);
  const auto pswitch = preference_switch(profiles, ga.id, gb.id, a.model, phase, region);
  const auto pairs = detail::paired_carbon(profiles, ga.id, gb.id, a.model, phase, region);

  std::ostringstream csv;
  csv << "batch_size,total_carbon_g_per_token_a,total_carbon_g_per_token_b\n";
  for (const auto& [batch, ca, cb] : pairs) {
    csv << batch << ',' << detail::fmt_double(ca) << ',' << detail::fmt_double(cb) << '\n';
  }
  const fs::path out(gl.out);
  write_file(out / "sweep_crossover.csv", csv.str());

  auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
  if (gl.json) {
    json j{{"schema", "carbonsim.crossover"},
           {"schema_version", 1},
           {"gpu_a", ga.id},
           {"gpu_b", gb.id},
           {"model", profiles.model(a.model).id},
           {"phase", std::string(to_string(phase))},
           {"region", region.region_code},
           {"crossover_batch", opt(pswitch)},
           {"first_batch_b_below_a", opt(cross)}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  std::cout << "batch_size,carbon_g_per_token_" << ga.id << ",carbon_g_per_token_" << gb.id << '\n';
  for (const auto& [batch, ca, cb] : pairs) std::cout << batch << ',' << g(ca) << ',' << g(cb) << '\n';
  // The reported crossover is where the lower-carbon GPU changes, whichever
  // argument order was used.
  std::cout << "crossover_batch        " << (pswitch ? std::to_string(*pswitch) : "none") << '\n'
            << "first_batch_b_below_a  " << (cross ? std::to_string(*cross) : "none") << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_calibrate(const Globals& gl, double memory_coefficient, const std::vector<std::string>& target_flags,
                  const std::string& output) {
  const auto profiles = load_profiles(gl);
  std::vector<EmbodiedTarget> targets;
  if (target_flags.empty()) {
    for (const auto& gpu : profiles.gpus()) {
      if (gpu.embodied_carbon) targets.push_back({gpu, *gpu.embodied_carbon});
    }
    if (targets.empty()) throw ValidationError("no --target given and no gpu in the profile set has embodied_carbon");
  } else {
    for (const auto& t : target_flags) {
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ParseError("--target expects GPU=grams, got '" + t + "'");
      targets.push_back({profiles.gpu(text::trim(t.substr(0, eq))),
                         text::parse_double(text::trim(t.substr(eq + 1)), "--target " + t)});
    }
  }
  const auto params = calibrate_act(targets, memory_coefficient);
  const fs::path path = output.empty() ? fs::path(gl.out) / "act_params.json" : fs::path(output);
  write_file(path, to_json(params).dump(2) + "\n");

  // Round trip through the written file.
  const auto reloaded = load_act_params(path.string());
  json checks = json::array();
  for (const auto& t : targets) {
    const double est = estimate_embodied_act(t.spec, reloaded);
    checks.push_back({{"gpu", t.spec.id},
                      {"target_g", t.embodied_g},
                      {"estimate_g", est},
                      {"relative_error", (est - t.embodied_g) / t.embodied_g}});
  }
  if (gl.json) {
    std::cout << json{{"schema", "carbonsim.calibration"}, {"schema_version", 1}, {"act_params", to_json(params)},
                      {"output", path.string()}, {"round_trip", checks}}
                     .dump(2)
              << '\n';
    return 0;
  }
  for (const auto& c : checks) {
    std::cout << c["gpu"].get<std::string>() << ": target " << g(c["target_g"].get<double>()) << " g, estimate "
              << g(c["estimate_g"].get<double>()) << " g, error " << g(100.0 * c["relative_error"].get<double>())
              << "%\n";
  }
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_validate_profiles(const Globals& gl, const std::vector<std::string>& files,
                          const std::vector<std::string>& csv_imports) {
  std::vector<std::string> paths = files;
  if (paths.empty()) paths.push_back(gl.profiles);
  json results = json::array();
  for (const auto& p : paths) {
    auto set = load_profile_set(p);
    for (const auto& csv : csv_imports) set = import_profiles_csv(set, text::read_file(csv), csv);
    const bool round_trip = parse_profile_set(serialize(set), p) == set;
    if (!round_trip) throw ValidationError(p + ": serialize/parse round trip differs");
    std::size_t oom = 0;
    for (const auto& e : set.profiles()) oom += e.oom ? 1 : 0;
    results.push_back({{"path", p},
                       {"gpus", set.gpus().size()},
                       {"models", set.models().size()},
                       {"profiles", set.profiles().size()},
                       {"oom_entries", oom},
                       {"round_trip", round_trip}});
  }
  if (gl.json) {
    std::cout << json{{"schema", "carbonsim.profile_validation"}, {"schema_version", 1}, {"files", results}}.dump(2)
              << '\n';
    return 0;
  }
  for (const auto& r : results) {
    std::cout << r["path"].get<std::string>() << ": ok (" << r["gpus"] << " gpus, " << r["models"] << " models, "
              << r["profiles"] << " profiles, " << r["oom_entries"] << " oom)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"carbonsim: carbon accounting and fleet simulation for LLM inference"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals gl;
  gl.profiles = default_path("CARBONSIM_PROFILES", "paper_profiles.json");
  gl.regions = default_path("CARBONSIM_REGIONS", "regions.json");
  if (const char* v = std::getenv("CARBONSIM_OUT"); v && *v) gl.out = v;
  std::uint64_t seed = 0;
  app.add_option("--profiles", gl.profiles, "profile set JSON");
  app.add_option("--regions", gl.regions, "region registry JSON");
  app.add_option("--out", gl.out, "output directory");
  app.add_flag("--json", gl.json, "machine-readable output");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (overrides the scenario)");

  // estimate
  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "closed-form batch cost");
  c_est->add_option("--gpu", est.gpu)->required();
  c_est->add_option("--model", est.model)->required();
  c_est->add_option("--batch", est.batch)->check(CLI::PositiveNumber);
  c_est->add_option("--phase", est.phase)->check(CLI::IsMember({"prefill", "decode", "both"}, CLI::ignore_case));
  c_est->add_option("--region", est.region)->required();
  c_est->add_option("--tokens", est.tokens, "tokens per request in the phase (output tokens for 'both')")
      ->required()
      ->check(CLI::PositiveNumber);
  c_est->add_option("--prompt-tokens", est.prompt_tokens)->check(CLI::PositiveNumber);
  c_est->add_option("--time", est.time, "start time on the region's CI series, s")->check(CLI::NonNegativeNumber);

  // simulate
  std::string scenario_path;
  auto* c_sim = app.add_subcommand("simulate", "run a scenario file");
  c_sim->add_option("scenario", scenario_path)->required()->check(CLI::ExistingFile);

  // sweep
  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "parameter sweeps");
  c_sweep->require_subcommand(1);
  auto* s_batch = c_sweep->add_subcommand("batch", "per-token metrics over batch size");
  s_batch->add_option("--gpu", sw.gpu)->required();
  s_batch->add_option("--model", sw.model)->required();
  s_batch->add_option("--phase", sw.phase);
  s_batch->add_option("--region", sw.region);
  s_batch->add_option("--batches", sw.batches)->delimiter(',');

  auto* s_life = c_sweep->add_subcommand("lifetime", "embodied fraction over device lifetime");
  s_life->add_option("--gpu", sw.gpu)->required();
  s_life->add_option("--power", sw.power, "average power, W")->required();
  s_life->add_option("--lifetimes", sw.lifetimes, "lo:hi in whole years, or a comma list");
  s_life->add_option("--regions", sw.region_codes, "region codes")->delimiter(',');

  auto* s_region = c_sweep->add_subcommand("region", "per-prompt carbon by gpu and region");
  s_region->add_option("--gpus", sw.gpus)->delimiter(',');
  s_region->add_option("--model", sw.model)->required();
  s_region->add_option("--batches", sw.batches)->delimiter(',');
  s_region->add_option("--regions", sw.region_codes, "region codes")->delimiter(',');
  s_region->add_option("--prompt-tokens", sw.prompt_tokens)->check(CLI::PositiveNumber);
  s_region->add_option("--output-tokens", sw.output_tokens)->check(CLI::PositiveNumber);

  auto* s_cross = c_sweep->add_subcommand("crossover", "batch where gpu b becomes lower-carbon than gpu a");
  s_cross->add_option("--a", sw.a)->required();
  s_cross->add_option("--b", sw.b)->required();
  s_cross->add_option("--model", sw.model)->required();
  s_cross->add_option("--phase", sw.phase);
  s_cross->add_option("--region", sw.region);

  // calibrate-embodied
  double mem_coeff = kDefaultCarbonPerMemory;
  std::vector<std::string> targets;
  std::string act_output;
  auto* c_cal = app.add_subcommand("calibrate-embodied", "fit area coefficients to embodied totals");
  c_cal->add_option("--memory-coefficient", mem_coeff, "g per GB of memory");
  c_cal->add_option("--target", targets, "GPU=grams; defaults to the profile set's embodied totals");
  c_cal->add_option("--output", act_output, "ActParams path (default <out>/act_params.json)");

  // validate-profiles
  std::vector<std::string> profile_files, csv_imports;
  auto* c_val = app.add_subcommand("validate-profiles", "check profile sets and round-trip them");
  c_val->add_option("files", profile_files);
  c_val->add_option("--import-csv", csv_imports, "import measurement CSVs (rows replace the profile list) before validating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (*seed_opt) gl.seed = seed;

  try {
    if (*c_est) return cmd_estimate(gl, est);
    if (*c_sim) {
      std::vector<std::string> flags;
      for (const char* f : {"profiles", "regions", "out"}) {
        if (app.count("--" + std::string(f)) > 0) flags.emplace_back(f);
      }
      return cmd_simulate(gl, scenario_path, flags);
    }
    if (*s_batch) return cmd_sweep_batch(gl, sw);
    if (*s_life) return cmd_sweep_lifetime(gl, sw);
    if (*s_region) return cmd_sweep_region(gl, sw);
    if (*s_cross) return cmd_sweep_crossover(gl, sw);
    if (*c_cal) return cmd_calibrate(gl, mem_coeff, targets, act_output);
    if (*c_val) return cmd_validate_profiles(gl, profile_files, csv_imports);
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
