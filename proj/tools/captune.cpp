/*
   Copyright 2026 captune contributors.

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "captune/captune.hpp"
#include "captune/config.hpp"

namespace {

using namespace captune;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

std::string resolve_rapl_root(const std::string& flag_value) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  if (const char* env = std::getenv("CAPTUNE_RAPL_ROOT")) {
    return env;
  }
  return powercap::kDefaultRaplRoot;
}

std::string resolve_cpu_root(const std::string& flag_value) {
  if (!flag_value.empty()) {
    return flag_value;
  }
  if (const char* env = std::getenv("CAPTUNE_CPU_ROOT")) {
    return env;
  }
  return telemetry::kDefaultCpuRoot;
}

void render_zone_text(std::ostream& out, const powercap::ZoneConfig& zone, int indent,
                      const char* kind) {
  std::string pad(indent, ' ');
  out << pad << kind << ' ' << zone.index << '\n';
  out << pad << "  name: " << zone.name << '\n';
  out << pad << "  enabled: " << (zone.enabled ? 1 : 0) << '\n';
  out << pad << "  max_energy_range_uj: " << zone.max_energy_range_uj << '\n';
  for (const auto& c : zone.constraints) {
    out << pad << "  Constraint " << c.index << '\n';
    out << pad << "    name: " << c.name << '\n';
    out << pad << "    power_limit_uw: " << c.power_limit_uw << '\n';
    out << pad << "    time_window_us: " << c.time_window_us << '\n';
    if (c.max_power_uw) {
      out << pad << "    max_power_uw: " << *c.max_power_uw << '\n';
    }
  }
  for (const auto& sub : zone.subzones) {
    render_zone_text(out, sub, indent + 2, "Subzone");
  }
}

struct BaselineArg {
  int cap_w = 150;
  int cores = 64;
};

BaselineArg parse_baseline(const std::string& s) {
  auto x = s.find('x');
  if (x == std::string::npos) {
    throw PreconditionError("baseline must look like CAPxCORES, e.g. 150x64");
  }
  try {
    BaselineArg b;
    b.cap_w = std::stoi(s.substr(0, x));
    b.cores = std::stoi(s.substr(x + 1));
    return b;
  } catch (const std::exception&) {
    throw PreconditionError("baseline must look like CAPxCORES, e.g. 150x64");
  }
}

// --------------------------------------------------------------------------
// zones
// --------------------------------------------------------------------------

int cmd_zones(const std::string& root_flag, const std::string& format) {
  auto zones = powercap::parse_zone_tree(resolve_rapl_root(root_flag));
  if (format == "json") {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& zone : zones) {
      j.push_back(config::zone_to_json(zone));
    }
    std::cout << j.dump(2) << '\n';
    return kExitOk;
  }
  if (zones.empty()) {
    std::cout << "no zones found\n";
    return kExitOk;
  }
  for (const auto& zone : zones) {
    render_zone_text(std::cout, zone, 0, "Zone");
  }
  for (const auto& warning : powercap::unknown_constraint_names(zones)) {
    std::cerr << "warning: " << warning << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// set-cap
// --------------------------------------------------------------------------

int cmd_set_cap(int watts, const std::string& root_flag, bool dry_run) {
  auto zones = powercap::parse_zone_tree(resolve_rapl_root(root_flag));
  if (dry_run) {
    auto report = powercap::plan_power_limit_writes(zones, watts);
    for (const auto& w : report.writes) {
      std::cout << w.path.string() << " -> " << sysfs::trim(w.value) << '\n';
    }
    for (const auto& warning : report.warnings) {
      std::cerr << "warning: " << warning << '\n';
    }
    std::cout << "dry run: no files written\n";
    return kExitOk;
  }
  auto report = powercap::set_power_limit_watts(zones, watts);
  for (const auto& w : report.writes) {
    std::cout << w.path.string() << " -> " << sysfs::trim(w.value) << '\n';
  }
  for (const auto& warning : report.warnings) {
    std::cerr << "warning: " << warning << '\n';
  }
  std::cout << "power limit set to " << watts << " watts (" << report.writes.size()
            << " writes)\n";
  return kExitOk;
}

// --------------------------------------------------------------------------
// sweep
// --------------------------------------------------------------------------

int cmd_sweep(const std::string& spec_path, const std::string& backend_name,
              const std::string& out_dir, const std::string& rapl_root,
              const std::string& cpu_root, bool dry_run) {
  nlohmann::json spec_json = config::load_json(spec_path);
  campaign::CampaignSpec spec = config::parse_campaign_spec(spec_json);
  config::BackendSettings settings = config::parse_backend_settings(spec_json);
  if (!out_dir.empty()) {
    spec.output_dir = out_dir;
  }
  if (spec.output_dir.empty()) {
    throw PreconditionError("no output directory (spec \"output_dir\" or --out)");
  }
  spec.validate();

  if (dry_run) {
    std::vector<int> cores_desc = spec.core_counts;
    std::sort(cores_desc.begin(), cores_desc.end(), std::greater<int>());
    std::vector<int> caps_asc = spec.caps_w;
    std::sort(caps_asc.begin(), caps_asc.end());
    int points = 0;
    for (const auto& w : spec.workloads) {
      for (int cores : cores_desc) {
        for (int cap : caps_asc) {
          for (int trial = 1; trial <= spec.trials; ++trial) {
            std::cout << "would run: " << w.name << " cap=" << cap << " cores=" << cores
                      << " trial=" << trial << '\n';
            ++points;
          }
        }
      }
    }
    std::cout << "dry run: " << points << " points -> "
              << (spec.output_dir / "results.csv").string() << ", nothing executed\n";
    return kExitOk;
  }

  std::unique_ptr<campaign::Backend> backend;
  if (backend_name == "sim") {
    backend = std::make_unique<campaign::SimBackend>(settings.sim_params, settings.sim_options,
                                                     settings.supply_overhead_w);
  } else {
    settings.real.powercap_root = resolve_rapl_root(rapl_root);
    settings.real.cpu_root = resolve_cpu_root(cpu_root);
    backend = std::make_unique<campaign::RealBackend>(settings.real);
  }

  auto results = campaign::run_grid(spec, *backend, [](const campaign::RunResult& r) {
    std::cerr << r.config.workload << " cap=" << r.config.cap_w << " cores=" << r.config.cores
              << " trial=" << r.config.trial << " runtime=" << r.runtime_s
              << "s energy=" << r.energy_rapl_j << "J exit=" << r.exit_status << '\n';
  });
  std::cout << results.size() << " points recorded in "
            << (spec.output_dir / "results.csv").string() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------
// analyze
// --------------------------------------------------------------------------

int cmd_analyze(const std::string& results_path, const std::string& baseline_arg,
                double budget_pct, const std::string& out_dir, bool median, bool dry_run) {
  BaselineArg baseline = parse_baseline(baseline_arg);
  auto all = campaign::load_results(results_path);
  if (all.empty()) {
    throw NotFoundError("no results in " + results_path);
  }

  std::vector<std::string> workloads;
  for (const auto& r : all) {
    if (std::find(workloads.begin(), workloads.end(), r.config.workload) == workloads.end()) {
      workloads.push_back(r.config.workload);
    }
  }

  fs::path out = out_dir.empty() ? fs::path(results_path).parent_path() : fs::path(out_dir);
  if (dry_run) {
    for (const auto& name : workloads) {
      std::cout << "would write: " << (out / (name + "_energy_matrix.csv")).string() << '\n';
      std::cout << "would write: " << (out / (name + "_runtime_matrix.csv")).string() << '\n';
    }
    std::cout << "would write: " << (out / "stalls.csv").string() << '\n';
    std::cout << "would write: " << (out / "summary.txt").string() << '\n';
    return kExitOk;
  }
  fs::create_directories(out);

  analysis::Aggregate how = median ? analysis::Aggregate::median : analysis::Aggregate::mean;
  std::vector<double> budgets = {0.0, 0.05, 0.10};
  if (budget_pct >= 0 &&
      std::find(budgets.begin(), budgets.end(), budget_pct / 100.0) == budgets.end()) {
    budgets.push_back(budget_pct / 100.0);
  }

  std::ostringstream summary;
  std::vector<analysis::StallRange> stall_ranges;
  for (const auto& name : workloads) {
    std::vector<campaign::RunResult> results;
    for (const auto& r : all) {
      if (r.config.workload == name) {
        results.push_back(r);
      }
    }
    auto energy = analysis::build_matrix(results, analysis::Metric::energy_rapl,
                                         baseline.cap_w, baseline.cores, how);
    auto runtime = analysis::build_matrix(results, analysis::Metric::runtime, baseline.cap_w,
                                          baseline.cores, how);
    analysis::export_matrix_csv(energy, out / (name + "_energy_matrix.csv"));
    analysis::export_matrix_csv(runtime, out / (name + "_runtime_matrix.csv"));

    bool any_supply = std::any_of(results.begin(), results.end(),
                                  [](const campaign::RunResult& r) {
                                    return r.energy_supply_j.has_value();
                                  });
    if (any_supply) {
      auto supply = analysis::build_matrix(results, analysis::Metric::energy_supply,
                                           baseline.cap_w, baseline.cores, how);
      analysis::export_matrix_csv(supply, out / (name + "_supply_matrix.csv"));
    }

    summary << "== " << name << " ==\n";
    summary << analysis::summary_report(energy, runtime, budgets,
                                        tuner::rule_of_thumb_cap(150));
    try {
      stall_ranges.push_back(analysis::stall_range(results));
      const auto& range = stall_ranges.back();
      summary << "stall ratio range: " << range.min_ratio << " .. " << range.max_ratio << '\n';
    } catch (const NoCycleDataError&) {
      // no cycle telemetry for this workload; nothing to report
    }
    summary << '\n';
  }
  if (!stall_ranges.empty()) {
    analysis::export_stall_csv(stall_ranges, out / "stalls.csv");
  }

  std::ofstream summary_file(out / "summary.txt", std::ios::binary | std::ios::trunc);
  summary_file << summary.str();
  std::cout << summary.str();
  return kExitOk;
}

// --------------------------------------------------------------------------
// tune
// --------------------------------------------------------------------------

int cmd_tune(int lo, int hi, int tol, double budget_pct, int reference, int cores,
             const std::string& method, int tdp, const std::string& workload_arg,
             const std::string& params_path, const std::string& out_dir, bool dry_run) {
  if (method == "rule") {
    int cap = tuner::rule_of_thumb_cap(tdp);
    std::cout << "recommended_cap_w: " << cap << " (rule_of_thumb, 80% of " << tdp
              << " W TDP)\n";
    return kExitOk;
  }

  sim::PowerModelParams params = sim::calibrate_defaults(32);
  if (!params_path.empty()) {
    params = config::parse_power_model(config::load_json(params_path));
  }
  sim::WorkloadSpec spec = config::resolve_workload_arg(workload_arg);
  if (cores < 1) {
    cores = params.total_cores();
  }

  if (dry_run) {
    std::cout << "would search [" << lo << ", " << hi << "] W, tol " << tol << " W, budget "
              << budget_pct << "%, reference " << reference << " W, workload " << spec.label
              << " on " << cores << " cores (sim backend); no runs executed\n";
    return kExitOk;
  }

  sim::SimOptions opts;
  opts.trace_stride = 0;
  auto runner = [&](int cap) {
    auto r = sim::simulate_run(params, spec, cap, cores, opts);
    return std::make_pair(r.energy_j, r.runtime_s);
  };

  tuner::TuneResult result = tuner::tune(runner, lo, hi, budget_pct / 100.0, reference, tol);

  std::cout << "recommended_cap_w: " << result.recommended_cap_w << '\n';
  std::cout << "method: " << tuner::tune_method_name(result.method) << '\n';
  if (result.perf_loss_vs_reference) {
    std::cout << "perf_loss_vs_reference: " << *result.perf_loss_vs_reference << '\n';
  }
  std::cout << "evaluations: " << result.evaluations.size() << '\n';

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    fs::path csv = fs::path(out_dir) / "tune_evaluations.csv";
    std::ofstream out(csv, std::ios::binary | std::ios::trunc);
    out << "cap_w,energy_j,runtime_s\n";
    for (const auto& e : result.evaluations) {
      out << e.cap_w << ',' << e.energy_j << ',';
      if (e.runtime_s) {
        out << *e.runtime_s;
      }
      out << '\n';
    }
    std::cout << "evaluations written to " << csv.string() << '\n';
  }
  return kExitOk;
}

// --------------------------------------------------------------------------
// simulate
// --------------------------------------------------------------------------

int cmd_simulate(const std::string& workload_arg, int cap, int cores,
                 const std::string& params_path, const std::string& out_dir, bool dry_run) {
  sim::PowerModelParams params = sim::calibrate_defaults(32);
  if (!params_path.empty()) {
    params = config::parse_power_model(config::load_json(params_path));
  }
  sim::WorkloadSpec spec = config::resolve_workload_arg(workload_arg);
  if (cores < 1) {
    cores = params.total_cores();
  }

  if (dry_run) {
    std::cout << "would simulate " << spec.label << " at cap=" << cap << " W, cores=" << cores
              << "; no output written\n";
    return kExitOk;
  }

  auto result = sim::simulate_run(params, spec, cap, cores);
  std::cout << "workload: " << spec.label << '\n';
  std::cout << "cap_w: " << cap << '\n';
  std::cout << "cores: " << cores << '\n';
  std::cout << "runtime_s: " << result.runtime_s << '\n';
  std::cout << "energy_j: " << result.energy_j << '\n';
  for (std::size_t s = 0; s < result.socket_energy_j.size(); ++s) {
    std::cout << "socket" << s << "_energy_j: " << result.socket_energy_j[s] << '\n';
  }
  std::cout << "mean_power_w: " << result.mean_power_w << '\n';
  std::cout << "mean_stall_ratio: " << result.mean_stall_ratio << '\n';
  std::cout << "cap_violation: " << (result.cap_violation ? "true" : "false") << '\n';

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    campaign::SimBackend backend(params);
    telemetry::Trace trace = backend.to_trace(result, cores);
    telemetry::export_freq_csv(trace, fs::path(out_dir) / "sim_freq.csv");
    telemetry::export_energy_csv(trace, fs::path(out_dir) / "sim_energy.csv");
    std::cout << "traces written to " << out_dir << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"power-cap characterization and autotuning toolkit"};
  app.require_subcommand(1);

  // zones
  auto* zones = app.add_subcommand("zones", "show the powercap zone tree");
  std::string zones_root, zones_format = "text";
  zones->add_option("--root", zones_root, "powercap root directory");
  zones->add_option("--format", zones_format, "output format")
      ->check(CLI::IsMember({"text", "json"}));

  // set-cap
  auto* set_cap = app.add_subcommand("set-cap", "set the package power limit in watts");
  int set_cap_watts = 0;
  std::string set_cap_root;
  bool set_cap_dry = false;
  set_cap->add_option("watts", set_cap_watts, "power limit in watts")->required();
  set_cap->add_option("--root", set_cap_root, "powercap root directory");
  set_cap->add_flag("--dry-run", set_cap_dry, "print intended writes without performing them");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a cap x cores measurement grid");
  std::string sweep_spec, sweep_backend = "sim", sweep_out, sweep_rapl_root, sweep_cpu_root;
  bool sweep_dry = false;
  sweep->add_option("--spec", sweep_spec, "campaign spec (JSON)")->required();
  sweep->add_option("--backend", sweep_backend, "backend")
      ->check(CLI::IsMember({"sim", "real"}));
  sweep->add_option("--out", sweep_out, "output directory (overrides spec)");
  sweep->add_option("--rapl-root", sweep_rapl_root, "powercap root (real backend)");
  sweep->add_option("--cpu-root", sweep_cpu_root, "cpu sysfs root (real backend)");
  sweep->add_flag("--dry-run", sweep_dry, "list the grid points without running");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "reduce results into normalized matrices");
  std::string analyze_results, analyze_baseline = "150x64", analyze_out;
  double analyze_budget = -1;
  bool analyze_median = false, analyze_dry = false;
  analyze->add_option("--results", analyze_results, "results.csv from a sweep")->required();
  analyze->add_option("--baseline", analyze_baseline, "baseline cell as CAPxCORES");
  analyze->add_option("--budget", analyze_budget, "extra performance-loss budget in percent");
  analyze->add_option("--out", analyze_out, "output directory (default: alongside results)");
  analyze->add_flag("--median", analyze_median, "aggregate trials by median instead of mean");
  analyze->add_flag("--dry-run", analyze_dry, "print intended output files only");

  // tune
  auto* tune = app.add_subcommand("tune", "recommend an energy-optimal power cap");
  int tune_lo = 70, tune_hi = 180, tune_tol = 5, tune_reference = 150, tune_cores = -1;
  int tune_tdp = 150;
  double tune_budget = 5.0;
  std::string tune_method = "search", tune_workload = "compute_bound", tune_params, tune_out;
  bool tune_dry = false;
  tune->add_option("--lo", tune_lo, "lower cap bound in watts");
  tune->add_option("--hi", tune_hi, "upper cap bound in watts");
  tune->add_option("--tol", tune_tol, "bracket tolerance in watts");
  tune->add_option("--budget", tune_budget, "performance loss budget in percent");
  tune->add_option("--reference", tune_reference, "reference cap in watts");
  tune->add_option("--cores", tune_cores, "enabled cores (default: all)");
  tune->add_option("--method", tune_method, "search or rule")
      ->check(CLI::IsMember({"search", "rule"}));
  tune->add_option("--tdp", tune_tdp, "per-socket TDP for the rule of thumb");
  tune->add_option("--workload", tune_workload, "built-in label or workload spec JSON");
  tune->add_option("--params", tune_params, "power model params JSON");
  tune->add_option("--out", tune_out, "directory for the evaluations CSV");
  tune->add_flag("--dry-run", tune_dry, "print the search plan without running");
  std::string tune_backend = "sim";
  tune->add_option("--backend", tune_backend, "backend (sim only)")
      ->check(CLI::IsMember({"sim"}));

  // simulate
  auto* simulate = app.add_subcommand("simulate", "run one simulated grid point");
  std::string sim_workload = "compute_bound", sim_params_path, sim_out;
  int sim_cap = 150, sim_cores = -1;
  bool sim_dry = false;
  simulate->add_option("--workload", sim_workload, "built-in label or workload spec JSON");
  simulate->add_option("--cap", sim_cap, "power cap in watts");
  simulate->add_option("--cores", sim_cores, "enabled cores (default: all)");
  simulate->add_option("--params", sim_params_path, "power model params JSON");
  simulate->add_option("--out", sim_out, "directory for trace CSVs");
  simulate->add_flag("--dry-run", sim_dry, "print the plan without simulating");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (zones->parsed()) {
      return cmd_zones(zones_root, zones_format);
    }
    if (set_cap->parsed()) {
      return cmd_set_cap(set_cap_watts, set_cap_root, set_cap_dry);
    }
    if (sweep->parsed()) {
      return cmd_sweep(sweep_spec, sweep_backend, sweep_out, sweep_rapl_root, sweep_cpu_root,
                       sweep_dry);
    }
    if (analyze->parsed()) {
      return cmd_analyze(analyze_results, analyze_baseline, analyze_budget, analyze_out,
                         analyze_median, analyze_dry);
    }
    if (tune->parsed()) {
      return cmd_tune(tune_lo, tune_hi, tune_tol, tune_budget, tune_reference, tune_cores,
                      tune_method, tune_tdp, tune_workload, tune_params, tune_out, tune_dry);
    }
    if (simulate->parsed()) {
      return cmd_simulate(sim_workload, sim_cap, sim_cores, sim_params_path, sim_out, sim_dry);
    }
  } catch (const PreconditionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
