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

#ifndef CAPTUNE_CONFIG_HPP
#define CAPTUNE_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <string>

#include <json.hpp>

#include "captune/campaign.hpp"
#include "captune/errors.hpp"
#include "captune/simcpu.hpp"
#include "captune/telemetry.hpp"

namespace captune::config {

namespace fs = std::filesystem;
using nlohmann::json;

inline json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw NotFoundError("cannot open config file: " + path.string());
  }
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ParseError("bad JSON in " + path.string() + ": " + e.what());
  }
}

/// Workload spec object: {"label": ..., "total_work_gops": ..., "ipc": ...,
/// "mem_bw_cap_gops": number | "inf" | absent}. A bare string names one of
/// the built-in workloads (compute_bound, memory_bound, balanced).
inline sim::WorkloadSpec parse_workload_spec(const json& j) {
  if (j.is_string()) {
    return sim::WorkloadSpec::by_label(j.get<std::string>());
  }
  if (!j.is_object()) {
    throw ParseError("workload spec must be an object or a built-in label");
  }
  sim::WorkloadSpec spec;
  if (j.contains("label")) {
    spec.label = j["label"].get<std::string>();
  }
  spec.total_work_gops = j.value("total_work_gops", spec.total_work_gops);
  spec.ipc = j.value("ipc", spec.ipc);
  if (j.contains("mem_bw_cap_gops")) {
    const auto& bw = j["mem_bw_cap_gops"];
    if (bw.is_string()) {
      if (bw.get<std::string>() != "inf") {
        throw ParseError("mem_bw_cap_gops must be a number or \"inf\"");
      }
      spec.mem_bw_cap_gops = std::numeric_limits<double>::infinity();
    } else {
      spec.mem_bw_cap_gops = bw.get<double>();
    }
  }
  return spec;
}

inline sim::WorkloadSpec load_workload_spec(const fs::path& path) {
  return parse_workload_spec(load_json(path));
}

/// Resolves a CLI --workload argument: a built-in label or a JSON file.
inline sim::WorkloadSpec resolve_workload_arg(const std::string& arg) {
  if (arg == "compute_bound" || arg == "memory_bound" || arg == "balanced") {
    return sim::WorkloadSpec::by_label(arg);
  }
  return load_workload_spec(arg);
}

/// Power model object. Calibration knobs (cores_per_socket, static_share)
/// run first, then any explicit field overrides win.
inline sim::PowerModelParams parse_power_model(const json& j) {
  int cores_per_socket = j.value("cores_per_socket", 16);
  double static_share = j.value("static_share", 0.30);
  sim::PowerModelParams p = sim::calibrate_defaults(cores_per_socket, static_share);
  p.sockets = j.value("sockets", p.sockets);
  p.tdp_w = j.value("tdp_w", p.tdp_w);
  p.f_min_ghz = j.value("f_min_ghz", p.f_min_ghz);
  p.f_max_ghz = j.value("f_max_ghz", p.f_max_ghz);
  p.p_state_step_ghz = j.value("p_state_step_ghz", p.p_state_step_ghz);
  p.v0 = j.value("v0", p.v0);
  p.v_slope = j.value("v_slope", p.v_slope);
  p.beta = j.value("beta", p.beta);
  if (j.contains("v0") || j.contains("v_slope") || j.contains("tdp_w") ||
      j.contains("f_max_ghz") || j.contains("beta")) {
    // Voltage or TDP changed: re-fit so the full-socket anchor still holds.
    double v_max = p.volts_at(p.f_max_ghz);
    p.k = static_share * p.tdp_w / (v_max * std::exp(p.beta));
    p.alpha_c =
        (1.0 - static_share) * p.tdp_w / (cores_per_socket * v_max * v_max * p.f_max_ghz);
  }
  p.alpha_c = j.value("alpha_c", p.alpha_c);
  p.k = j.value("k", p.k);
  return p;
}

inline sim::SimOptions parse_sim_options(const json& j) {
  sim::SimOptions o;
  o.dt_ms = j.value("dt_ms", o.dt_ms);
  o.window_us = j.value("window_us", o.window_us);
  o.hysteresis_frac = j.value("hysteresis_frac", o.hysteresis_frac);
  o.trace_stride = j.value("trace_stride", o.trace_stride);
  return o;
}

inline campaign::Workload parse_campaign_workload(const json& j) {
  campaign::Workload w;
  if (!j.is_object() || !j.contains("name")) {
    throw ParseError("each workload needs a \"name\"");
  }
  w.name = j["name"].get<std::string>();
  if (j.contains("command")) {
    campaign::WorkloadCommand cmd;
    const auto& jc = j["command"];
    if (jc.contains("argv")) {
      for (const auto& a : jc["argv"]) {
        cmd.argv.push_back(a.get<std::string>());
      }
    }
    if (cmd.argv.empty()) {
      throw ParseError("workload \"" + w.name + "\" command has empty argv");
    }
    if (jc.contains("env")) {
      for (auto it = jc["env"].begin(); it != jc["env"].end(); ++it) {
        cmd.env[it.key()] = it.value().get<std::string>();
      }
    }
    cmd.workdir = jc.value("workdir", std::string());
    w.command = std::move(cmd);
  }
  if (j.contains("sim")) {
    w.sim_spec = parse_workload_spec(j["sim"]);
    if (w.sim_spec->label == "custom") {
      w.sim_spec->label = w.name;
    }
  }
  if (!w.command && !w.sim_spec) {
    throw ParseError("workload \"" + w.name + "\" needs a \"command\" or a \"sim\" spec");
  }
  return w;
}

inline campaign::CampaignSpec parse_campaign_spec(const json& j) {
  campaign::CampaignSpec spec;
  if (j.contains("caps_w")) {
    spec.caps_w.clear();
    for (const auto& c : j["caps_w"]) {
      spec.caps_w.push_back(c.get<int>());
    }
  }
  if (!j.contains("core_counts")) {
    throw ParseError("campaign spec needs \"core_counts\"");
  }
  spec.core_counts.clear();
  for (const auto& n : j["core_counts"]) {
    spec.core_counts.push_back(n.get<int>());
  }
  spec.trials = j.value("trials", 1);
  if (j.contains("baseline")) {
    spec.baseline_cap_w = j["baseline"].value("cap_w", spec.baseline_cap_w);
    spec.baseline_cores = j["baseline"].value("cores", spec.baseline_cores);
  }
  if (!j.contains("workloads") || j["workloads"].empty()) {
    throw ParseError("campaign spec needs a nonempty \"workloads\" list");
  }
  for (const auto& w : j["workloads"]) {
    spec.workloads.push_back(parse_campaign_workload(w));
  }
  spec.output_dir = j.value("output_dir", std::string());
  spec.inter_point_delay_s = j.value("inter_point_delay_s", 0.0);
  spec.save_traces = j.value("save_traces", false);
  return spec;
}

inline campaign::CampaignSpec load_campaign_spec(const fs::path& path) {
  return parse_campaign_spec(load_json(path));
}

struct BackendSettings {
  sim::PowerModelParams sim_params = sim::calibrate_defaults(32);
  sim::SimOptions sim_options;
  double supply_overhead_w = 60.0;
  campaign::RealBackendConfig real;
};

/// Reads the backend-tuning sections of a campaign spec file (all optional):
/// "sim_params", "sim_options", "supply_overhead_w", "sampler".
inline BackendSettings parse_backend_settings(const json& j) {
  BackendSettings s;
  if (j.contains("sim_params")) {
    s.sim_params = parse_power_model(j["sim_params"]);
  }
  if (j.contains("sim_options")) {
    s.sim_options = parse_sim_options(j["sim_options"]);
  }
  s.supply_overhead_w = j.value("supply_overhead_w", s.supply_overhead_w);
  if (j.contains("sampler")) {
    const auto& js = j["sampler"];
    s.real.sampler_rate_hz = js.value("rate_hz", s.real.sampler_rate_hz);
    if (js.contains("sources")) {
      s.real.sources.clear();
      for (const auto& src : js["sources"]) {
        std::string name = src.get<std::string>();
        if (name == "freq") {
          s.real.sources.insert(telemetry::Source::freq);
        } else if (name == "rapl") {
          s.real.sources.insert(telemetry::Source::rapl);
        } else if (name == "supply") {
          s.real.sources.insert(telemetry::Source::supply);
        } else if (name == "cycles") {
          s.real.sources.insert(telemetry::Source::cycles);
        } else {
          throw ParseError("unknown sampler source: " + name);
        }
      }
    }
    if (js.contains("supply_file")) {
      s.real.supply =
          std::make_shared<telemetry::FileSupplySource>(js["supply_file"].get<std::string>());
    }
    if (js.contains("cycles_cmd")) {
      s.real.cycles =
          std::make_shared<telemetry::CommandCycleSource>(js["cycles_cmd"].get<std::string>());
    }
  }
  return s;
}

inline json zone_to_json(const powercap::ZoneConfig& zone) {
  json j;
  j["index"] = zone.index;
  j["name"] = zone.name;
  j["enabled"] = zone.enabled;
  j["max_energy_range_uj"] = zone.max_energy_range_uj;
  j["constraints"] = json::array();
  for (const auto& c : zone.constraints) {
    json jc;
    jc["index"] = c.index;
    jc["name"] = c.name;
    jc["power_limit_uw"] = c.power_limit_uw;
    jc["time_window_us"] = c.time_window_us;
    if (c.max_power_uw) {
      jc["max_power_uw"] = *c.max_power_uw;
    }
    j["constraints"].push_back(std::move(jc));
  }
  j["subzones"] = json::array();
  for (const auto& sub : zone.subzones) {
    j["subzones"].push_back(zone_to_json(sub));
  }
  return j;
}

}  // namespace captune::config

#endif  // CAPTUNE_CONFIG_HPP
