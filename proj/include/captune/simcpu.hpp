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

#ifndef CAPTUNE_SIMCPU_HPP
#define CAPTUNE_SIMCPU_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "captune/errors.hpp"

namespace captune::sim {

/// Parameters of the processor power model
///
///   P(f, n) = n * alpha_c * V(f)^2 * f  +  V(f) * k * e^beta
///
/// with an affine voltage curve V(f) = v0 + v_slope * (f - f_min). The
/// dynamic term scales with active core count; the static (leakage) term is
/// paid once per powered socket and depends on f only through V. A socket
/// with no active cores draws nothing, which is what makes waking a second
/// socket for its first core so expensive.
struct PowerModelParams {
  double alpha_c = 1.5;     // W per (V^2 * GHz) per active core
  double v0 = 0.80;         // volts at f_min
  double v_slope = 0.27 / 2.7;  // volts per GHz
  double k = 45.0 / 1.07;   // leakage scale; k * e^beta is the observable
  double beta = 0.0;
  double f_min_ghz = 1.2;
  double f_max_ghz = 3.9;
  double p_state_step_ghz = 0.1;
  int sockets = 2;
  int cores_per_socket = 16;
  double tdp_w = 150.0;

  double volts_at(double f_ghz) const { return v0 + v_slope * (f_ghz - f_min_ghz); }

  int total_cores() const { return sockets * cores_per_socket; }

  int num_p_states() const {
    return static_cast<int>(std::lround((f_max_ghz - f_min_ghz) / p_state_step_ghz)) + 1;
  }

  double freq_of_rung(int rung) const { return f_min_ghz + rung * p_state_step_ghz; }
};

/// Power drawn by one socket running n_active cores at frequency f.
inline double socket_power_w(const PowerModelParams& params, double f_ghz, int n_active) {
  if (f_ghz < params.f_min_ghz - 1e-9 || f_ghz > params.f_max_ghz + 1e-9) {
    throw DomainError("frequency outside the P-state ladder: " + std::to_string(f_ghz));
  }
  if (n_active < 0 || n_active > params.cores_per_socket) {
    throw PreconditionError("active core count out of range: " + std::to_string(n_active));
  }
  if (n_active == 0) {
    return 0.0;
  }
  double v = params.volts_at(f_ghz);
  double dynamic = n_active * params.alpha_c * v * v * f_ghz;
  double leakage = v * params.k * std::exp(params.beta);
  return dynamic + leakage;
}

/// Fits the free constants so that a fully active socket at f_max draws
/// exactly tdp_w, split static_share / (1 - static_share) between the
/// leakage and dynamic terms at that point. Closed form, no iteration.
inline PowerModelParams calibrate_defaults(int cores_per_socket = 16,
                                           double static_share = 0.30) {
  PowerModelParams p;
  p.cores_per_socket = cores_per_socket;
  double v_max = p.volts_at(p.f_max_ghz);
  p.k = static_share * p.tdp_w / (v_max * std::exp(p.beta));
  p.alpha_c = (1.0 - static_share) * p.tdp_w / (cores_per_socket * v_max * v_max * p.f_max_ghz);
  return p;
}

/// A synthetic workload: a fixed amount of work, retired at ipc operations
/// per core cycle, throttled by a per-socket memory bandwidth ceiling.
struct WorkloadSpec {
  double total_work_gops = 1000.0;  // giga-operations to retire
  double ipc = 1.0;                 // operations per cycle per core
  double mem_bw_cap_gops = std::numeric_limits<double>::infinity();  // per socket
  std::string label = "custom";

  static WorkloadSpec compute_bound() {
    return {2000.0, 2.0, std::numeric_limits<double>::infinity(), "compute_bound"};
  }
  static WorkloadSpec memory_bound() { return {600.0, 1.0, 48.0, "memory_bound"}; }
  static WorkloadSpec balanced() { return {1200.0, 1.5, 96.0, "balanced"}; }

  static WorkloadSpec by_label(const std::string& label) {
    if (label == "compute_bound") return compute_bound();
    if (label == "memory_bound") return memory_bound();
    if (label == "balanced") return balanced();
    throw PreconditionError("unknown built-in workload: " + label);
  }
};

/// Per-core retirement rate in giga-operations/s: compute bandwidth capped
/// by the socket's memory bandwidth divided across its active cores.
inline double throughput_per_core(const WorkloadSpec& spec, double f_ghz, int n_active_on_socket) {
  if (n_active_on_socket <= 0) {
    return 0.0;
  }
  return std::min(spec.ipc * f_ghz, spec.mem_bw_cap_gops / n_active_on_socket);
}

struct SimOptions {
  double dt_ms = 1.0;
  double window_us = 999424.0;  // long_term constraint window
  // Step-up threshold is cap * (1 - hysteresis_frac). The band must stay
  // narrower than one P-state's power gap or the limiter parks on a rung
  // for whole ranges of caps and the energy/cap curve turns into a
  // staircase.
  double hysteresis_frac = 0.005;
  int trace_stride = 100;  // record every N ticks (100 => 10 Hz of sim time)
};

struct SimSample {
  double t_s = 0.0;
  std::vector<double> freq_ghz;        // per socket
  std::vector<double> window_mean_w;   // per socket
  std::vector<double> energy_j;        // per socket, cumulative
  double power_w = 0.0;                // instantaneous, all sockets
};

struct SimResult {
  double runtime_s = 0.0;
  std::vector<double> socket_energy_j;
  double energy_j = 0.0;
  double mean_stall_ratio = 0.0;
  std::int64_t stalled_cycles = 0;
  std::int64_t total_cycles = 0;
  std::vector<SimSample> trace;
  std::vector<double> max_window_mean_w;  // per socket, worst overshoot seen
  bool cap_violation = false;  // cap below the f_min floor on some socket
  double mean_power_w = 0.0;
};

/// Discrete-time run of the capped processor. Cores fill socket 0 first,
/// matching the contiguous hotplug masks of a sweep. Each socket keeps a
/// sliding-window mean of its own power (window preloaded with cap_w, i.e.
/// a neutral history); when the mean rises above cap_w the socket steps one
/// P-state down, when it falls below cap_w less the hysteresis band it
/// steps one up. The run ends when total_work is retired, with the final
/// tick shortened so runtimes are exact rather than quantized to dt.
///
/// A cap below the floor power at f_min cannot be honored; the run then
/// stays at f_min and reports cap_violation, matching how a real limiter
/// bottoms out. Everything is deterministic: no randomness, no wall clock.
inline SimResult simulate_run(const PowerModelParams& params, const WorkloadSpec& spec,
                              double cap_w, int cores, const SimOptions& opts = {}) {
  if (cap_w <= 0) {
    throw PreconditionError("power cap must be positive, got " + std::to_string(cap_w));
  }
  if (cores < 1 || cores > params.total_cores()) {
    throw PreconditionError("core count out of range: " + std::to_string(cores));
  }
  if (spec.total_work_gops <= 0 || spec.ipc <= 0 || spec.mem_bw_cap_gops <= 0) {
    throw PreconditionError("workload must have positive work, ipc and bandwidth");
  }
  if (opts.dt_ms <= 0 || opts.window_us <= 0) {
    throw PreconditionError("dt and window must be positive");
  }

  const double dt_s = opts.dt_ms / 1e3;
  const int window_ticks =
      std::max(1, static_cast<int>(opts.window_us / (opts.dt_ms * 1000.0)));
  const int top_rung = params.num_p_states() - 1;
  const double step_up_below_w = cap_w * (1.0 - opts.hysteresis_frac);

  // Contiguous fill: socket 0 first.
  std::vector<int> active(params.sockets, 0);
  int remaining = cores;
  for (int s = 0; s < params.sockets; ++s) {
    active[s] = std::min(remaining, params.cores_per_socket);
    remaining -= active[s];
  }

  struct SocketState {
    int rung = 0;
    std::vector<double> window;
    int window_pos = 0;
    double window_sum = 0.0;
    double energy_j = 0.0;
    double max_mean = 0.0;
  };

  SimResult result;
  result.socket_energy_j.assign(params.sockets, 0.0);
  result.max_window_mean_w.assign(params.sockets, 0.0);

  std::vector<SocketState> sockets(params.sockets);
  for (int s = 0; s < params.sockets; ++s) {
    if (active[s] == 0) {
      continue;
    }
    sockets[s].rung = top_rung;
    sockets[s].window.assign(window_ticks, cap_w);
    sockets[s].window_sum = cap_w * window_ticks;
    if (socket_power_w(params, params.f_min_ghz, active[s]) > cap_w) {
      result.cap_violation = true;
    }
  }

  double work_done = 0.0;
  double t_s = 0.0;
  double stalled_cycles = 0.0;
  double total_cycles = 0.0;
  std::int64_t tick = 0;

  while (true) {
    double rate_gops = 0.0;
    double power_w = 0.0;
    for (int s = 0; s < params.sockets; ++s) {
      if (active[s] == 0) {
        continue;
      }
      double f = params.freq_of_rung(sockets[s].rung);
      rate_gops += active[s] * throughput_per_core(spec, f, active[s]);
      power_w += socket_power_w(params, f, active[s]);
    }

    double step_work = rate_gops * dt_s;
    double frac = 1.0;
    bool last = false;
    if (work_done + step_work >= spec.total_work_gops) {
      frac = (spec.total_work_gops - work_done) / step_work;
      last = true;
    }

    for (int s = 0; s < params.sockets; ++s) {
      if (active[s] == 0) {
        continue;
      }
      double f = params.freq_of_rung(sockets[s].rung);
      double p = socket_power_w(params, f, active[s]);
      sockets[s].energy_j += p * dt_s * frac;
      double tpc = throughput_per_core(spec, f, active[s]);
      double stall_frac = 1.0 - tpc / (spec.ipc * f);
      double cycles = active[s] * f * 1e9 * dt_s * frac;
      total_cycles += cycles;
      stalled_cycles += cycles * stall_frac;
    }
    work_done += step_work * frac;
    t_s += dt_s * frac;
    if (last) {
      break;
    }

    // Window update and ladder controller; takes effect next tick.
    for (int s = 0; s < params.sockets; ++s) {
      if (active[s] == 0) {
        continue;
      }
      auto& st = sockets[s];
      double p = socket_power_w(params, params.freq_of_rung(st.rung), active[s]);
      st.window_sum += p - st.window[st.window_pos];
      st.window[st.window_pos] = p;
      st.window_pos = (st.window_pos + 1) % window_ticks;
      double mean = st.window_sum / window_ticks;
      st.max_mean = std::max(st.max_mean, mean);
      // The down-step is gated on the current rung actually drawing more
      // than the cap: once instantaneous power is at or under the cap the
      // window drains by itself, and stepping further down would wind the
      // ladder up into deep multi-rung excursions.
      if (mean > cap_w) {
        if (st.rung > 0 && p > cap_w) {
          st.rung--;
        }
      } else if (mean < step_up_below_w && st.rung < top_rung) {
        st.rung++;
      }
    }

    ++tick;
    if (opts.trace_stride > 0 && tick % opts.trace_stride == 0) {
      SimSample sample;
      sample.t_s = t_s;
      for (int s = 0; s < params.sockets; ++s) {
        if (active[s] == 0) {
          continue;
        }
        sample.freq_ghz.push_back(params.freq_of_rung(sockets[s].rung));
        sample.window_mean_w.push_back(sockets[s].window_sum / window_ticks);
        sample.energy_j.push_back(sockets[s].energy_j);
      }
      sample.power_w = power_w;
      result.trace.push_back(std::move(sample));
    }
  }

  result.runtime_s = t_s;
  for (int s = 0; s < params.sockets; ++s) {
    result.socket_energy_j[s] = sockets[s].energy_j;
    result.energy_j += sockets[s].energy_j;
    result.max_window_mean_w[s] = sockets[s].max_mean;
  }
  result.stalled_cycles = static_cast<std::int64_t>(std::llround(stalled_cycles));
  result.total_cycles = static_cast<std::int64_t>(std::llround(total_cycles));
  result.mean_stall_ratio = total_cycles > 0 ? stalled_cycles / total_cycles : 0.0;
  result.mean_power_w = result.runtime_s > 0 ? result.energy_j / result.runtime_s : 0.0;
  return result;
}

}  // namespace captune::sim

#endif  // CAPTUNE_SIMCPU_HPP
