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

#ifndef CAPTUNE_ANALYSIS_HPP
#define CAPTUNE_ANALYSIS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "captune/campaign.hpp"
#include "captune/errors.hpp"
#include "captune/telemetry.hpp"

namespace captune::analysis {

namespace fs = std::filesystem;

enum class Metric { energy_rapl, energy_supply, runtime };

inline const char* metric_name(Metric m) {
  switch (m) {
    case Metric::energy_rapl:
      return "energy_rapl";
    case Metric::energy_supply:
      return "energy_supply";
    case Metric::runtime:
      return "runtime";
  }
  return "?";
}

inline std::optional<double> metric_of(const campaign::RunResult& r, Metric m) {
  switch (m) {
    case Metric::energy_rapl:
      return r.energy_rapl_j;
    case Metric::energy_supply:
      return r.energy_supply_j;
    case Metric::runtime:
      return r.runtime_s;
  }
  return std::nullopt;
}

enum class Aggregate { mean, median };

/// A (power cap x core count) grid of metric values normalized to the
/// baseline cell. Missing cells stay missing; they are never zero-filled.
struct EffMatrix {
  std::vector<int> caps_w;       // ascending
  std::vector<int> core_counts;  // ascending
  std::vector<std::vector<std::optional<double>>> values;  // [cap][cores]
  std::vector<std::vector<int>> n_trials;                  // [cap][cores]
  int baseline_cap_w = 0;
  int baseline_cores = 0;
  Metric metric = Metric::energy_rapl;

  std::optional<double> at(int cap_w, int cores) const {
    auto ci = std::find(caps_w.begin(), caps_w.end(), cap_w);
    auto ki = std::find(core_counts.begin(), core_counts.end(), cores);
    if (ci == caps_w.end() || ki == core_counts.end()) {
      return std::nullopt;
    }
    return values[ci - caps_w.begin()][ki - core_counts.begin()];
  }

  bool same_shape(const EffMatrix& other) const {
    return caps_w == other.caps_w && core_counts == other.core_counts &&
           baseline_cap_w == other.baseline_cap_w && baseline_cores == other.baseline_cores;
  }
};

namespace detail {

inline double aggregate(std::vector<double> values, Aggregate how) {
  if (how == Aggregate::median) {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  return sum / static_cast<double>(values.size());
}

}  // namespace detail

/// Builds the normalized matrix: cell = aggregate(metric over trials at
/// cell) / aggregate(metric at baseline). The baseline cell is exactly 1.
inline EffMatrix build_matrix(const std::vector<campaign::RunResult>& results, Metric metric,
                              int baseline_cap_w, int baseline_cores,
                              Aggregate how = Aggregate::mean) {
  EffMatrix m;
  m.metric = metric;
  m.baseline_cap_w = baseline_cap_w;
  m.baseline_cores = baseline_cores;

  std::map<std::pair<int, int>, std::vector<double>> cells;
  std::set<int> caps, cores;
  for (const auto& r : results) {
    caps.insert(r.config.cap_w);
    cores.insert(r.config.cores);
    if (!r.ok()) {
      continue;
    }
    if (auto v = metric_of(r, metric)) {
      cells[{r.config.cap_w, r.config.cores}].push_back(*v);
    }
  }
  m.caps_w.assign(caps.begin(), caps.end());
  m.core_counts.assign(cores.begin(), cores.end());

  auto base_it = cells.find({baseline_cap_w, baseline_cores});
  if (base_it == cells.end() || base_it->second.empty()) {
    throw BaselineMissingError("no successful " + std::string(metric_name(metric)) +
                               " result at baseline (" + std::to_string(baseline_cap_w) +
                               " W, " + std::to_string(baseline_cores) + " cores)");
  }
  double base = detail::aggregate(base_it->second, how);
  if (base <= 0) {
    throw BaselineMissingError("baseline aggregate is not positive");
  }

  m.values.assign(m.caps_w.size(), std::vector<std::optional<double>>(m.core_counts.size()));
  m.n_trials.assign(m.caps_w.size(), std::vector<int>(m.core_counts.size(), 0));
  for (std::size_t i = 0; i < m.caps_w.size(); ++i) {
    for (std::size_t j = 0; j < m.core_counts.size(); ++j) {
      auto it = cells.find({m.caps_w[i], m.core_counts[j]});
      if (it == cells.end() || it->second.empty()) {
        continue;
      }
      m.values[i][j] = detail::aggregate(it->second, how) / base;
      m.n_trials[i][j] = static_cast<int>(it->second.size());
    }
  }
  return m;
}

/// Per-workload stall statistics across the cap sweep.
struct StallRange {
  std::string workload;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  std::map<int, double> per_cap;  // cap_w -> trial-mean stall ratio
};

/// Reduces one workload's results to its per-cap mean stall ratio and the
/// min/max across caps. Needs cycle data at two or more distinct caps.
inline StallRange stall_range(const std::vector<campaign::RunResult>& results) {
  std::string workload;
  std::map<int, std::vector<double>> by_cap;
  for (const auto& r : results) {
    if (workload.empty()) {
      workload = r.config.workload;
    } else if (workload != r.config.workload) {
      throw PreconditionError("stall_range expects results from a single workload");
    }
    if (!r.ok() || !r.cycles || r.cycles->total == 0) {
      continue;
    }
    by_cap[r.config.cap_w].push_back(telemetry::stall_ratio(*r.cycles));
  }
  if (by_cap.size() < 2) {
    throw NoCycleDataError("need cycle data at >= 2 distinct caps, have " +
                           std::to_string(by_cap.size()));
  }
  StallRange range;
  range.workload = workload;
  range.min_ratio = 1.0;
  range.max_ratio = 0.0;
  for (const auto& [cap, ratios] : by_cap) {
    double mean = detail::aggregate(ratios, Aggregate::mean);
    range.per_cap[cap] = mean;
    range.min_ratio = std::min(range.min_ratio, mean);
    range.max_ratio = std::max(range.max_ratio, mean);
  }
  return range;
}

struct TradeoffCell {
  int cap_w = 0;
  int cores = 0;
  double energy_ratio = 0.0;
  double runtime_ratio = 0.0;
};

/// Picks the cell minimizing normalized energy subject to the runtime ratio
/// staying within 1 + perf_loss_budget. Ties break toward lower runtime,
/// then lower cap, then fewer cores.
inline TradeoffCell best_tradeoff(const EffMatrix& energy, const EffMatrix& runtime,
                                  double perf_loss_budget) {
  if (!energy.same_shape(runtime)) {
    throw PreconditionError("energy and runtime matrices must share axes and baseline");
  }
  if (perf_loss_budget < 0) {
    throw PreconditionError("performance loss budget must be nonnegative");
  }
  std::optional<TradeoffCell> best;
  for (std::size_t i = 0; i < energy.caps_w.size(); ++i) {
    for (std::size_t j = 0; j < energy.core_counts.size(); ++j) {
      const auto& e = energy.values[i][j];
      const auto& t = runtime.values[i][j];
      if (!e || !t) {
        continue;
      }
      if (*t > 1.0 + perf_loss_budget) {
        continue;
      }
      TradeoffCell cell{energy.caps_w[i], energy.core_counts[j], *e, *t};
      if (!best ||
          std::make_tuple(cell.energy_ratio, cell.runtime_ratio, cell.cap_w, cell.cores) <
              std::make_tuple(best->energy_ratio, best->runtime_ratio, best->cap_w,
                              best->cores)) {
        best = cell;
      }
    }
  }
  if (!best) {
    throw InfeasibleError("no cell satisfies the performance budget");
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Plot-data exports (deterministic ordering, documented schemas)
// ---------------------------------------------------------------------------

namespace detail {

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

inline std::string format_ratio(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace detail

/// Long-form matrix export: cap_w,cores,value,n_trials. Missing cells keep
/// an empty value field rather than a fake zero.
inline void export_matrix_csv(const EffMatrix& m, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "cap_w,cores,value,n_trials\n";
  for (std::size_t i = 0; i < m.caps_w.size(); ++i) {
    for (std::size_t j = 0; j < m.core_counts.size(); ++j) {
      out << m.caps_w[i] << ',' << m.core_counts[j] << ',';
      if (m.values[i][j]) {
        out << detail::format_ratio(*m.values[i][j]);
      }
      out << ',' << m.n_trials[i][j] << '\n';
    }
  }
}

/// Frequency histogram export: cap_w,cores,bin_lo_khz,bin_hi_khz,count.
inline void export_freq_hist_csv(
    const std::vector<std::tuple<int, int, telemetry::FreqDistribution>>& dists,
    const fs::path& path) {
  auto out = detail::open_out(path);
  out << "cap_w,cores,bin_lo_khz,bin_hi_khz,count\n";
  for (const auto& [cap, cores, dist] : dists) {
    for (const auto& bin : dist.bins) {
      out << cap << ',' << cores << ',' << bin.lo_khz << ',' << bin.hi_khz << ',' << bin.count
          << '\n';
    }
  }
}

/// Stall series export: workload,cap_w,mean_stall_ratio.
inline void export_stall_csv(const std::vector<StallRange>& ranges, const fs::path& path) {
  auto out = detail::open_out(path);
  out << "workload,cap_w,mean_stall_ratio\n";
  for (const auto& range : ranges) {
    for (const auto& [cap, ratio] : range.per_cap) {
      out << range.workload << ',' << cap << ',' << detail::format_ratio(ratio) << '\n';
    }
  }
}

/// Human-readable summary: baseline, best trade-off at a few budgets, and
/// how the 80%-of-TDP rule of thumb compares.
inline std::string summary_report(const EffMatrix& energy, const EffMatrix& runtime,
                                  const std::vector<double>& budgets, int rule_of_thumb_cap_w) {
  std::ostringstream out;
  out << "baseline: " << energy.baseline_cap_w << " W x " << energy.baseline_cores
      << " cores (" << metric_name(energy.metric) << " ratio 1)\n";
  for (double budget : budgets) {
    out << "budget " << detail::format_ratio(budget * 100) << "%: ";
    try {
      TradeoffCell cell = best_tradeoff(energy, runtime, budget);
      out << cell.cap_w << " W x " << cell.cores << " cores, energy ratio "
          << detail::format_ratio(cell.energy_ratio) << " (gain "
          << detail::format_ratio((1.0 - cell.energy_ratio) * 100) << "%), runtime ratio "
          << detail::format_ratio(cell.runtime_ratio) << '\n';
    } catch (const InfeasibleError&) {
      out << "infeasible\n";
    }
  }
  out << "rule of thumb cap: " << rule_of_thumb_cap_w << " W";
  auto e = energy.at(rule_of_thumb_cap_w, energy.baseline_cores);
  auto t = runtime.at(rule_of_thumb_cap_w, runtime.baseline_cores);
  if (e && t) {
    out << " at " << energy.baseline_cores << " cores: energy ratio "
        << detail::format_ratio(*e) << ", runtime ratio " << detail::format_ratio(*t);
  } else {
    out << " (not on the measured grid)";
  }
  out << '\n';
  return out.str();
}

}  // namespace captune::analysis

#endif  // CAPTUNE_ANALYSIS_HPP
