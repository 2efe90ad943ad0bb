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

#ifndef CAPTUNE_TELEMETRY_HPP
#define CAPTUNE_TELEMETRY_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "captune/errors.hpp"
#include "captune/powercap.hpp"
#include "captune/sysfs.hpp"

namespace captune::telemetry {

namespace fs = std::filesystem;

inline const char* kDefaultCpuRoot = "/sys/devices/system/cpu";

/// Cumulative stalled/total CPU cycle counters over some interval.
struct CycleCounts {
  std::int64_t stalled = 0;
  std::int64_t total = 0;
};

/// Ratio of stalled to total cycles.
inline double stall_ratio(const CycleCounts& c) {
  if (c.total == 0) {
    throw UndefinedRatioError("stall ratio undefined: total cycle count is zero");
  }
  if (c.stalled < 0 || c.total < 0 || c.stalled > c.total) {
    throw PreconditionError("invalid cycle counts: stalled=" + std::to_string(c.stalled) +
                            " total=" + std::to_string(c.total));
  }
  return static_cast<double>(c.stalled) / static_cast<double>(c.total);
}

/// One telemetry tick. Offline cores carry -1 in core_freq_khz.
struct Sample {
  std::int64_t t_ns = 0;
  std::vector<std::int64_t> core_freq_khz;
  std::vector<std::int64_t> zone_energy_uj;
  std::optional<double> supply_watts;
  std::optional<CycleCounts> cycles;
};

struct Topology {
  int num_cores = 0;
  std::vector<std::string> zone_names;
};

/// An immutable, time-ordered sampling record of one run.
struct Trace {
  std::vector<Sample> samples;
  Topology topology;
  double nominal_rate_hz = 10.0;
  std::int64_t missed_ticks = 0;
};

enum class Source { freq, rapl, supply, cycles };

/// External supply-power feed. Implementations return the most recent watts
/// value they have seen, or nullopt before the first one arrives.
class SupplySource {
 public:
  virtual ~SupplySource() = default;
  virtual std::optional<double> poll() = 0;
};

/// Tails a file (or FIFO) of `epoch_ms,watts` lines, the wire format of the
/// out-of-band power meter adapter. Lines arriving between polls are
/// consumed in order; the latest complete line wins. Malformed lines are
/// skipped. Any meter client can feed this by redirecting into a file.
class FileSupplySource : public SupplySource {
 public:
  explicit FileSupplySource(fs::path path) : path_(std::move(path)) {}

  std::optional<double> poll() override {
    std::ifstream in(path_, std::ios::binary);
    if (!in) {
      return latest_;
    }
    in.seekg(offset_);
    std::string line;
    while (std::getline(in, line)) {
      if (in.eof() && !line.empty()) {
        break;  // partial line without newline; re-read next poll
      }
      offset_ = in.tellg();
      auto comma = line.find(',');
      if (comma == std::string::npos) {
        continue;
      }
      try {
        latest_ = std::stod(line.substr(comma + 1));
      } catch (const std::exception&) {
        continue;
      }
    }
    return latest_;
  }

 private:
  fs::path path_;
  std::streamoff offset_ = 0;
  std::optional<double> latest_;
};

/// Fixed value, for tests and dry runs.
class ConstantSupplySource : public SupplySource {
 public:
  explicit ConstantSupplySource(double watts) : watts_(watts) {}
  std::optional<double> poll() override { return watts_; }

 private:
  double watts_;
};

/// Cumulative stalled/total cycle counter feed.
class CycleSource {
 public:
  virtual ~CycleSource() = default;
  virtual CycleCounts read() = 0;
};

/// Shells out to a perf-stat-style helper that prints cumulative counters
/// as a single `stalled,total` line.
class CommandCycleSource : public CycleSource {
 public:
  explicit CommandCycleSource(std::string command) : command_(std::move(command)) {}

  CycleCounts read() override {
    FILE* pipe = ::popen(command_.c_str(), "r");
    if (!pipe) {
      throw IoError("cannot run cycle counter command: " + command_);
    }
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe)) {
      output += buf;
    }
    int status = ::pclose(pipe);
    if (status != 0) {
      throw IoError("cycle counter command failed (" + std::to_string(status) + "): " + command_);
    }
    auto comma = output.find(',');
    if (comma == std::string::npos) {
      throw ParseError("cycle counter output not \"stalled,total\": " + sysfs::trim(output));
    }
    try {
      CycleCounts counts;
      counts.stalled = std::stoll(output.substr(0, comma));
      counts.total = std::stoll(output.substr(comma + 1));
      return counts;
    } catch (const std::exception&) {
      throw ParseError("cycle counter output not \"stalled,total\": " + sysfs::trim(output));
    }
  }

 private:
  std::string command_;
};

/// Providers the sampler draws from. Only the sources actually requested
/// need to be configured.
struct SamplerConfig {
  fs::path cpu_root = kDefaultCpuRoot;
  std::vector<powercap::ZoneConfig> zones;  // for Source::rapl
  std::shared_ptr<SupplySource> supply;     // for Source::supply
  std::shared_ptr<CycleSource> cycles;      // for Source::cycles
};

/// Background fixed-rate sampler. Construction validates and starts the
/// sampling thread; stop() joins it and yields the finished Trace. Missed
/// ticks are skipped (recorded in Trace::missed_ticks), never interpolated.
class Sampler {
 public:
  Sampler(Topology topology, double rate_hz, std::set<Source> sources, SamplerConfig config)
      : topology_(std::move(topology)),
        rate_hz_(rate_hz),
        sources_(std::move(sources)),
        config_(std::move(config)) {
    if (rate_hz_ <= 0) {
      throw PreconditionError("sampling rate must be positive, got " + std::to_string(rate_hz_));
    }
    if (sources_.count(Source::supply) && !config_.supply) {
      throw SourceUnavailableError("supply");
    }
    if (sources_.count(Source::cycles) && !config_.cycles) {
      throw SourceUnavailableError("cycles");
    }
    if (sources_.count(Source::rapl) && config_.zones.empty()) {
      throw SourceUnavailableError("rapl");
    }
    if (sources_.count(Source::freq) && !fs::exists(config_.cpu_root)) {
      throw SourceUnavailableError("freq");
    }
    trace_.topology = topology_;
    trace_.nominal_rate_hz = rate_hz_;
    thread_ = std::thread([this] { run(); });
  }

  ~Sampler() {
    if (thread_.joinable()) {
      request_stop();
      thread_.join();
    }
  }

  Sampler(const Sampler&) = delete;
  Sampler& operator=(const Sampler&) = delete;

  /// Stops sampling and returns the completed trace. Calling twice is a
  /// StateError.
  Trace stop() {
    if (stopped_) {
      throw StateError("sampler already stopped");
    }
    request_stop();
    thread_.join();
    stopped_ = true;
    return std::move(trace_);
  }

 private:
  void request_stop() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_requested_ = true;
    }
    cv_.notify_all();
  }

  void run() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / rate_hz_));
    auto next = clock::now();
    std::unique_lock<std::mutex> lock(mutex_);
    while (!stop_requested_) {
      lock.unlock();
      take_sample();
      lock.lock();
      next += period;
      auto now = clock::now();
      if (now > next) {
        // Late: skip whole periods rather than bunching samples up.
        auto behind = now - next;
        auto missed = behind / period + 1;
        trace_.missed_ticks += missed;
        next += missed * period;
      }
      cv_.wait_until(lock, next, [this] { return stop_requested_; });
    }
  }

  void take_sample() {
    Sample s;
    s.t_ns = powercap::monotonic_ns();
    if (sources_.count(Source::freq)) {
      s.core_freq_khz.reserve(topology_.num_cores);
      for (int core = 0; core < topology_.num_cores; ++core) {
        fs::path attr = config_.cpu_root / ("cpu" + std::to_string(core)) / "cpufreq" /
                        "scaling_cur_freq";
        std::int64_t khz = -1;  // offline or unreadable
        if (fs::exists(attr)) {
          try {
            khz = sysfs::read_int(attr);
          } catch (const Error&) {
            khz = -1;
          }
        }
        s.core_freq_khz.push_back(khz);
      }
    }
    if (sources_.count(Source::rapl)) {
      s.zone_energy_uj.reserve(config_.zones.size());
      for (const auto& zone : config_.zones) {
        try {
          s.zone_energy_uj.push_back(powercap::read_energy(zone).energy_uj);
        } catch (const Error&) {
          s.zone_energy_uj.push_back(-1);
        }
      }
    }
    if (sources_.count(Source::supply)) {
      s.supply_watts = config_.supply->poll();
    }
    if (sources_.count(Source::cycles)) {
      try {
        s.cycles = config_.cycles->read();
      } catch (const Error&) {
        s.cycles = std::nullopt;
      }
    }
    trace_.samples.push_back(std::move(s));
  }

  Topology topology_;
  double rate_hz_;
  std::set<Source> sources_;
  SamplerConfig config_;
  Trace trace_;
  std::thread thread_;
  std::mutex mutex_;
  std::condition_variable cv_;
  bool stop_requested_ = false;
  bool stopped_ = false;
};

inline std::unique_ptr<Sampler> start_sampler(Topology topology, double rate_hz,
                                              std::set<Source> sources, SamplerConfig config) {
  return std::make_unique<Sampler>(std::move(topology), rate_hz, std::move(sources),
                                   std::move(config));
}

inline Trace stop_sampler(std::unique_ptr<Sampler>& handle) {
  if (!handle) {
    throw StateError("sampler already stopped");
  }
  Trace trace = handle->stop();
  handle.reset();
  return trace;
}

/// Trapezoidal integral of a (t_ns, watts) series, in joules. Exact for
/// piecewise-linear power and indifferent to uneven spacing, so sampler
/// gaps need no special handling. Fewer than two points integrate to 0.
inline double integrate_power_j(const std::vector<std::pair<std::int64_t, double>>& series,
                                std::vector<std::string>* warnings = nullptr) {
  if (series.size() < 2) {
    if (warnings) {
      warnings->push_back("power series has fewer than 2 points; energy taken as 0 J");
    }
    return 0.0;
  }
  double joules = 0.0;
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i].first <= series[i - 1].first) {
      throw PreconditionError("power series timestamps must be strictly increasing");
    }
    double dt_s = static_cast<double>(series[i].first - series[i - 1].first) / 1e9;
    joules += 0.5 * (series[i].second + series[i - 1].second) * dt_s;
  }
  return joules;
}

struct FreqBin {
  std::int64_t lo_khz = 0;
  std::int64_t hi_khz = 0;
  std::int64_t count = 0;
};

struct FreqDistribution {
  std::int64_t min_khz = 0;
  std::int64_t max_khz = 0;
  std::vector<std::pair<double, double>> percentiles;  // (p, interpolated kHz)
  std::vector<FreqBin> bins;
  std::size_t n_readings = 0;
};

/// Aggregates every (sample x online core) frequency reading of a trace.
/// Percentiles use linear interpolation; the histogram uses 100 MHz bins
/// spanning the 1.2-3.9 GHz ladder by default, with out-of-span readings
/// clamped into the edge bins.
inline FreqDistribution freq_distribution(const Trace& trace,
                                          const std::vector<double>& percentiles,
                                          std::int64_t bin_width_khz = 100000,
                                          std::int64_t span_lo_khz = 1200000,
                                          std::int64_t span_hi_khz = 3900000) {
  std::vector<std::int64_t> readings;
  for (const auto& s : trace.samples) {
    for (std::int64_t khz : s.core_freq_khz) {
      if (khz >= 0) {
        readings.push_back(khz);
      }
    }
  }
  if (readings.empty()) {
    throw EmptyDistributionError("trace carries no core frequency readings");
  }
  std::sort(readings.begin(), readings.end());

  FreqDistribution dist;
  dist.n_readings = readings.size();
  dist.min_khz = readings.front();
  dist.max_khz = readings.back();

  for (double p : percentiles) {
    if (p < 0 || p > 100) {
      throw PreconditionError("percentile out of [0,100]: " + std::to_string(p));
    }
    double rank = p / 100.0 * static_cast<double>(readings.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(rank));
    std::size_t hi = static_cast<std::size_t>(std::ceil(rank));
    double frac = rank - static_cast<double>(lo);
    double value = static_cast<double>(readings[lo]) +
                   frac * static_cast<double>(readings[hi] - readings[lo]);
    dist.percentiles.emplace_back(p, value);
  }

  std::int64_t n_bins = (span_hi_khz - span_lo_khz + bin_width_khz - 1) / bin_width_khz;
  dist.bins.resize(n_bins);
  for (std::int64_t b = 0; b < n_bins; ++b) {
    dist.bins[b].lo_khz = span_lo_khz + b * bin_width_khz;
    dist.bins[b].hi_khz = std::min(span_lo_khz + (b + 1) * bin_width_khz, span_hi_khz);
  }
  for (std::int64_t khz : readings) {
    std::int64_t b = (khz - span_lo_khz) / bin_width_khz;
    b = std::clamp<std::int64_t>(b, 0, n_bins - 1);
    dist.bins[b].count++;
  }
  return dist;
}

/// CSV export: one row per (sample, online core), schema t_ns,core,freq_khz.
inline void export_freq_csv(const Trace& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "t_ns,core,freq_khz\n";
  for (const auto& s : trace.samples) {
    for (std::size_t core = 0; core < s.core_freq_khz.size(); ++core) {
      if (s.core_freq_khz[core] >= 0) {
        out << s.t_ns << ',' << core << ',' << s.core_freq_khz[core] << '\n';
      }
    }
  }
}

/// CSV export: one row per (sample, zone), schema t_ns,zone,energy_uj with a
/// supply_w column appended when any sample carries supply power.
inline void export_energy_csv(const Trace& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  bool any_supply = std::any_of(trace.samples.begin(), trace.samples.end(),
                                [](const Sample& s) { return s.supply_watts.has_value(); });
  out << (any_supply ? "t_ns,zone,energy_uj,supply_w\n" : "t_ns,zone,energy_uj\n");
  char buf[64];
  for (const auto& s : trace.samples) {
    for (std::size_t zone = 0; zone < s.zone_energy_uj.size(); ++zone) {
      out << s.t_ns << ',' << zone << ',' << s.zone_energy_uj[zone];
      if (any_supply) {
        out << ',';
        if (s.supply_watts) {
          std::snprintf(buf, sizeof(buf), "%.6g", *s.supply_watts);
          out << buf;
        }
      }
      out << '\n';
    }
  }
}

}  // namespace captune::telemetry

#endif  // CAPTUNE_TELEMETRY_HPP
