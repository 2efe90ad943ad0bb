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

#ifndef CAPTUNE_CAMPAIGN_HPP
#define CAPTUNE_CAMPAIGN_HPP

#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "captune/errors.hpp"
#include "captune/powercap.hpp"
#include "captune/simcpu.hpp"
#include "captune/sysfs.hpp"
#include "captune/telemetry.hpp"

namespace captune::campaign {

namespace fs = std::filesystem;

/// External command workload: argv, extra environment, optional working
/// directory. "{threads}" in argv or env values is replaced by the run's
/// thread count, and OMP_NUM_THREADS is always set to it.
struct WorkloadCommand {
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;
  std::string workdir;
};

/// A named workload: either a command (real backend) or a synthetic
/// simulator workload.
struct Workload {
  std::string name;
  std::optional<WorkloadCommand> command;
  std::optional<sim::WorkloadSpec> sim_spec;
};

/// One grid point: cap, core count, workload, trial. Threads always equal
/// cores; oversubscription is not a supported configuration.
struct RunConfig {
  std::string workload;
  int cap_w = 150;
  int cores = 1;
  int threads = 1;
  int trial = 1;
};

struct RunResult {
  RunConfig config;
  double runtime_s = 0.0;
  double energy_rapl_j = 0.0;
  std::optional<double> energy_supply_j;
  std::optional<telemetry::CycleCounts> cycles;
  std::optional<std::string> trace_ref;
  int exit_status = 0;

  bool ok() const { return exit_status == 0; }

  double stall_ratio_or(double fallback) const {
    if (cycles && cycles->total > 0) {
      return telemetry::stall_ratio(*cycles);
    }
    return fallback;
  }
};

inline std::vector<int> default_cap_sweep() {
  std::vector<int> caps;
  for (int c = 70; c <= 180; c += 10) {
    caps.push_back(c);
  }
  return caps;
}

struct CampaignSpec {
  std::vector<int> caps_w = default_cap_sweep();
  std::vector<int> core_counts;
  int trials = 1;
  int baseline_cap_w = 150;
  int baseline_cores = 64;
  std::vector<Workload> workloads;
  fs::path output_dir;
  double inter_point_delay_s = 0.0;
  bool save_traces = false;

  void validate() const {
    if (caps_w.empty() || core_counts.empty()) {
      throw PreconditionError("campaign needs at least one cap and one core count");
    }
    if (trials < 0) {
      throw PreconditionError("trials must be nonnegative");
    }
    if (workloads.empty()) {
      throw PreconditionError("campaign needs at least one workload");
    }
    for (int c : caps_w) {
      if (c < 1) {
        throw PreconditionError("power caps must be positive");
      }
    }
    for (int n : core_counts) {
      if (n < 1) {
        throw PreconditionError("core counts must be positive");
      }
    }
    bool cap_ok = std::find(caps_w.begin(), caps_w.end(), baseline_cap_w) != caps_w.end();
    bool cores_ok =
        std::find(core_counts.begin(), core_counts.end(), baseline_cores) != core_counts.end();
    if (!cap_ok || !cores_ok) {
      throw PreconditionError("baseline cell (" + std::to_string(baseline_cap_w) + " W, " +
                              std::to_string(baseline_cores) + " cores) is not on the grid");
    }
  }
};

// ---------------------------------------------------------------------------
// CPU topology and hotplug
// ---------------------------------------------------------------------------

struct CpuTopology {
  fs::path cpu_root = telemetry::kDefaultCpuRoot;
  int total_cores = 0;
  std::vector<int> socket_of;  // logical core -> package id

  int sockets() const {
    int max_id = -1;
    for (int s : socket_of) {
      max_id = std::max(max_id, s);
    }
    return max_id + 1;
  }
};

/// Counts cpu<N> directories and reads each core's package id where the
/// kernel exposes it; cores without one land on package 0.
inline CpuTopology discover_topology(const fs::path& cpu_root) {
  if (!fs::exists(cpu_root)) {
    throw NotFoundError("cpu root not found: " + cpu_root.string());
  }
  CpuTopology topo;
  topo.cpu_root = cpu_root;
  int n = 0;
  while (fs::is_directory(cpu_root / ("cpu" + std::to_string(n)))) {
    ++n;
  }
  topo.total_cores = n;
  topo.socket_of.assign(n, 0);
  for (int core = 0; core < n; ++core) {
    fs::path id = cpu_root / ("cpu" + std::to_string(core)) / "topology" / "physical_package_id";
    if (fs::exists(id)) {
      try {
        topo.socket_of[core] = static_cast<int>(sysfs::read_int(id));
      } catch (const Error&) {
        topo.socket_of[core] = 0;
      }
    }
  }
  return topo;
}

inline std::string core_mask_string(int n) {
  return n == 1 ? std::string("0") : "0-" + std::to_string(n - 1);
}

/// Brings cores 0..n-1 online by writing the contiguous range string to the
/// online attribute, then reads it back to verify the kernel applied it.
inline std::string set_online_cores(int n, const CpuTopology& topo) {
  if (n < 1 || n > topo.total_cores) {
    throw PreconditionError("core count out of range: " + std::to_string(n) + " (1.." +
                            std::to_string(topo.total_cores) + ")");
  }
  const std::string mask = core_mask_string(n);
  const fs::path attr = topo.cpu_root / "online";
  try {
    sysfs::write_text(attr, mask + "\n");
  } catch (const IoError& e) {
    throw HotplugError(std::string("cannot set online cores: ") + e.what());
  }
  std::string applied = sysfs::read_line(attr);
  if (applied != mask) {
    throw VerificationError("online mask read back as \"" + applied + "\", expected \"" + mask +
                            "\"");
  }
  return applied;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// Exact pre-campaign contents of every attribute a campaign may touch.
using StateSnapshot = std::map<std::string, std::string>;

struct MeasureOutcome {
  RunResult result;
  std::optional<telemetry::Trace> trace;
};

/// The machine under test: either the real sysfs interfaces or the
/// deterministic simulator. run_point/run_grid drive this interface only.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string name() const = 0;
  virtual int max_cores() const = 0;
  /// Validates the workload is runnable. Must not mutate any state.
  virtual void check_workload(const Workload& w) = 0;
  virtual void apply_cap(int watts) = 0;
  virtual void apply_cores(int n) = 0;
  virtual StateSnapshot snapshot() = 0;
  virtual void restore(const StateSnapshot& snap) = 0;
  virtual MeasureOutcome measure(const RunConfig& config, const Workload& w) = 0;
};

/// Simulator-backed campaign backend. Fully deterministic; "state" is just
/// the cap/cores it would have applied to hardware.
class SimBackend : public Backend {
 public:
  explicit SimBackend(sim::PowerModelParams params = sim::calibrate_defaults(32),
                      sim::SimOptions options = {}, double supply_overhead_w = 60.0)
      : params_(params), options_(options), supply_overhead_w_(supply_overhead_w) {}

  std::string name() const override { return "sim"; }
  int max_cores() const override { return params_.total_cores(); }

  void check_workload(const Workload& w) override { resolve_spec(w); }

  void apply_cap(int watts) override {
    if (watts < 1) {
      throw PreconditionError("power cap must be at least 1 W");
    }
    cap_w_ = watts;
  }

  void apply_cores(int n) override {
    if (n < 1 || n > max_cores()) {
      throw PreconditionError("core count out of range: " + std::to_string(n));
    }
    cores_ = n;
  }

  StateSnapshot snapshot() override {
    return {{"cap_w", std::to_string(cap_w_)}, {"cores", std::to_string(cores_)}};
  }

  void restore(const StateSnapshot& snap) override {
    cap_w_ = std::stoi(snap.at("cap_w"));
    cores_ = std::stoi(snap.at("cores"));
  }

  MeasureOutcome measure(const RunConfig& config, const Workload& w) override {
    sim::WorkloadSpec spec = resolve_spec(w);
    sim::SimResult r = sim::simulate_run(params_, spec, config.cap_w, config.cores, options_);

    MeasureOutcome outcome;
    outcome.result.config = config;
    outcome.result.runtime_s = r.runtime_s;
    outcome.result.energy_rapl_j = r.energy_j;
    outcome.result.energy_supply_j = r.energy_j + supply_overhead_w_ * r.runtime_s;
    outcome.result.cycles = telemetry::CycleCounts{r.stalled_cycles, r.total_cycles};
    outcome.result.exit_status = 0;
    outcome.trace = to_trace(r, config.cores);
    return outcome;
  }

  const sim::PowerModelParams& params() const { return params_; }

  /// Renders a simulation trace in the sampler's Trace shape so the same
  /// analysis/export paths serve both backends.
  telemetry::Trace to_trace(const sim::SimResult& r, int cores) const {
    telemetry::Trace trace;
    trace.topology.num_cores = cores;
    trace.nominal_rate_hz = 1000.0 / (options_.dt_ms * std::max(1, options_.trace_stride));
    for (int s = 0; s < params_.sockets; ++s) {
      trace.topology.zone_names.push_back("package-" + std::to_string(s));
    }
    for (const auto& sample : r.trace) {
      telemetry::Sample out;
      out.t_ns = static_cast<std::int64_t>(std::llround(sample.t_s * 1e9));
      for (int core = 0; core < cores; ++core) {
        int socket = std::min(core / params_.cores_per_socket, params_.sockets - 1);
        double ghz = socket < static_cast<int>(sample.freq_ghz.size())
                         ? sample.freq_ghz[socket]
                         : params_.f_min_ghz;
        out.core_freq_khz.push_back(static_cast<std::int64_t>(std::llround(ghz * 1e6)));
      }
      for (double joules : sample.energy_j) {
        out.zone_energy_uj.push_back(static_cast<std::int64_t>(std::llround(joules * 1e6)));
      }
      out.supply_watts = sample.power_w + supply_overhead_w_;
      trace.samples.push_back(std::move(out));
    }
    return trace;
  }

 private:
  sim::WorkloadSpec resolve_spec(const Workload& w) const {
    if (w.sim_spec) {
      return *w.sim_spec;
    }
    return sim::WorkloadSpec::by_label(w.name);  // throws if unknown
  }

  sim::PowerModelParams params_;
  sim::SimOptions options_;
  double supply_overhead_w_;
  int cap_w_ = 150;
  int cores_ = 0;
};

namespace detail {

inline bool is_executable_file(const fs::path& p) {
  struct ::stat st {};
  return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && (st.st_mode & S_IXUSR);
}

inline void require_resolvable(const std::string& arg0) {
  if (arg0.empty()) {
    throw PreconditionError("workload command is empty");
  }
  if (arg0.find('/') != std::string::npos) {
    if (!is_executable_file(arg0)) {
      throw NotFoundError("workload command not executable: " + arg0);
    }
    return;
  }
  const char* path_env = std::getenv("PATH");
  std::string path = path_env ? path_env : "";
  std::istringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (!dir.empty() && is_executable_file(fs::path(dir) / arg0)) {
      return;
    }
  }
  throw NotFoundError("workload command not found in PATH: " + arg0);
}

inline std::string substitute_threads(std::string s, int threads) {
  const std::string token = "{threads}";
  std::size_t pos = 0;
  while ((pos = s.find(token, pos)) != std::string::npos) {
    s.replace(pos, token.size(), std::to_string(threads));
  }
  return s;
}

/// fork/exec the workload and wait. Returns the exit code, or 128+signal if
/// it died on one.
inline int run_command(const WorkloadCommand& cmd, int threads) {
  std::vector<std::string> argv_strings;
  argv_strings.reserve(cmd.argv.size());
  for (const auto& a : cmd.argv) {
    argv_strings.push_back(substitute_threads(a, threads));
  }

  pid_t pid = ::fork();
  if (pid < 0) {
    throw IoError("fork failed");
  }
  if (pid == 0) {
    if (!cmd.workdir.empty() && ::chdir(cmd.workdir.c_str()) != 0) {
      std::perror("chdir");
      ::_exit(127);
    }
    ::setenv("OMP_NUM_THREADS", std::to_string(threads).c_str(), 1);
    for (const auto& [key, value] : cmd.env) {
      ::setenv(key.c_str(), substitute_threads(value, threads).c_str(), 1);
    }
    std::vector<char*> argv;
    argv.reserve(argv_strings.size() + 1);
    for (auto& a : argv_strings) {
      argv.push_back(a.data());
    }
    argv.push_back(nullptr);
    ::execvp(argv[0], argv.data());
    std::perror("execvp");
    ::_exit(127);
  }
  int status = 0;
  if (::waitpid(pid, &status, 0) < 0) {
    throw IoError("waitpid failed");
  }
  if (WIFEXITED(status)) {
    return WEXITSTATUS(status);
  }
  if (WIFSIGNALED(status)) {
    return 128 + WTERMSIG(status);
  }
  return -1;
}

}  // namespace detail

struct RealBackendConfig {
  fs::path powercap_root = powercap::kDefaultRaplRoot;
  fs::path cpu_root = telemetry::kDefaultCpuRoot;
  double sampler_rate_hz = 10.0;
  std::set<telemetry::Source> sources = {telemetry::Source::freq, telemetry::Source::rapl};
  std::shared_ptr<telemetry::SupplySource> supply;
  std::shared_ptr<telemetry::CycleSource> cycles;
};

/// Drives an actual machine through the powercap tree, the cpu online
/// attribute and subprocess workloads. Point it at fixture directories to
/// exercise every code path without privileges.
class RealBackend : public Backend {
 public:
  explicit RealBackend(RealBackendConfig config) : config_(std::move(config)) {
    topology_ = discover_topology(config_.cpu_root);
    zones_ = powercap::parse_zone_tree(config_.powercap_root);
    if (config_.sources.count(telemetry::Source::supply) && config_.supply) {
      // fine: adapter provided
    } else if (config_.sources.count(telemetry::Source::supply)) {
      throw SourceUnavailableError("supply");
    }
  }

  std::string name() const override { return "real"; }
  int max_cores() const override { return topology_.total_cores; }

  void check_workload(const Workload& w) override {
    if (!w.command || w.command->argv.empty()) {
      throw PreconditionError("workload \"" + w.name + "\" has no command for the real backend");
    }
    detail::require_resolvable(w.command->argv.front());
  }

  void apply_cap(int watts) override {
    powercap::WriteReport report = powercap::set_power_limit_watts(zones_, watts);
    for (auto& warning : report.warnings) {
      warnings_.push_back(std::move(warning));
    }
  }

  void apply_cores(int n) override { set_online_cores(n, topology_); }

  StateSnapshot snapshot() override {
    StateSnapshot snap;
    for (const auto& zone : zones_) {
      if (!zone.is_package()) {
        continue;
      }
      for (const auto& c : zone.constraints) {
        fs::path attr = zone.path / ("constraint_" + std::to_string(c.index) + "_power_limit_uw");
        snap[attr.string()] = sysfs::read_text(attr);
      }
    }
    fs::path online = topology_.cpu_root / "online";
    snap[online.string()] = sysfs::read_text(online);
    return snap;
  }

  void restore(const StateSnapshot& snap) override {
    for (const auto& [path, contents] : snap) {
      sysfs::write_text(path, contents);
    }
  }

  MeasureOutcome measure(const RunConfig& config, const Workload& w) override {
    telemetry::Topology topo;
    topo.num_cores = topology_.total_cores;
    for (const auto& zone : zones_) {
      topo.zone_names.push_back(zone.name);
    }
    telemetry::SamplerConfig sampler_config;
    sampler_config.cpu_root = config_.cpu_root;
    sampler_config.zones = zones_;
    sampler_config.supply = config_.supply;
    sampler_config.cycles = config_.cycles;

    auto sampler = telemetry::start_sampler(topo, config_.sampler_rate_hz, config_.sources,
                                            sampler_config);

    std::optional<telemetry::CycleCounts> cycles_before;
    if (config_.cycles) {
      cycles_before = config_.cycles->read();
    }
    std::vector<powercap::EnergyReading> energy_before;
    for (const auto& zone : zones_) {
      if (zone.is_package() && zone.enabled) {
        energy_before.push_back(powercap::read_energy(zone));
      }
    }

    auto t0 = std::chrono::steady_clock::now();
    int exit_status = detail::run_command(*w.command, config.threads);
    auto t1 = std::chrono::steady_clock::now();

    std::vector<powercap::EnergyReading> energy_after;
    for (const auto& zone : zones_) {
      if (zone.is_package() && zone.enabled) {
        energy_after.push_back(powercap::read_energy(zone));
      }
    }
    std::optional<telemetry::CycleCounts> cycles_after;
    if (config_.cycles) {
      cycles_after = config_.cycles->read();
    }

    telemetry::Trace trace = telemetry::stop_sampler(sampler);

    MeasureOutcome outcome;
    outcome.result.config = config;
    outcome.result.exit_status = exit_status;
    outcome.result.runtime_s = std::chrono::duration<double>(t1 - t0).count();

    double rapl_j = 0.0;
    std::size_t i = 0;
    for (const auto& zone : zones_) {
      if (!zone.is_package() || !zone.enabled) {
        continue;
      }
      rapl_j += static_cast<double>(powercap::energy_delta_uj(energy_before[i], energy_after[i],
                                                              zone.max_energy_range_uj)) /
                1e6;
      ++i;
    }
    outcome.result.energy_rapl_j = rapl_j;

    if (cycles_before && cycles_after) {
      outcome.result.cycles = telemetry::CycleCounts{
          cycles_after->stalled - cycles_before->stalled,
          cycles_after->total - cycles_before->total};
    }

    std::vector<std::pair<std::int64_t, double>> supply_series;
    for (const auto& s : trace.samples) {
      if (s.supply_watts) {
        supply_series.emplace_back(s.t_ns, *s.supply_watts);
      }
    }
    if (supply_series.size() >= 2) {
      outcome.result.energy_supply_j = telemetry::integrate_power_j(supply_series);
    }

    outcome.trace = std::move(trace);
    return outcome;
  }

  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::vector<powercap::ZoneConfig>& zones() const { return zones_; }
  const CpuTopology& topology() const { return topology_; }

 private:
  RealBackendConfig config_;
  CpuTopology topology_;
  std::vector<powercap::ZoneConfig> zones_;
  std::vector<std::string> warnings_;
};

// ---------------------------------------------------------------------------
// Results persistence (append-only CSV, resume-aware)
// ---------------------------------------------------------------------------

inline const char* kResultsHeader =
    "workload,cap_w,cores,trial,runtime_s,energy_rapl_j,energy_supply_j,"
    "stalled_cycles,total_cycles,exit_status";

namespace detail {

inline std::string format_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail

inline std::string result_csv_row(const RunResult& r) {
  std::ostringstream row;
  row << r.config.workload << ',' << r.config.cap_w << ',' << r.config.cores << ','
      << r.config.trial << ',' << detail::format_double(r.runtime_s) << ','
      << detail::format_double(r.energy_rapl_j) << ',';
  if (r.energy_supply_j) {
    row << detail::format_double(*r.energy_supply_j);
  }
  row << ',';
  if (r.cycles) {
    row << r.cycles->stalled;
  }
  row << ',';
  if (r.cycles) {
    row << r.cycles->total;
  }
  row << ',' << r.exit_status;
  return row.str();
}

inline void append_result(const fs::path& path, const RunResult& r) {
  bool need_header = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) {
    throw IoError("cannot append to " + path.string());
  }
  if (need_header) {
    out << kResultsHeader << '\n';
  }
  out << result_csv_row(r) << '\n';
  out.flush();
}

inline std::vector<RunResult> load_results(const fs::path& path) {
  std::vector<RunResult> results;
  if (!fs::exists(path)) {
    return results;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  std::string line;
  bool first = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (first) {
      first = false;
      if (line == kResultsHeader) {
        continue;
      }
    }
    if (line.empty()) {
      continue;
    }
    auto fields = detail::split_csv_line(line);
    if (fields.size() != 10) {
      throw ParseError("bad results row at " + path.string() + ":" + std::to_string(line_no));
    }
    try {
      RunResult r;
      r.config.workload = fields[0];
      r.config.cap_w = std::stoi(fields[1]);
      r.config.cores = std::stoi(fields[2]);
      r.config.threads = r.config.cores;
      r.config.trial = std::stoi(fields[3]);
      r.runtime_s = std::stod(fields[4]);
      r.energy_rapl_j = std::stod(fields[5]);
      if (!fields[6].empty()) {
        r.energy_supply_j = std::stod(fields[6]);
      }
      if (!fields[7].empty() && !fields[8].empty()) {
        r.cycles = telemetry::CycleCounts{std::stoll(fields[7]), std::stoll(fields[8])};
      }
      r.exit_status = std::stoi(fields[9]);
      results.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ParseError("bad results row at " + path.string() + ":" + std::to_string(line_no));
    }
  }
  return results;
}

// ---------------------------------------------------------------------------
// Point and grid execution
// ---------------------------------------------------------------------------

/// Runs one grid point: validates the workload first (no mutation on an
/// unresolvable command), applies cap and cores, then measures.
inline MeasureOutcome run_point(const RunConfig& config, Backend& backend, const Workload& w) {
  if (config.cap_w < 1) {
    throw PreconditionError("power cap must be at least 1 W");
  }
  if (config.cores < 1 || config.cores > backend.max_cores()) {
    throw PreconditionError("core count out of range: " + std::to_string(config.cores));
  }
  if (config.threads != config.cores) {
    throw PreconditionError("threads must equal cores (" + std::to_string(config.threads) +
                            " != " + std::to_string(config.cores) + ")");
  }
  backend.check_workload(w);
  backend.apply_cap(config.cap_w);
  backend.apply_cores(config.cores);
  return backend.measure(config, w);
}

using PointObserver = std::function<void(const RunResult&)>;

/// Executes the whole measurement grid in deterministic order (workload
/// major, cores descending, caps ascending, trials ascending), appending
/// each result to <output_dir>/results.csv as it lands. Already-recorded
/// points are skipped, so an interrupted campaign resumes where it stopped.
/// Machine state is snapshotted up front and restored on success or abort.
inline std::vector<RunResult> run_grid(const CampaignSpec& spec, Backend& backend,
                                       const PointObserver& observer = {}) {
  spec.validate();

  std::vector<int> cores_desc = spec.core_counts;
  std::sort(cores_desc.begin(), cores_desc.end(), std::greater<int>());
  std::vector<int> caps_asc = spec.caps_w;
  std::sort(caps_asc.begin(), caps_asc.end());

  fs::create_directories(spec.output_dir);
  const fs::path results_path = spec.output_dir / "results.csv";

  std::vector<RunResult> results = load_results(results_path);
  std::set<std::tuple<std::string, int, int, int>> done;
  for (const auto& r : results) {
    done.insert({r.config.workload, r.config.cap_w, r.config.cores, r.config.trial});
  }

  if (spec.trials == 0) {
    return results;
  }

  StateSnapshot snap = backend.snapshot();
  try {
    for (const auto& w : spec.workloads) {
      for (int cores : cores_desc) {
        for (int cap : caps_asc) {
          for (int trial = 1; trial <= spec.trials; ++trial) {
            if (done.count({w.name, cap, cores, trial})) {
              continue;
            }
            RunConfig config;
            config.workload = w.name;
            config.cap_w = cap;
            config.cores = cores;
            config.threads = cores;
            config.trial = trial;

            MeasureOutcome outcome = run_point(config, backend, w);
            if (spec.save_traces && outcome.trace) {
              fs::path trace_dir = spec.output_dir / "traces";
              fs::create_directories(trace_dir);
              std::string stem = w.name + "_" + std::to_string(cap) + "w_" +
                                 std::to_string(cores) + "c_t" + std::to_string(trial);
              telemetry::export_freq_csv(*outcome.trace, trace_dir / (stem + "_freq.csv"));
              telemetry::export_energy_csv(*outcome.trace, trace_dir / (stem + "_energy.csv"));
              outcome.result.trace_ref = "traces/" + stem;
            }

            append_result(results_path, outcome.result);
            done.insert({w.name, cap, cores, trial});
            results.push_back(outcome.result);
            if (observer) {
              observer(outcome.result);
            }
            if (spec.inter_point_delay_s > 0) {
              std::this_thread::sleep_for(
                  std::chrono::duration<double>(spec.inter_point_delay_s));
            }
          }
        }
      }
    }
  } catch (...) {
    backend.restore(snap);
    throw;
  }
  backend.restore(snap);
  return results;
}

}  // namespace captune::campaign

#endif  // CAPTUNE_CAMPAIGN_HPP
