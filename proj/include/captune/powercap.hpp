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

#ifndef CAPTUNE_POWERCAP_HPP
#define CAPTUNE_POWERCAP_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "captune/errors.hpp"
#include "captune/sysfs.hpp"

namespace captune::powercap {

namespace fs = std::filesystem;

constexpr std::int64_t kMicrowattsPerWatt = 1'000'000;

/// Default location of the powercap RAPL tree on Linux. Every operation
/// takes the root explicitly so tests (and unprivileged users) can point
/// the whole toolkit at a fixture directory instead.
inline const char* kDefaultRaplRoot = "/sys/class/powercap/intel-rapl";

/// One (power limit, time window) pair of a zone. Index K maps to the
/// constraint_K_* attribute files.
struct ConstraintConfig {
  int index = 0;
  std::string name;  // "long_term" or "short_term" on package zones
  std::int64_t power_limit_uw = 0;
  std::int64_t time_window_us = 0;
  std::optional<std::int64_t> max_power_uw;  // advisory ceiling, may be absent

  bool known_name() const { return name == "long_term" || name == "short_term"; }

  bool operator==(const ConstraintConfig&) const = default;
};

/// A RAPL power zone (package or subzone such as dram), as laid out on disk.
struct ZoneConfig {
  int index = 0;
  std::string name;
  bool enabled = false;
  std::int64_t max_energy_range_uj = 0;
  std::vector<ConstraintConfig> constraints;
  std::vector<ZoneConfig> subzones;

  /// Directory this zone was parsed from (or written to). Not part of the
  /// zone's identity.
  fs::path path;

  bool is_package() const { return name.rfind("package", 0) == 0; }

  friend bool operator==(const ZoneConfig& a, const ZoneConfig& b) {
    return a.index == b.index && a.name == b.name && a.enabled == b.enabled &&
           a.max_energy_range_uj == b.max_energy_range_uj &&
           a.constraints == b.constraints && a.subzones == b.subzones;
  }
};

/// Snapshot of a zone's wrapping energy counter.
struct EnergyReading {
  int zone_index = 0;
  std::int64_t energy_uj = 0;
  std::int64_t timestamp_ns = 0;
};

struct WriteRecord {
  fs::path path;
  std::string value;

  bool operator==(const WriteRecord&) const = default;
};

struct WriteReport {
  std::vector<WriteRecord> writes;
  std::vector<std::string> warnings;
};

inline std::int64_t monotonic_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

namespace detail {

/// Matches "intel-rapl:<digits>" or "intel-rapl:<digits>:<digits>" and
/// returns the last index component.
inline std::optional<int> zone_dir_index(const std::string& dirname, int depth) {
  const std::string prefix = "intel-rapl:";
  if (dirname.rfind(prefix, 0) != 0) {
    return std::nullopt;
  }
  std::string rest = dirname.substr(prefix.size());
  std::vector<std::string> parts;
  std::string cur;
  for (char c : rest) {
    if (c == ':') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (static_cast<int>(parts.size()) != depth) {
    return std::nullopt;
  }
  for (const auto& p : parts) {
    if (p.empty() || p.find_first_not_of("0123456789") != std::string::npos) {
      return std::nullopt;
    }
  }
  return std::stoi(parts.back());
}

inline ZoneConfig parse_zone_dir(const fs::path& dir, int index, int depth) {
  ZoneConfig zone;
  zone.index = index;
  zone.path = dir;
  zone.name = sysfs::read_line(dir / "name");
  zone.enabled = sysfs::read_int(dir / "enabled") != 0;
  zone.max_energy_range_uj = sysfs::read_int(dir / "max_energy_range_uj");

  // Constraints are discovered from the files actually present, so sparse
  // or extra indices round-trip unchanged.
  std::vector<int> constraint_ids;
  std::vector<std::pair<int, std::string>> subdirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string base = entry.path().filename().string();
    const std::string pre = "constraint_";
    const std::string post = "_power_limit_uw";
    if (base.rfind(pre, 0) == 0 && base.size() > pre.size() + post.size() &&
        base.compare(base.size() - post.size(), post.size(), post) == 0) {
      std::string mid = base.substr(pre.size(), base.size() - pre.size() - post.size());
      if (!mid.empty() && mid.find_first_not_of("0123456789") == std::string::npos) {
        constraint_ids.push_back(std::stoi(mid));
      }
    } else if (entry.is_directory()) {
      if (auto sub = zone_dir_index(base, depth + 1)) {
        subdirs.emplace_back(*sub, base);
      }
    }
  }

  std::sort(constraint_ids.begin(), constraint_ids.end());
  for (int k : constraint_ids) {
    ConstraintConfig c;
    c.index = k;
    std::string stem = "constraint_" + std::to_string(k) + "_";
    c.name = sysfs::read_line(dir / (stem + "name"));
    c.power_limit_uw = sysfs::read_int(dir / (stem + "power_limit_uw"));
    c.time_window_us = sysfs::read_int(dir / (stem + "time_window_us"));
    fs::path max_power = dir / (stem + "max_power_uw");
    if (fs::exists(max_power)) {
      c.max_power_uw = sysfs::read_int(max_power);
    }
    zone.constraints.push_back(std::move(c));
  }

  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& [sub_index, sub_name] : subdirs) {
    zone.subzones.push_back(parse_zone_dir(dir / sub_name, sub_index, depth + 1));
  }
  return zone;
}

}  // namespace detail

/// Parses the powercap zone tree rooted at `root_path`. Returns top-level
/// zones sorted by index, with subzones nested. Every integer attribute is
/// parsed strictly; a malformed file raises ParseError naming it.
inline std::vector<ZoneConfig> parse_zone_tree(const fs::path& root_path) {
  if (!fs::exists(root_path)) {
    throw NotFoundError("powercap root not found: " + root_path.string());
  }
  if (!fs::is_directory(root_path)) {
    throw NotFoundError("powercap root is not a directory: " + root_path.string());
  }
  std::vector<std::pair<int, std::string>> tops;
  for (const auto& entry : fs::directory_iterator(root_path)) {
    if (!entry.is_directory()) {
      continue;
    }
    std::string base = entry.path().filename().string();
    if (auto idx = detail::zone_dir_index(base, 1)) {
      tops.emplace_back(*idx, base);
    }
  }
  std::sort(tops.begin(), tops.end());
  std::vector<ZoneConfig> zones;
  zones.reserve(tops.size());
  for (const auto& [index, name] : tops) {
    zones.push_back(detail::parse_zone_dir(root_path / name, index, 1));
  }
  return zones;
}

namespace detail {

inline void write_zone_dir(const fs::path& dir, const ZoneConfig& zone, int depth) {
  fs::create_directories(dir);
  sysfs::write_text(dir / "name", zone.name + "\n");
  sysfs::write_text(dir / "enabled", std::string(zone.enabled ? "1" : "0") + "\n");
  sysfs::write_text(dir / "max_energy_range_uj",
                    std::to_string(zone.max_energy_range_uj) + "\n");
  if (!fs::exists(dir / "energy_uj")) {
    sysfs::write_text(dir / "energy_uj", "0\n");
  }
  for (const auto& c : zone.constraints) {
    std::string stem = "constraint_" + std::to_string(c.index) + "_";
    sysfs::write_text(dir / (stem + "name"), c.name + "\n");
    sysfs::write_text(dir / (stem + "power_limit_uw"),
                      std::to_string(c.power_limit_uw) + "\n");
    sysfs::write_text(dir / (stem + "time_window_us"),
                      std::to_string(c.time_window_us) + "\n");
    if (c.max_power_uw) {
      sysfs::write_text(dir / (stem + "max_power_uw"),
                        std::to_string(*c.max_power_uw) + "\n");
    }
  }
  for (const auto& sub : zone.subzones) {
    std::string sub_dir = dir.filename().string() + ":" + std::to_string(sub.index);
    write_zone_dir(dir / sub_dir, sub, depth + 1);
  }
}

}  // namespace detail

/// Writes a zone tree as a powercap-layout directory (the inverse of
/// parse_zone_tree). Existing energy_uj counters are preserved so a fixture
/// can be re-written without resetting its counters.
inline void write_zone_tree(const fs::path& root_path, const std::vector<ZoneConfig>& zones) {
  fs::create_directories(root_path);
  for (const auto& zone : zones) {
    detail::write_zone_dir(root_path / ("intel-rapl:" + std::to_string(zone.index)), zone, 1);
  }
}

/// The writes that set_power_limit_watts would perform, without performing
/// them. Order is deterministic: zones by index, then constraint 0, 1.
inline WriteReport plan_power_limit_writes(const std::vector<ZoneConfig>& zones, int watts) {
  if (watts < 1) {
    throw PreconditionError("power cap must be at least 1 W, got " + std::to_string(watts));
  }
  const std::int64_t uw = static_cast<std::int64_t>(watts) * kMicrowattsPerWatt;
  WriteReport report;
  for (const auto& zone : zones) {
    if (!zone.is_package()) {
      continue;  // dram and friends are monitored, never capped
    }
    for (const auto& c : zone.constraints) {
      if (c.index != 0 && c.index != 1) {
        continue;
      }
      std::string stem = "constraint_" + std::to_string(c.index) + "_power_limit_uw";
      report.writes.push_back({zone.path / stem, std::to_string(uw) + "\n"});
      if (c.max_power_uw && uw > *c.max_power_uw) {
        report.warnings.push_back(
            "requested " + std::to_string(watts) + " W exceeds max_power_uw of " +
            zone.name + "/" + c.name + " (" + std::to_string(*c.max_power_uw) + " uW)");
      }
    }
  }
  return report;
}

/// Sets the same power limit on the long_term and short_term constraints of
/// every top-level package zone, mirroring the usual two-constraint cap
/// procedure. Values are written as decimal microwatts with a trailing
/// newline, bit-identical to `echo $((watts * 1000000)) > attr`.
///
/// Exceeding a constraint's advisory max_power_uw produces a warning, not an
/// error. A failed write raises PartialWriteError carrying the writes that
/// did succeed so the caller can roll back.
inline WriteReport set_power_limit_watts(const std::vector<ZoneConfig>& zones, int watts) {
  WriteReport report = plan_power_limit_writes(zones, watts);
  std::vector<PartialWriteError::CompletedWrite> done;
  done.reserve(report.writes.size());
  for (const auto& w : report.writes) {
    try {
      sysfs::write_text(w.path, w.value);
    } catch (const IoError& e) {
      throw PartialWriteError(
          std::string("power limit write failed: ") + e.what() + " (" +
              std::to_string(done.size()) + " of " + std::to_string(report.writes.size()) +
              " writes completed)",
          std::move(done));
    }
    done.push_back({w.path, w.value});
  }
  return report;
}

/// Reads the zone's energy counter with a monotonic timestamp taken right
/// at the read. The counter must be within [0, max_energy_range_uj].
inline EnergyReading read_energy(const ZoneConfig& zone) {
  if (!zone.enabled) {
    throw PreconditionError("zone " + zone.name + " is not enabled");
  }
  EnergyReading reading;
  reading.zone_index = zone.index;
  reading.energy_uj = sysfs::read_int(zone.path / "energy_uj");
  reading.timestamp_ns = monotonic_ns();
  if (reading.energy_uj < 0 || reading.energy_uj > zone.max_energy_range_uj) {
    throw ParseError("energy counter out of range in " + (zone.path / "energy_uj").string() +
                     ": " + std::to_string(reading.energy_uj));
  }
  return reading;
}

/// Difference between two counter snapshots, unwrapping at most one
/// rollover of the max_range_uj counter.
inline std::int64_t energy_delta_uj(const EnergyReading& prev, const EnergyReading& curr,
                                    std::int64_t max_range_uj) {
  if (curr.energy_uj >= prev.energy_uj) {
    return curr.energy_uj - prev.energy_uj;
  }
  return curr.energy_uj + max_range_uj - prev.energy_uj;
}

/// The stock RAPL configuration of the dual-socket reference server this
/// toolkit models: two package zones at 150 W long_term (999424 us window)
/// and 180 W short_term (1952 us window), each with a disabled dram subzone.
inline std::vector<ZoneConfig> default_dual_socket_zones() {
  std::vector<ZoneConfig> zones;
  for (int i = 0; i < 2; ++i) {
    ZoneConfig zone;
    zone.index = i;
    zone.name = "package-" + std::to_string(i);
    zone.enabled = true;
    zone.max_energy_range_uj = 262143328850;
    zone.constraints = {
        {0, "long_term", 150000000, 999424, 150000000},
        {1, "short_term", 180000000, 1952, 376000000},
    };
    ZoneConfig dram;
    dram.index = 0;
    dram.name = "dram";
    dram.enabled = false;
    dram.max_energy_range_uj = 65712999613;
    dram.constraints = {{0, "long_term", 0, 976, 41250000}};
    zone.subzones.push_back(std::move(dram));
    zones.push_back(std::move(zone));
  }
  return zones;
}

/// True if any zone carries a constraint whose name is not one of the two
/// known constraint names. Unknown names are preserved verbatim by the
/// parser; this is the flag the CLI surfaces.
inline std::vector<std::string> unknown_constraint_names(const std::vector<ZoneConfig>& zones) {
  std::vector<std::string> flagged;
  for (const auto& zone : zones) {
    for (const auto& c : zone.constraints) {
      if (!c.known_name()) {
        flagged.push_back(zone.name + ": unknown constraint name \"" + c.name + "\"");
      }
    }
    for (const auto& warning : unknown_constraint_names(zone.subzones)) {
      flagged.push_back(warning);
    }
  }
  return flagged;
}

}  // namespace captune::powercap

#endif  // CAPTUNE_POWERCAP_HPP
