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

#ifndef CAPTUNE_SYSFS_HPP
#define CAPTUNE_SYSFS_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "captune/errors.hpp"

namespace captune::sysfs {

/// Reads a whole attribute file. Sysfs attributes are single short values,
/// so slurping is fine.
inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read " + path.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failed on " + path.string());
  }
  return out.str();
}

inline std::string trim(const std::string& s) {
  const char* ws = " \t\r\n";
  auto begin = s.find_first_not_of(ws);
  if (begin == std::string::npos) {
    return "";
  }
  auto end = s.find_last_not_of(ws);
  return s.substr(begin, end - begin + 1);
}

/// Strict decimal parse of an attribute file: the trimmed content must be
/// one base-10 integer and nothing else.
inline std::int64_t read_int(const std::filesystem::path& path) {
  std::string text = trim(read_text(path));
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError("not an integer in " + path.string() + ": \"" + text + "\"");
  }
  return value;
}

inline std::string read_line(const std::filesystem::path& path) {
  return trim(read_text(path));
}

/// Whole-file truncating write, the way `echo value > attr` behaves.
inline void write_text(const std::filesystem::path& path, const std::string& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << value;
  out.flush();
  if (!out) {
    throw IoError("write failed on " + path.string());
  }
}

}  // namespace captune::sysfs

#endif  // CAPTUNE_SYSFS_HPP
