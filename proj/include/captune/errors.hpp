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

#ifndef CAPTUNE_ERRORS_HPP
#define CAPTUNE_ERRORS_HPP

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace captune {

/// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A precondition stated in an operation's contract was violated by the
/// caller (bad argument, out-of-range value). CLI maps these to exit 2.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A sysfs-style attribute file did not contain what the layout promises.
/// The message always names the offending file.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Thrown when a multi-file write sequence fails partway. Carries the
/// writes that did succeed so the caller can roll them back.
class PartialWriteError : public Error {
 public:
  struct CompletedWrite {
    std::filesystem::path path;
    std::string value;
  };

  PartialWriteError(const std::string& what, std::vector<CompletedWrite> completed)
      : Error(what), completed_(std::move(completed)) {}

  const std::vector<CompletedWrite>& completed() const { return completed_; }

 private:
  std::vector<CompletedWrite> completed_;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class SourceUnavailableError : public Error {
 public:
  explicit SourceUnavailableError(const std::string& source)
      : Error("telemetry source unavailable: " + source), source_(source) {}

  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

class UndefinedRatioError : public Error {
 public:
  using Error::Error;
};

class EmptyDistributionError : public Error {
 public:
  using Error::Error;
};

class HotplugError : public Error {
 public:
  using Error::Error;
};

/// A write appeared to succeed but reading the attribute back disagreed.
class VerificationError : public Error {
 public:
  using Error::Error;
};

class BaselineMissingError : public Error {
 public:
  using Error::Error;
};

class NoCycleDataError : public Error {
 public:
  using Error::Error;
};

class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace captune

#endif  // CAPTUNE_ERRORS_HPP
