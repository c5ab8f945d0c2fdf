// Copyright 2026 The cfcore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cfcore {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A domain invariant does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Binary file with the wrong magic, version or size.
class FormatError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Remote service failed after all retries, or returned an unusable payload.
class RemoteError : public Error {
 public:
  RemoteError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Numerical divergence during training (NaN / inf loss or gradient).
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was invoked before the stage that produces its input.
class MissingArtifactError : public Error {
 public:
  MissingArtifactError(const std::string& artifact, const std::string& command)
      : Error("missing artifact '" + artifact + "'; run '" + command + "' first"),
        command_(command) {}
  const std::string& required_command() const { return command_; }

 private:
  std::string command_;
};

}  // namespace cfcore
