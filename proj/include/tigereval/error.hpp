// Copyright 2026 The tigereval Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace tigereval {

/// Process exit codes used by the command-line tool.
enum class ExitCode : int {
    kSuccess = 0,
    kUsage = 1,
    kData = 2,
    kBackend = 3,
};

/// Base class of every error raised by the library. Carries the exit code
/// the CLI should report when the error escapes to the top level.
class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad configuration or command-line usage.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Unreadable, malformed or inconsistent input data.
class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ExitCode::kData, what) {}
};

/// Model loading or inference failure.
class BackendError : public Error {
public:
    explicit BackendError(const std::string& what) : Error(ExitCode::kBackend, what) {}
};

}  // namespace tigereval
