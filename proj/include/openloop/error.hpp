// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace openloop
{

/// Base of every error raised by the runtime. what() is "<Kind>: <detail>" so
/// that errors can be fed back to the model verbatim.
class Error: public std::runtime_error
{
  public:
    Error(std::string kind, std::string detail):
        std::runtime_error(kind + ": " + detail), _kind(std::move(kind)), _detail(std::move(detail))
    {
    }

    const std::string& kind() const noexcept { return _kind; }
    const std::string& detail() const noexcept { return _detail; }

  private:
    std::string _kind;
    std::string _detail;
};

/// Invalid configuration file or command-line flags.
class ConfigError: public Error
{
  public:
    explicit ConfigError(std::string detail): Error("ConfigError", std::move(detail)) {}
};

/// Long-term memory could not be read or written.
class StorageError: public Error
{
  public:
    explicit StorageError(std::string detail): Error("StorageError", std::move(detail)) {}
};

} // namespace openloop
