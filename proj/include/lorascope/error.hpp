// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lorascope {

enum class ErrorKind {
  format,
  pairing,
  shape,
  numeric,
  schema,
  parameter,
  population,
  class_balance,
  degeneracy,
  stratification,
  optimization,
  coverage,
  parse,
  range,
  uniqueness,
  io,
  dependency,
  usage,
};

std::string_view to_string(ErrorKind kind);

/// Process exit code used by the CLI for each error kind.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace lorascope
