#pragma once

#include <stdexcept>
#include <string>

namespace eafm {

// Error categories surface as distinct exit codes in the CLI.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

// Malformed input data: bad ids, bad files, inconsistent splits.
class DataError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "data"; }
};

// Shape mismatches and violated call contracts.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "contract"; }
};

// Non-finite values during forward/backward or training divergence.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

}  // namespace eafm
