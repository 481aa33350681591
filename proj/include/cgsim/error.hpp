#pragma once

#include <stdexcept>
#include <string>

namespace cgsim {

// Base of every error raised by the library. The CLI maps ParseError and
// UsageError to exit status 1 and everything else to 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(int line, const std::string& msg)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

class ElaborationError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DeviceError : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  SingularMatrix(std::string node, std::size_t row)
      : Error("singular matrix at unknown '" + node + "'"), node_(std::move(node)), row_(row) {}

  const std::string& node() const noexcept { return node_; }
  std::size_t row() const noexcept { return row_; }

 private:
  std::string node_;
  std::size_t row_;
};

class NonConvergence : public Error {
 public:
  NonConvergence(double time, const std::string& msg)
      : Error(msg + " (t = " + std::to_string(time) + " s)"), time_(time) {}

  double time() const noexcept { return time_; }

 private:
  double time_;
};

class MeasurementError : public Error {
 public:
  using Error::Error;
};

}  // namespace cgsim
