#pragma once

#include <stdexcept>
#include <string>

namespace a3 {

/// Base of every error raised by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed configuration text. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string field, int line = 0)
      : Error(what), field_(std::move(field)), line_(line) {}
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A weight slice does not fit the crossbar it is mapped onto.
class MappingError : public Error {
 public:
  using Error::Error;
};

/// A weight cannot be encoded in the cell range of the storage mode.
class ProgrammingError : public Error {
 public:
  using Error::Error;
};

class ScheduleError : public Error {
 public:
  ScheduleError(const std::string& what, int layer = 0) : Error(what), layer_(layer) {}
  /// 1-based offending layer, 0 when not layer specific.
  int layer() const { return layer_; }

 private:
  int layer_;
};

class DerivationError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration) : Error(what), iteration_(iteration) {}
  int iteration() const { return iteration_; }

 private:
  int iteration_;
};

class TensorFormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace a3
