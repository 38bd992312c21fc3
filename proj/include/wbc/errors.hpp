#pragma once

#include <stdexcept>
#include <string>

namespace wbc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Carries the name of the offending link/joint/frame.
class ValidationError : public Error {
 public:
  ValidationError(std::string entity, const std::string& what)
      : Error(entity + ": " + what), entity_(std::move(entity)) {}
  const std::string& entity() const { return entity_; }

 private:
  std::string entity_;
};

class UnknownFrame : public Error {
 public:
  explicit UnknownFrame(const std::string& name) : Error("unknown frame '" + name + "'") {}
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class NotSkewSymmetric : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class InfeasibleDimensions : public Error {
 public:
  using Error::Error;
};

class SingularKkt : public Error {
 public:
  using Error::Error;
};

class NumericalBlowup : public Error {
 public:
  using Error::Error;
};

class MissingScheduleEntry : public Error {
 public:
  using Error::Error;
};

}  // namespace wbc
