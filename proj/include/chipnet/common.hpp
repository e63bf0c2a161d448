#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace chipnet {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value is outside the domain an operation accepts.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Tensor/grid dimensions do not match what an operation requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input bytes or text do not follow the expected format.
class MalformedDataError : public Error {
 public:
  using Error::Error;
};

/// A frame with no points where at least one was required.
class EmptyFrameError : public MalformedDataError {
 public:
  using MalformedDataError::MalformedDataError;
};

/// Text parse failure; the message carries the 1-based line number.
class CsvParseError : public MalformedDataError {
 public:
  CsvParseError(std::size_t line, const std::string& what)
      : MalformedDataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Spherical angles are undefined for the origin point.
class UndefinedAngleError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A point lies behind the camera plane.
class BehindCameraError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Homogeneous divide by zero during projection.
class UndefinedProjectionError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// An object was constructed or combined with incompatible settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An operation was called in the wrong order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, short read, write error).
class IoError : public Error {
 public:
  using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * (kPi / 180.0); }
inline double rad_to_deg(double rad) { return rad * (180.0 / kPi); }

}  // namespace chipnet
