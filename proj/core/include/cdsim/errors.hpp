#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdsim {

/// Base of every error raised by the library. The CLI maps ConfigError to
/// exit code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A polynomial product or bracket exceeded the configured total-degree cap.
class DegreeOverflow : public Error {
 public:
  DegreeOverflow(int degree, int cap)
      : Error("polynomial degree " + std::to_string(degree) +
              " exceeds cap " + std::to_string(cap)),
        degree_(degree),
        cap_(cap) {}
  int degree() const noexcept { return degree_; }
  int cap() const noexcept { return cap_; }

 private:
  int degree_;
  int cap_;
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// A trajectory left the finite range. Carries the ensemble index when known.
class NonFinite : public Error {
 public:
  NonFinite(const std::string& what, std::size_t point_index)
      : Error(what + " (point " + std::to_string(point_index) + ")"),
        point_index_(point_index) {}
  std::size_t point_index() const noexcept { return point_index_; }

 private:
  std::size_t point_index_;
};

class RejectionStall : public Error {
 public:
  using Error::Error;
};

class SingularSystem : public Error {
 public:
  using Error::Error;
};

class MomentMismatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdsim
