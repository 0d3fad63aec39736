#ifndef RSTAR_ERRORS_HPP
#define RSTAR_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rstar {

// Error categories map onto CLI exit codes: validation -> 2,
// numerical -> 3, I/O -> 4.
class Error : public std::runtime_error {
 public:
  enum class Kind { Validation = 2, Numerical = 3, Io = 4 };
  Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(Kind::Validation, msg) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg) : Error(Kind::Numerical, msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(Kind::Io, msg) {}
};

}  // namespace rstar

#endif  // RSTAR_ERRORS_HPP
