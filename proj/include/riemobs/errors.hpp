#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace riemobs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class UnknownIdentifier : public Error {
 public:
  explicit UnknownIdentifier(std::string name)
      : Error("unknown identifier '" + name + "'"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// sqrt of a negative, log of a non-positive, division by zero, ...
class DomainError : public Error {
 public:
  DomainError(const std::string& what, std::string subexpr)
      : Error(what + " in '" + subexpr + "'"), subexpr_(std::move(subexpr)) {}
  const std::string& subexpression() const { return subexpr_; }

 private:
  std::string subexpr_;
};

/// Carries the state at which the failure happened.
class PointError : public Error {
 public:
  PointError(const std::string& what, std::vector<double> point);
  const std::vector<double>& point() const { return point_; }

 private:
  std::vector<double> point_;
};

class NotPositiveDefinite : public PointError {
 public:
  NotPositiveDefinite(std::vector<double> x, double lambda_min);
  double lambda_min() const { return lambda_min_; }

 private:
  double lambda_min_;
};

class SingularJacobian : public PointError {
 public:
  explicit SingularJacobian(std::vector<double> x)
      : PointError("singular Jacobian", std::move(x)) {}
};

class SingularMetric : public PointError {
 public:
  explicit SingularMetric(std::vector<double> x)
      : PointError("singular metric", std::move(x)) {}
};

class Infeasible : public PointError {
 public:
  explicit Infeasible(std::vector<double> x)
      : PointError("no admissible rho at q -> 0+", std::move(x)) {}
};

class IntegrationFailure : public Error {
 public:
  IntegrationFailure(const std::string& what, double t)
      : Error(what + " at t=" + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class DomainExit : public Error {
 public:
  explicit DomainExit(double t)
      : Error("trajectory left the domain box at t=" + std::to_string(t)), time_(t) {}
  double time() const { return time_; }

 private:
  double time_;
};

class ZeroVelocity : public Error {
 public:
  ZeroVelocity() : Error("zero velocity cannot be normalized") {}
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(double best_residual)
      : Error("geodesic shooting did not converge, best residual " +
              std::to_string(best_residual)),
        best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, int line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(what) {}
};

}  // namespace riemobs
