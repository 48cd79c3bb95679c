#include "riemobs/errors.hpp"

#include <sstream>

namespace riemobs {

namespace {

std::string format_point(const std::vector<double>& x) {
  std::ostringstream os;
  os.precision(10);
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) os << ", ";
    os << x[i];
  }
  os << ')';
  return os.str();
}

}  // namespace

PointError::PointError(const std::string& what, std::vector<double> point)
    : Error(what + " at x=" + format_point(point)), point_(std::move(point)) {}

NotPositiveDefinite::NotPositiveDefinite(std::vector<double> x, double lambda_min)
    : PointError("metric not positive definite (lambda_min=" + std::to_string(lambda_min) + ")",
                 std::move(x)),
      lambda_min_(lambda_min) {}

}  // namespace riemobs
