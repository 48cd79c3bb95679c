#pragma once

#include <optional>
#include <string>
#include <vector>

namespace riemobs {

enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

/// Outcome of a numerical check. A failing report always carries a witness.
struct ConditionReport {
  std::string check;
  Verdict verdict = Verdict::inconclusive;
  double worst_residual = 0.0;
  std::vector<double> witness_point;
  std::optional<std::vector<double>> witness_direction;
  std::optional<double> witness_time;
  std::size_t grid_size = 0;
  double tolerance = 0.0;
  // Points where dh/dx loses rank; listed rather than dropped.
  std::vector<std::vector<double>> rank_deficient_points;
  std::vector<std::string> notes;

  bool passed() const { return verdict == Verdict::pass; }
};

}  // namespace riemobs
