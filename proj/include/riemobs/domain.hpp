#pragma once

#include "riemobs/linalg.hpp"

#include <cstddef>
#include <vector>

namespace riemobs {

/// Axis-aligned box in state space.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  static Box cube(int n, double lo, double hi) {
    return {std::vector<double>(n, lo), std::vector<double>(n, hi)};
  }

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& x) const;
  bool interior(const Vec& x) const;
  /// Nearest point of the box.
  Vec clamp(const Vec& x) const;
  void validate() const;  // finite bounds, lower < upper
};

/// Uniform tensor grid over a box; points enumerated lexicographically with
/// the first axis varying slowest.
class Grid {
 public:
  static constexpr int kDefaultPerAxis = 41;
  static constexpr std::size_t kMaxPoints = 100000;

  /// per_axis is reduced until the total stays within kMaxPoints.
  explicit Grid(Box box, int per_axis = kDefaultPerAxis);
  Grid(Box box, std::vector<int> counts);

  const Box& box() const { return box_; }
  const std::vector<int>& counts() const { return counts_; }
  std::size_t size() const { return size_; }
  Vec point(std::size_t index) const;
  std::vector<int> multi_index(std::size_t index) const;
  double node(int axis, int k) const;

 private:
  Box box_;
  std::vector<int> counts_;
  std::size_t size_ = 0;
};

}  // namespace riemobs
