#include "riemobs/domain.hpp"

#include "riemobs/errors.hpp"

#include <cmath>

namespace riemobs {

bool Box::contains(const Vec& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x(i) < lower[i] || x(i) > upper[i]) return false;
  return true;
}

bool Box::interior(const Vec& x) const {
  for (int i = 0; i < dim(); ++i)
    if (x(i) <= lower[i] || x(i) >= upper[i]) return false;
  return true;
}

Vec Box::clamp(const Vec& x) const {
  Vec c = x;
  for (int i = 0; i < dim(); ++i) c(i) = std::min(std::max(x(i), lower[i]), upper[i]);
  return c;
}

void Box::validate() const {
  if (lower.size() != upper.size()) throw ValidationError("domain: bound arity mismatch");
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]))
      throw ValidationError("domain: bounds must be finite");
    if (!(lower[i] < upper[i]))
      throw ValidationError("domain: lower < upper required on axis " + std::to_string(i + 1));
  }
}

Grid::Grid(Box box, int per_axis) : box_(std::move(box)) {
  box_.validate();
  const int n = box_.dim();
  int k = std::max(per_axis, 1);
  while (k > 2 && std::pow(static_cast<double>(k), n) > static_cast<double>(kMaxPoints)) --k;
  counts_.assign(n, k);
  size_ = 1;
  for (int c : counts_) size_ *= static_cast<std::size_t>(c);
}

Grid::Grid(Box box, std::vector<int> counts) : box_(std::move(box)), counts_(std::move(counts)) {
  box_.validate();
  if (static_cast<int>(counts_.size()) != box_.dim())
    throw ValidationError("grid: one count per axis required");
  size_ = 1;
  for (int c : counts_) {
    if (c < 1) throw ValidationError("grid: counts must be positive");
    size_ *= static_cast<std::size_t>(c);
  }
  if (size_ > kMaxPoints) throw ValidationError("grid: too many points");
}

std::vector<int> Grid::multi_index(std::size_t index) const {
  std::vector<int> idx(counts_.size());
  for (int a = static_cast<int>(counts_.size()) - 1; a >= 0; --a) {
    idx[a] = static_cast<int>(index % counts_[a]);
    index /= counts_[a];
  }
  return idx;
}

double Grid::node(int axis, int k) const {
  if (counts_[axis] == 1) return 0.5 * (box_.lower[axis] + box_.upper[axis]);
  double t = static_cast<double>(k) / (counts_[axis] - 1);
  return box_.lower[axis] + t * (box_.upper[axis] - box_.lower[axis]);
}

Vec Grid::point(std::size_t index) const {
  auto idx = multi_index(index);
  Vec x(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) x(a) = node(static_cast<int>(a), idx[a]);
  return x;
}

}  // namespace riemobs
