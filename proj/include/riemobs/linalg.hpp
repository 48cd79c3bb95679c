#pragma once

#include <Eigen/Dense>

#include <vector>

namespace riemobs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Largest state dimension supported by the stack-allocated jets.
inline constexpr int kMaxDim = 8;

/// Mirror the upper triangle onto the lower one (bitwise symmetric result).
inline Mat mirror_upper(Mat m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

/// Eigenvalues (ascending) of the explicitly symmetrized matrix.
inline Vec sym_eigenvalues(const Mat& m) {
  if (m.rows() == 0) return Vec();
  Mat s = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double lambda_max(const Mat& m) { return sym_eigenvalues(m).maxCoeff(); }
inline double lambda_min(const Mat& m) { return sym_eigenvalues(m).minCoeff(); }

/// Flip sign so that the first entry of largest magnitude is positive.
inline Vec canonical_sign(Vec v) {
  Eigen::Index k = 0;
  if (v.size() == 0) return v;
  v.cwiseAbs().maxCoeff(&k);
  if (v(k) < 0) v = -v;
  return v;
}

inline std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

inline Vec from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace riemobs
