#pragma once

#include "poisonlab/common.hpp"
#include "poisonlab/random.hpp"

#include <doctest.h>

#include <filesystem>

namespace test {

using namespace poisonlab;

inline Matrix gaussian(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<Scalar> g(0.0, 1.0);
  return Matrix::NullaryExpr(rows, cols, [&] { return g(rng); });
}

/// y = X w + noise with w ~ N(0, 1).
inline Dataset linear_data(Index n, Index m, Scalar noise, Rng& rng) {
  Dataset d;
  d.features = gaussian(n, m, rng);
  const Vector w = gaussian(m, 1, rng);
  d.labels = d.features * w + noise * Vector(gaussian(n, 1, rng));
  return d;
}

/// Ordinary least squares with an intercept; returns (weights..., bias).
inline Vector ols(const Dataset& d) {
  Matrix A(d.size(), d.num_features() + 1);
  A << d.features, Vector::Ones(d.size());
  return A.colPivHouseholderQr().solve(d.labels);
}

inline Scalar rel_diff(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "poisonlab-unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

} // namespace test
