#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace poisonlab {

using Scalar = double;
using Index = Eigen::Index;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using IndexList = std::vector<Index>;

/// Base error for every failure raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Feature matrix (one sample per row) and continuous labels.
struct Dataset {
  Matrix features;
  Vector labels;
  std::vector<std::string> column_names;

  Index size() const { return labels.size(); }
  Index num_features() const { return features.cols(); }
  bool empty() const { return labels.size() == 0; }

  /// Rows picked by `rows`, in that order.
  Dataset subset(const IndexList& rows) const;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

/// Complement of `rows` inside [0, n), ascending.
IndexList complement(const IndexList& rows, Index n);

} // namespace poisonlab
