#pragma once

#include <Eigen/Dense>

namespace tdl {

using Index = Eigen::Index;

/* Row-major so that row p of a patch matrix is the contiguous embedding of patch p. */
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXd = RowMatrix<double>;

struct GridShape {
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  Index flat(Index row, Index col) const { return row * cols + col; }
  bool operator==(const GridShape&) const = default;
};

}  // namespace tdl
