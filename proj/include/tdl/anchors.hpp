#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "tdl/error.hpp"
#include "tdl/types.hpp"

namespace tdl {

/* K class-text embeddings of dimension d, one per row, in class order. */
template <typename Scalar>
struct RawEmbeddingMatrix {
  RowMatrix<Scalar> rows;
  std::vector<std::string> class_names;

  Index num_classes() const { return rows.rows(); }
  Index dim() const { return rows.cols(); }

  void validate() const {
    if (num_classes() < 2)
      throw Error(ErrorCode::InvalidConfig, "need at least two classes");
    if (dim() < 1) throw Error(ErrorCode::InvalidConfig, "embedding dimension must be positive");
    if (static_cast<Index>(class_names.size()) != num_classes())
      throw Error(ErrorCode::DimensionMismatch, "class name count differs from row count");
    if (!rows.allFinite()) throw Error(ErrorCode::InvalidConfig, "non-finite embedding value");
    std::set<std::string> unique(class_names.begin(), class_names.end());
    if (unique.size() != class_names.size())
      throw Error(ErrorCode::InvalidConfig, "duplicate class names");
  }
};

/* Frozen class anchors. Rows are unit-norm; when orthogonalized() they are
 * also mutually orthogonal. Immutable after construction. */
template <typename Scalar>
class AnchorSet {
 public:
  AnchorSet(RowMatrix<Scalar> anchors, std::vector<std::string> class_names, bool orthogonalized)
      : anchors_(std::move(anchors)),
        class_names_(std::move(class_names)),
        orthogonalized_(orthogonalized) {
    if (static_cast<Index>(class_names_.size()) != anchors_.rows())
      throw Error(ErrorCode::DimensionMismatch, "class name count differs from anchor count");
  }

  /// Raw embeddings used as anchors without decorrelation; rows are L2-normalized.
  static AnchorSet from_raw(const RawEmbeddingMatrix<Scalar>& raw) {
    raw.validate();
    RowMatrix<Scalar> rows = raw.rows;
    for (Index k = 0; k < rows.rows(); ++k) {
      const Scalar norm = rows.row(k).norm();
      if (norm < Scalar(1e-12)) throw Error(ErrorCode::ZeroVector, "zero class embedding");
      rows.row(k) /= norm;
    }
    return AnchorSet(std::move(rows), raw.class_names, false);
  }

  const RowMatrix<Scalar>& matrix() const { return anchors_; }
  auto anchor(Index k) const { return anchors_.row(k); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  Index num_classes() const { return anchors_.rows(); }
  Index dim() const { return anchors_.cols(); }
  bool orthogonalized() const { return orthogonalized_; }

  /// Same anchors with classes reordered: new class i is old class perm[i].
  AnchorSet permuted(const std::vector<Index>& perm) const {
    RowMatrix<Scalar> rows(anchors_.rows(), anchors_.cols());
    std::vector<std::string> names(class_names_.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
      rows.row(static_cast<Index>(i)) = anchors_.row(perm[i]);
      names[i] = class_names_[static_cast<std::size_t>(perm[i])];
    }
    return AnchorSet(std::move(rows), std::move(names), orthogonalized_);
  }

 private:
  RowMatrix<Scalar> anchors_;
  std::vector<std::string> class_names_;
  bool orthogonalized_;
};

/* Orthonormal anchors spanning the same subspace as the raw rows, in the same
 * class order. The triangular factor is forced to a non-negative diagonal so
 * the result is unique. */
template <typename Scalar>
AnchorSet<Scalar> orthogonalize(const RawEmbeddingMatrix<Scalar>& raw) {
  raw.validate();
  const Index k = raw.num_classes();
  const Index d = raw.dim();
  if (k > d)
    throw Error(ErrorCode::DimensionMismatch,
                "cannot orthogonalize " + std::to_string(k) + " anchors in dimension " +
                    std::to_string(d));

  using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const ColMatrix columns = raw.rows.transpose();
  Eigen::HouseholderQR<ColMatrix> qr(columns);
  ColMatrix q = qr.householderQ() * ColMatrix::Identity(d, k);
  const ColMatrix& packed = qr.matrixQR();

  Scalar largest = 0;
  Scalar smallest = std::numeric_limits<Scalar>::infinity();
  for (Index j = 0; j < k; ++j) {
    const Scalar diag = std::abs(packed(j, j));
    largest = std::max(largest, diag);
    smallest = std::min(smallest, diag);
  }
  if (!(smallest >= Scalar(1e-10) * largest) || largest == Scalar(0))
    throw Error(ErrorCode::RankDeficient, "class embeddings are linearly dependent");

  for (Index j = 0; j < k; ++j)
    if (packed(j, j) < Scalar(0)) q.col(j) = -q.col(j);

  return AnchorSet<Scalar>(q.transpose(), raw.class_names, true);
}

/// Dot product of v (optionally L2-normalized) with anchor k.
template <typename Derived>
typename Derived::Scalar score(const Eigen::MatrixBase<Derived>& v, Index k,
                               const AnchorSet<typename Derived::Scalar>& anchors,
                               bool normalize = true) {
  using Scalar = typename Derived::Scalar;
  if (k < 0 || k >= anchors.num_classes())
    throw Error(ErrorCode::InvalidConfig, "class index out of range");
  if (v.size() != anchors.dim())
    throw Error(ErrorCode::DimensionMismatch, "vector dimension differs from anchor dimension");
  const Scalar dot = anchors.anchor(k).dot(v.derived().transpose());
  if (!normalize) return dot;
  const Scalar norm = v.norm();
  if (norm < Scalar(1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  return dot / norm;
}

/// Scores of v against all anchors.
template <typename Derived>
Vector<typename Derived::Scalar> scores(const Eigen::MatrixBase<Derived>& v,
                                        const AnchorSet<typename Derived::Scalar>& anchors,
                                        bool normalize = true) {
  using Scalar = typename Derived::Scalar;
  if (v.size() != anchors.dim())
    throw Error(ErrorCode::DimensionMismatch, "vector dimension differs from anchor dimension");
  Vector<Scalar> out = anchors.matrix() * v.derived();
  if (normalize) {
    const Scalar norm = v.norm();
    if (norm < Scalar(1e-12)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
    out /= norm;
  }
  return out;
}

/// Numerically stable softmax.
template <typename Derived>
Vector<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar top = logits.maxCoeff();
  Vector<Scalar> out = (logits.array() - top).exp().matrix();
  return out / out.sum();
}

template <typename Derived>
Vector<typename Derived::Scalar> class_probabilities(
    const Eigen::MatrixBase<Derived>& v, const AnchorSet<typename Derived::Scalar>& anchors,
    double temperature = 1.0, bool normalize = true) {
  using Scalar = typename Derived::Scalar;
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be positive");
  const Vector<Scalar> logits = scores(v, anchors, normalize) / Scalar(temperature);
  return softmax(logits);
}

}  // namespace tdl
