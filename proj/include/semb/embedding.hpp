#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string_view>
#include <vector>

#include "semb/error.hpp"
#include "semb/spectral.hpp"

namespace semb {

/// Score used inside the correspondence softmax.
///   NegInner   -<a, b>        (literal form of the probabilistic kernel)
///   Inner       <a, b>
///   NegSqDist  -|a - b|^2
enum class Similarity { NegInner, Inner, NegSqDist };

std::string_view to_string(Similarity mode);
Similarity parse_similarity(std::string_view name);

enum class ObjectKind { Mesh, Image };

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Score matrix S with S(l, k) = score(target k, query l). Targets are K x D, queries L x D.
template <typename DerivedT, typename DerivedQ>
Eigen::Matrix<typename DerivedT::Scalar, Eigen::Dynamic, Eigen::Dynamic> similarity_scores(
    const Eigen::MatrixBase<DerivedT>& targets, const Eigen::MatrixBase<DerivedQ>& queries, Similarity mode) {
  using Scalar = typename DerivedT::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (targets.cols() != queries.cols()) throw ContractError("embedding dimensions differ between targets and queries");
  Mat inner = queries * targets.transpose();
  switch (mode) {
    case Similarity::NegInner:
      return -inner;
    case Similarity::Inner:
      return inner;
    case Similarity::NegSqDist: {
      const auto qn = queries.rowwise().squaredNorm();
      const auto tn = targets.rowwise().squaredNorm();
      Mat s = Scalar(2) * inner;
      s.colwise() -= qn;
      s.rowwise() -= tn.transpose();
      return s;
    }
  }
  return inner;
}

/// Row-wise softmax with the row maximum subtracted before exponentiation.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> softmax_rows(
    const Eigen::MatrixBase<Derived>& scores) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p = scores;
  for (Index r = 0; r < p.rows(); ++r) {
    const Scalar row_max = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - row_max).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Row-stochastic matrix of p(target k | query l); rows index queries.
struct CorrespondenceMatrix {
  Eigen::MatrixXd probs;
  ObjectKind query_kind = ObjectKind::Mesh;
  ObjectKind target_kind = ObjectKind::Mesh;
  Similarity mode = Similarity::NegInner;

  Index num_queries() const { return probs.rows(); }
  Index num_targets() const { return probs.cols(); }
};

CorrespondenceMatrix correspondence(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& queries,
                                    Similarity mode = Similarity::NegInner, ObjectKind query_kind = ObjectKind::Mesh,
                                    ObjectKind target_kind = ObjectKind::Mesh);

/// Back-propagates dLoss/dProbs through the softmax and the score function,
/// accumulating into `grad_targets` (K x D) and `grad_queries` (L x D).
void correspondence_backward(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& queries,
                             const Eigen::MatrixXd& probs, const Eigen::MatrixXd& grad_probs, Similarity mode,
                             Eigen::Ref<Eigen::MatrixXd> grad_targets, Eigen::Ref<Eigen::MatrixXd> grad_queries);

/// Compressed per-category embedding: E = U * ehat, with E cached.
class CategoryEmbedding {
 public:
  CategoryEmbedding(std::shared_ptr<const SpectralBasis> basis, Eigen::MatrixXd ehat, int category_id = 0);

  /// i.i.d. normal initialization of ehat.
  static CategoryEmbedding random(std::shared_ptr<const SpectralBasis> basis, Index D, std::mt19937_64& rng,
                                  double sigma = 0.1, int category_id = 0);

  const Eigen::MatrixXd& ehat() const { return ehat_; }
  const Eigen::MatrixXd& expanded() const { return expanded_; }
  const SpectralBasis& basis() const { return *basis_; }
  const std::shared_ptr<const SpectralBasis>& basis_ptr() const { return basis_; }
  Index dim() const { return ehat_.cols(); }
  Index num_vertices() const { return basis_->num_vertices(); }
  int category_id() const { return category_id_; }

  void set_ehat(Eigen::MatrixXd ehat);

 private:
  std::shared_ptr<const SpectralBasis> basis_;
  Eigen::MatrixXd ehat_;
  Eigen::MatrixXd expanded_;
  int category_id_ = 0;
};

/// E = U * ehat computed afresh (does not read the cache).
Eigen::MatrixXd expand(const CategoryEmbedding& embedding);

/// Learnable per-pixel embedding grid. Row r * width + c of `grid` holds pixel (r, c).
struct PixelField {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd grid;
  Mask mask;
  int scene_id = 0;
  int category_id = 0;

  PixelField() = default;
  PixelField(Eigen::MatrixXd grid, Mask mask, int scene_id, int category_id);

  static PixelField random(const Mask& mask, Index D, int scene_id, int category_id, std::mt19937_64& rng,
                           double sigma = 0.1);

  Index dim() const { return grid.cols(); }
  Index raster(int row, int col) const { return static_cast<Index>(row) * width + col; }
  bool masked(Index raster_index) const { return mask(raster_index / width, raster_index % width); }

  /// Raster indices of masked pixels in ascending order.
  std::vector<Index> masked_pixels() const;
};

/// n distinct masked pixels (raster indices), uniform without replacement.
std::vector<Index> sample_pixels(const PixelField& field, Index n, std::uint64_t seed);

/// Pairwise Euclidean distance of pixel centres in units of max(height, width).
Eigen::MatrixXd image_distance(const std::vector<Index>& pixels, int height, int width);

/// Rows of the field grid at the given raster indices.
Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& grid, const std::vector<Index>& rows);

}  // namespace semb
