#pragma once

#include <Eigen/Core>
#include <compare>
#include <map>
#include <span>
#include <vector>

#include "semb/embedding.hpp"
#include "semb/mesh.hpp"

namespace semb {

/// Identifies a learnable parameter block: a category's ehat or a scene's pixel field.
struct BlockId {
  enum class Kind { Ehat, Field };
  Kind kind = Kind::Ehat;
  int index = 0;

  auto operator<=>(const BlockId&) const = default;
};

std::string block_name(const BlockId& id);

struct LossValue {
  double value = 0.0;
  std::map<BlockId, Eigen::MatrixXd> gradients;

  /// this += weight * other, values and gradients alike.
  void accumulate(const LossValue& other, double weight = 1.0);
};

/// Sparse dense-pose supervision: pixel (row, col) of scene `scene_id` depicts vertex `vertex`.
struct Annotation {
  int scene_id = 0;
  int category_id = 0;
  int row = 0;
  int col = 0;
  int vertex = 0;
};

/// Mesh-level supervision: source vertex should map onto target vertex.
struct VertexAnchor {
  int source_category = 0;
  int source_vertex = 0;
  int target_category = 0;
  int target_vertex = 0;
};

/// Row scaling applied to the image cycle.
enum class CycleNormalization { Literal, SumOnly };

// Embeddings are indexed by category id, fields and geodesics likewise by scene id / category id.

LossValue loss_sup(std::span<const Annotation> annotations, std::span<const CategoryEmbedding> embeddings,
                   std::span<const PixelField> fields, std::span<const GeodesicMatrix> geodesics,
                   Similarity mode = Similarity::NegInner);

/// Geodesic-weighted expectation of p(target vertex | source vertex), averaged over anchors.
LossValue loss_anchor(std::span<const VertexAnchor> anchors, std::span<const CategoryEmbedding> embeddings,
                      std::span<const GeodesicMatrix> geodesics, Similarity mode = Similarity::NegInner);

/// Mesh cycle m -> n -> m. Returns M with M(k, t) = p(X^m_k | X^m_t); columns sum to 1.
/// `p_m_given_n` is K^n x K^m (queries on n), `p_n_given_m` is K^m x K^n.
Eigen::MatrixXd cycle_mesh(const CorrespondenceMatrix& p_m_given_n, const CorrespondenceMatrix& p_n_given_m);

LossValue loss_m2m(const CategoryEmbedding& emb_m, const CategoryEmbedding& emb_n, const GeodesicMatrix& geo_m,
                   Similarity mode = Similarity::NegInner);

/// Image cycle pixels -> mesh -> pixels. Returns C with C(x, y) = p(y | x).
/// With Literal normalization the 1/K^m factor is applied, so rows sum to 1/K^m.
/// `p_pix_given_vert` is K x N (queries are vertices), `p_vert_given_pix` is N x K.
Eigen::MatrixXd cycle_image(const CorrespondenceMatrix& p_pix_given_vert, const CorrespondenceMatrix& p_vert_given_pix,
                            Index K_m, CycleNormalization normalization = CycleNormalization::Literal);

LossValue loss_i2m(const CategoryEmbedding& emb, const PixelField& field, const std::vector<Index>& pixels,
                   const Eigen::MatrixXd& d_image, Similarity mode = Similarity::NegInner,
                   CycleNormalization normalization = CycleNormalization::Literal);

/// Mean of loss_i2m over every registered category, not only the field's own.
LossValue loss_i2m_all(std::span<const CategoryEmbedding> embeddings, const PixelField& field,
                       const std::vector<Index>& pixels, const Eigen::MatrixXd& d_image,
                       Similarity mode = Similarity::NegInner,
                       CycleNormalization normalization = CycleNormalization::Literal);

enum class I2mVariant { GtClass, All };

struct LossWeights {
  double sup = 1.0;
  double m2m = 1.0;
  double i2m = 1.0;
  I2mVariant i2m_variant = I2mVariant::GtClass;
  CycleNormalization i2m_normalization = CycleNormalization::Literal;
};

/// Read-only view of everything a loss evaluation needs.
struct ProblemState {
  std::span<const CategoryEmbedding> embeddings;
  std::span<const PixelField> fields;
  std::span<const GeodesicMatrix> geodesics;
  std::span<const Annotation> annotations;
  std::span<const VertexAnchor> anchors;
  std::span<const std::vector<Index>> pixel_samples;  // one subsample per field
  Similarity mode = Similarity::NegInner;
};

struct TotalLoss {
  LossValue total;
  double sup = 0.0;  // unweighted term values
  double m2m = 0.0;
  double i2m = 0.0;
};

/// sup + w_m2m / (M (M - 1)) * sum_{m != n} L^{mn} + w_i2m / #scenes * sum_scenes L^{Im}.
/// The supervised term is loss_sup over pixel annotations plus loss_anchor over vertex anchors.
TotalLoss loss_total(const ProblemState& state, const LossWeights& weights = {});

}  // namespace semb
